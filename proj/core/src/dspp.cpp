#include "dsppnet/dspp.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "dsppnet/init.hpp"

namespace dsppnet {

namespace {

void check_tap(const StageTap& tap) {
  if (tap.height < 1 || tap.width < 1) {
    throw std::invalid_argument("stage tap " + std::to_string(tap.stage) +
                                " has non-positive resolution");
  }
  if (tap.channels < 1) {
    throw std::invalid_argument("stage tap " + std::to_string(tap.stage) +
                                " has non-positive channel count");
  }
  if (tap.stride < 1) {
    throw std::invalid_argument("stage tap " + std::to_string(tap.stage) +
                                " has non-positive stride");
  }
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const RateEntry& RateSchedule::entry_for_stage(int stage) const {
  for (const RateEntry& e : entries) {
    if (e.stage == stage) return e;
  }
  throw std::invalid_argument("no rate entry for stage " + std::to_string(stage));
}

RateSchedule compute_rates(std::span<const StageTap> taps, int alpha) {
  if (taps.empty()) {
    throw std::invalid_argument("compute_rates: tap list is empty");
  }
  if (alpha < 1) {
    throw std::invalid_argument("compute_rates: alpha must be >= 1");
  }
  for (const StageTap& t : taps) check_tap(t);

  // Smallest pixel count anchors the schedule; first tap wins ties.
  std::size_t min_i = 0;
  std::int64_t min_px = static_cast<std::int64_t>(taps[0].height) * taps[0].width;
  for (std::size_t i = 1; i < taps.size(); ++i) {
    const std::int64_t px = static_cast<std::int64_t>(taps[i].height) * taps[i].width;
    if (px < min_px) {
      min_px = px;
      min_i = i;
    }
  }

  RateSchedule out;
  out.alpha = alpha;
  out.min_height = taps[min_i].height;
  out.min_width = taps[min_i].width;
  for (const StageTap& t : taps) {
    const std::int64_t px = static_cast<std::int64_t>(t.height) * t.width;
    RateEntry e;
    e.stage = t.stage;
    // Taps matching the smallest pixel count get exactly alpha: the ratio is
    // computed before the square root so px == min_px yields sqrt(1) == 1.
    e.unrounded_rate =
        static_cast<double>(alpha) *
        std::sqrt(static_cast<double>(px) / static_cast<double>(min_px));
    e.rate = std::max(1, static_cast<int>(std::floor(e.unrounded_rate + 0.5)));
    out.entries.push_back(e);
  }
  return out;
}

int receptive_span(const StageTap& tap, int rate, int kernel) {
  check_tap(tap);
  if (rate < 1) {
    throw std::invalid_argument("receptive_span: rate must be >= 1");
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw std::invalid_argument("receptive_span: kernel must be odd and >= 1");
  }
  return tap.stride * ((kernel - 1) * rate + 1);
}

std::string schedule_csv(std::span<const StageTap> taps, const RateSchedule& schedule) {
  if (taps.size() != schedule.entries.size()) {
    throw std::invalid_argument("schedule_csv: tap/schedule length mismatch");
  }
  std::string out = "stage_index,H,W,stride,unrounded_rate,rate\n";
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const StageTap& t = taps[i];
    const RateEntry& e = schedule.entries[i];
    if (t.stage != e.stage) {
      throw std::invalid_argument("schedule_csv: tap/schedule stage mismatch");
    }
    out += std::to_string(t.stage) + "," + std::to_string(t.height) + "," +
           std::to_string(t.width) + "," + std::to_string(t.stride) + "," +
           fmt_double(e.unrounded_rate) + "," + std::to_string(e.rate) + "\n";
  }
  return out;
}

DsppParams init_dspp_params(std::span<const StageTap> taps, int branch_channels,
                            Rng& rng) {
  if (taps.empty()) {
    throw std::invalid_argument("init_dspp_params: tap list is empty");
  }
  if (branch_channels < 1) {
    throw std::invalid_argument("init_dspp_params: branch_channels must be >= 1");
  }
  DsppParams p;
  p.branch_channels = branch_channels;
  for (const StageTap& t : taps) {
    check_tap(t);
    DsppParams::Branch b;
    b.weights = kaiming_uniform({branch_channels, t.channels, 3, 3}, t.channels * 9, rng);
    b.bias = Tensor::zeros({branch_channels});
    p.branches.push_back(std::move(b));
  }
  const int fused_in = static_cast<int>(taps.size()) * branch_channels;
  p.fuse_weights = kaiming_uniform({branch_channels, fused_in, 1, 1}, fused_in, rng);
  p.fuse_bias = Tensor::zeros({branch_channels});
  return p;
}

NodeId dspp_forward(Graph& g, std::span<const NodeId> features,
                    const RateSchedule& schedule, const DsppNodes& nodes,
                    std::string_view label) {
  const std::string who(label);
  if (features.empty()) {
    throw std::invalid_argument(who + ": no input features");
  }
  if (features.size() != schedule.entries.size() ||
      features.size() != nodes.branches.size()) {
    throw std::invalid_argument(
        who + ": feature/schedule/parameter count mismatch (" +
        std::to_string(features.size()) + " features, " +
        std::to_string(schedule.entries.size()) + " rates, " +
        std::to_string(nodes.branches.size()) + " branches)");
  }

  std::vector<NodeId> resized;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const RateEntry& e = schedule.entries[i];
    const Tensor& f = g.value(features[i]);
    if (f.rank() != 4) {
      throw std::invalid_argument(who + ": feature " + std::to_string(i) +
                                  " must be [N,C,H,W], got " + f.shape_str());
    }
    Conv2dSpec spec;
    spec.in_channels = f.dim(1);
    spec.out_channels = nodes.branch_channels;
    spec.kernel_h = 3;
    spec.kernel_w = 3;
    spec.stride = 1;
    spec.dilation = e.rate;
    spec.padding = Conv2dSpec::same_padding(3, e.rate);

    const std::string branch = who + "/branch" + std::to_string(e.stage);
    NodeId y = conv2d(g, features[i], nodes.branches[i].weights,
                      nodes.branches[i].bias, spec, branch);
    y = relu(g, y, branch);
    y = resize_bilinear(g, y, schedule.min_height, schedule.min_width, branch);
    resized.push_back(y);
  }

  NodeId cat = concat_channels(g, resized, who + "/concat");
  Conv2dSpec fuse;
  fuse.in_channels = static_cast<int>(features.size()) * nodes.branch_channels;
  fuse.out_channels = nodes.branch_channels;
  fuse.kernel_h = 1;
  fuse.kernel_w = 1;
  fuse.stride = 1;
  fuse.dilation = 1;
  fuse.padding = 0;
  NodeId fused = conv2d(g, cat, nodes.fuse_weights, nodes.fuse_bias, fuse, who + "/fuse");
  return relu(g, fused, who + "/fuse");
}

}  // namespace dsppnet
