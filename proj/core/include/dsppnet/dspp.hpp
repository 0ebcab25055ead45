#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsppnet/ops.hpp"
#include "dsppnet/random.hpp"

namespace dsppnet {

// One backbone feature map offered to the pyramid: its stage index, spatial
// resolution, channel count, and cumulative stride relative to the network
// input.
struct StageTap {
  int stage = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  int stride = 1;
};

struct RateEntry {
  int stage = 0;
  double unrounded_rate = 0.0;  // alpha * sqrt((H*W) / (Hmin*Wmin))
  int rate = 1;                 // round-half-up, clamped to >= 1
};

struct RateSchedule {
  int alpha = 0;
  std::vector<RateEntry> entries;  // same order as the taps
  int min_height = 0;              // resolution of the smallest tap
  int min_width = 0;

  const RateEntry& entry_for_stage(int stage) const;
};

// Resolution-proportional dilation rates: the smallest tap gets exactly
// alpha, and every other tap gets alpha scaled by the square root of its
// pixel-count ratio to the smallest, so the dilated receptive field covers a
// comparable image fraction at every resolution.  Rounding is half-up with a
// floor of 1.
RateSchedule compute_rates(std::span<const StageTap> taps, int alpha);

// Image-plane extent spanned by a k-tap dilated kernel on a feature map with
// the given cumulative stride: stride * ((k - 1) * rate + 1).
int receptive_span(const StageTap& tap, int rate, int kernel);

// "stage_index,H,W,stride,unrounded_rate,rate" rows, header included.
std::string schedule_csv(std::span<const StageTap> taps, const RateSchedule& schedule);

// Parameters of the pyramid: one 3x3 dilated branch per tap projecting to
// `branch_channels`, then a 1x1 fusion conv back to `branch_channels` after
// concatenation at the smallest tap resolution.
struct DsppParams {
  struct Branch {
    Tensor weights;  // [P, C_i, 3, 3]
    Tensor bias;     // [P]
  };
  std::vector<Branch> branches;
  Tensor fuse_weights;  // [P, B*P, 1, 1]
  Tensor fuse_bias;     // [P]
  int branch_channels = 0;
};

DsppParams init_dspp_params(std::span<const StageTap> taps, int branch_channels,
                            Rng& rng);

// Graph-node handles of the pyramid parameters within one Graph.
struct DsppNodes {
  struct Branch {
    NodeId weights, bias;
  };
  std::vector<Branch> branches;
  NodeId fuse_weights, fuse_bias;
  int branch_channels = 0;
};

// Branch i: 3x3 conv with dilation rate_i and padding rate_i (size
// preserving), ReLU, bilinear resize down to the smallest tap resolution.
// The resized branches are concatenated in tap order and fused by a 1x1 conv
// + ReLU.  Output: [N, P, Hmin, Wmin].
NodeId dspp_forward(Graph& g, std::span<const NodeId> features,
                    const RateSchedule& schedule, const DsppNodes& nodes,
                    std::string_view label = "dspp");

}  // namespace dsppnet
