#include <cmath>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dsppnet/dspp.hpp"
#include "dsppnet/graph.hpp"
#include "dsppnet/ops.hpp"
#include "dsppnet/random.hpp"
#include "oracles.hpp"

using dsppnet::DsppNodes;
using dsppnet::DsppParams;
using dsppnet::Graph;
using dsppnet::NodeId;
using dsppnet::RateSchedule;
using dsppnet::Rng;
using dsppnet::StageTap;
using dsppnet::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

DsppNodes to_nodes(Graph& g, const DsppParams& params) {
  DsppNodes nodes;
  for (const auto& br : params.branches) {
    nodes.branches.push_back({g.constant(br.weights), g.constant(br.bias)});
  }
  nodes.fuse_weights = g.constant(params.fuse_weights);
  nodes.fuse_bias = g.constant(params.fuse_bias);
  nodes.branch_channels = params.branch_channels;
  return nodes;
}

Tensor relu_copy(Tensor t) {
  for (auto& v : t.values()) v = v > 0.0 ? v : 0.0;
  return t;
}

}  // namespace

TEST_CASE("compute_rates: the published pyramid gives rates 12, 6, 3") {
  const std::vector<StageTap> taps{
      {4, 56, 56, 64, 4}, {5, 28, 28, 128, 8}, {6, 14, 14, 256, 16}};
  RateSchedule s = dsppnet::compute_rates(taps, 3);
  REQUIRE(s.entries.size() == 3);
  CHECK(s.entries[0].rate == 12);
  CHECK(s.entries[1].rate == 6);
  CHECK(s.entries[2].rate == 3);
  // Integer-square pixel ratios make the unrounded values exact.
  CHECK(s.entries[0].unrounded_rate == 12.0);
  CHECK(s.entries[1].unrounded_rate == 6.0);
  CHECK(s.entries[2].unrounded_rate == 3.0);
  CHECK(s.min_height == 14);
  CHECK(s.min_width == 14);
  CHECK(s.alpha == 3);
}

TEST_CASE("compute_rates: alpha scales linearly") {
  const std::vector<StageTap> taps{
      {4, 56, 56, 64, 4}, {5, 28, 28, 128, 8}, {6, 14, 14, 256, 16}};
  RateSchedule s = dsppnet::compute_rates(taps, 1);
  CHECK(s.entries[0].rate == 4);
  CHECK(s.entries[1].rate == 2);
  CHECK(s.entries[2].rate == 1);
}

TEST_CASE("compute_rates: a single tap gets exactly alpha") {
  const std::vector<StageTap> taps{{6, 13, 9, 32, 32}};
  RateSchedule s = dsppnet::compute_rates(taps, 3);
  REQUIRE(s.entries.size() == 1);
  CHECK(s.entries[0].unrounded_rate == 3.0);
  CHECK(s.entries[0].rate == 3);
}

TEST_CASE("compute_rates: non-square taps with exact square ratio") {
  const std::vector<StageTap> taps{{5, 48, 32, 8, 8}, {6, 12, 8, 16, 16}};
  RateSchedule s = dsppnet::compute_rates(taps, 3);
  CHECK(s.entries[0].unrounded_rate == 12.0);  // 3 * sqrt(1536/96) = 3*4
  CHECK(s.entries[0].rate == 12);
  CHECK(s.entries[1].rate == 3);
  CHECK(s.min_height == 12);
  CHECK(s.min_width == 8);
}

TEST_CASE("compute_rates: ratio and minimum laws on random tap sets") {
  Rng rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const int count = static_cast<int>(rng.uniform_int(1, 5));
    std::vector<StageTap> taps;
    for (int i = 0; i < count; ++i) {
      taps.push_back({i + 1, static_cast<int>(rng.uniform_int(1, 64)),
                      static_cast<int>(rng.uniform_int(1, 64)), 8, 1 << i});
    }
    const int alpha = static_cast<int>(rng.uniform_int(1, 6));
    RateSchedule s = dsppnet::compute_rates(taps, alpha);

    std::int64_t min_px = static_cast<std::int64_t>(taps[0].height) * taps[0].width;
    for (const auto& t : taps) {
      min_px = std::min(min_px, static_cast<std::int64_t>(t.height) * t.width);
    }
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const auto& e = s.entries[i];
      CHECK(e.rate >= 1);
      const std::int64_t px =
          static_cast<std::int64_t>(taps[i].height) * taps[i].width;
      if (px == min_px) {
        CHECK(e.unrounded_rate == static_cast<double>(alpha));  // minimum law
      }
      for (std::size_t j = 0; j < taps.size(); ++j) {
        const double ratio = s.entries[i].unrounded_rate / s.entries[j].unrounded_rate;
        const double expect = std::sqrt(
            static_cast<double>(px) /
            (static_cast<double>(taps[j].height) * taps[j].width));
        CHECK(std::abs(ratio - expect) < 1e-12);  // ratio law
      }
    }
  }
}

TEST_CASE("compute_rates: rounding is half-up with a floor of one") {
  // 3 * sqrt(2) = 4.2426... -> 4;  3 * sqrt(8) = 8.485... -> 8;
  // alpha=1 with a tap 1.5x larger: sqrt(2.25) = 1.5 -> rounds up to 2.
  const std::vector<StageTap> taps{{5, 3, 3, 8, 8}, {6, 2, 2, 8, 16}};
  RateSchedule s = dsppnet::compute_rates(taps, 2);
  // unrounded = 2 * sqrt(9/4) = 3.0 exactly
  CHECK(s.entries[0].unrounded_rate == 3.0);
  CHECK(s.entries[0].rate == 3);

  const std::vector<StageTap> half{{5, 9, 1, 8, 8}, {6, 2, 2, 8, 16}};
  RateSchedule s2 = dsppnet::compute_rates(half, 2);
  // unrounded = 2 * sqrt(9/4) = 3.0; the 9x1 tap is larger than 2x2.
  CHECK(s2.entries[0].rate == 3);
  CHECK(s2.entries[1].unrounded_rate == 2.0);

  // An exact .5 rounds up: alpha=1 with pixel ratio 2.25 -> 1.5 -> 2.
  RateSchedule s3 = dsppnet::compute_rates(taps, 1);
  CHECK(s3.entries[0].unrounded_rate == 1.5);
  CHECK(s3.entries[0].rate == 2);
  CHECK(s3.entries[1].rate == 1);
}

TEST_CASE("compute_rates rejects bad inputs") {
  CHECK_THROWS_AS(dsppnet::compute_rates({}, 3), std::invalid_argument);
  const std::vector<StageTap> taps{{6, 4, 4, 8, 16}};
  CHECK_THROWS_AS(dsppnet::compute_rates(taps, 0), std::invalid_argument);
  const std::vector<StageTap> bad{{6, 0, 4, 8, 16}};
  CHECK_THROWS_AS(dsppnet::compute_rates(bad, 3), std::invalid_argument);
}

TEST_CASE("receptive_span arithmetic") {
  CHECK(dsppnet::receptive_span({1, 8, 8, 4, 1}, 1, 3) == 3);
  CHECK(dsppnet::receptive_span({4, 8, 8, 4, 4}, 3, 3) == 28);
  // Spans differ only by the additive stride term; the stride*rate leading
  // terms agree.
  const int span_a = dsppnet::receptive_span({5, 8, 8, 4, 8}, 6, 3);
  const int span_b = dsppnet::receptive_span({6, 4, 4, 4, 16}, 3, 3);
  CHECK(span_a == 104);
  CHECK(span_b == 112);
  CHECK(8 * 2 * 6 == 96);
  CHECK(16 * 2 * 3 == 96);
  CHECK_THROWS_AS(dsppnet::receptive_span({1, 8, 8, 4, 1}, 1, 4),
                  std::invalid_argument);
}

TEST_CASE("receptive-field constancy on power-of-two pyramids") {
  Rng rng(103);
  for (int levels = 1; levels <= 5; ++levels) {
    for (int trial = 0; trial < 20; ++trial) {
      const int hmin = static_cast<int>(rng.uniform_int(1, 8));
      const int wmin = static_cast<int>(rng.uniform_int(1, 8));
      const int stride_min = 1 << (levels - 1 + static_cast<int>(rng.uniform_int(0, 2)));
      std::vector<StageTap> taps;
      for (int m = levels - 1; m >= 0; --m) {
        taps.push_back({levels - m, hmin << m, wmin << m, 8, stride_min >> m});
      }
      const int alpha = static_cast<int>(rng.uniform_int(1, 4));
      RateSchedule s = dsppnet::compute_rates(taps, alpha);
      const double base = taps[0].stride * s.entries[0].unrounded_rate;
      for (std::size_t i = 1; i < taps.size(); ++i) {
        CHECK(std::abs(taps[i].stride * s.entries[i].unrounded_rate - base) < 1e-12);
      }
    }
  }
}

TEST_CASE("schedule_csv lists one row per tap with the documented header") {
  const std::vector<StageTap> taps{{5, 8, 8, 16, 8}, {6, 4, 4, 32, 16}};
  RateSchedule s = dsppnet::compute_rates(taps, 3);
  const std::string csv = dsppnet::schedule_csv(taps, s);
  CHECK(csv.rfind("stage_index,H,W,stride,unrounded_rate,rate\n", 0) == 0);
  CHECK(csv.find("\n5,8,8,8,6,6\n") != std::string::npos);
  CHECK(csv.find("\n6,4,4,16,3,3\n") != std::string::npos);
}

TEST_CASE("dspp_forward: delta branch kernel with selecting fusion is a ReLU") {
  Rng rng(107);
  const std::vector<StageTap> taps{{6, 4, 4, 2, 16}};
  RateSchedule schedule = dsppnet::compute_rates(taps, 3);

  const int p = 2;
  DsppParams params;
  params.branch_channels = p;
  Tensor bw = Tensor::zeros({p, 2, 3, 3});
  for (int o = 0; o < p; ++o) bw.at(((o * 2 + o) * 3 + 1) * 3 + 1) = 1.0;
  params.branches.push_back({bw, Tensor::zeros({p})});
  Tensor fw = Tensor::zeros({p, p, 1, 1});
  for (int o = 0; o < p; ++o) fw.at(o * p + o) = 1.0;
  params.fuse_weights = fw;
  params.fuse_bias = Tensor::zeros({p});

  Tensor x = random_tensor({1, 2, 4, 4}, rng);
  Graph g;
  DsppNodes nodes = to_nodes(g, params);
  const std::vector<NodeId> features{g.constant(x)};
  const Tensor& out = g.value(dsppnet::dspp_forward(g, features, schedule, nodes));
  Tensor expect = relu_copy(x);
  REQUIRE(out.same_shape(expect));
  for (std::int64_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == expect.at(i));
}

TEST_CASE("dspp_forward: zero weights and fuse bias b give a constant-b map") {
  const std::vector<StageTap> taps{{5, 6, 6, 3, 8}, {6, 3, 3, 4, 16}};
  RateSchedule schedule = dsppnet::compute_rates(taps, 3);
  const int p = 2;
  DsppParams params;
  params.branch_channels = p;
  params.branches.push_back({Tensor::zeros({p, 3, 3, 3}), Tensor::zeros({p})});
  params.branches.push_back({Tensor::zeros({p, 4, 3, 3}), Tensor::zeros({p})});
  params.fuse_weights = Tensor::zeros({p, 2 * p, 1, 1});
  params.fuse_bias = Tensor({2}, {0.75, 1.5});

  Rng rng(109);
  Graph g;
  DsppNodes nodes = to_nodes(g, params);
  const std::vector<NodeId> features{g.constant(random_tensor({1, 3, 6, 6}, rng)),
                                     g.constant(random_tensor({1, 4, 3, 3}, rng))};
  const Tensor& out = g.value(dsppnet::dspp_forward(g, features, schedule, nodes));
  CHECK(out.shape() == std::vector<int>{1, 2, 3, 3});
  for (int i = 0; i < 9; ++i) {
    CHECK(out.at(i) == 0.75);
    CHECK(out.at(9 + i) == 1.5);
  }
}

TEST_CASE("dspp_forward equals the straight-line oracle composition") {
  Rng rng(113);
  const std::vector<StageTap> taps{{5, 8, 8, 3, 8}, {6, 4, 4, 5, 16}};
  RateSchedule schedule = dsppnet::compute_rates(taps, 3);
  REQUIRE(schedule.entries[0].rate == 6);
  REQUIRE(schedule.entries[1].rate == 3);

  DsppParams params = dsppnet::init_dspp_params(taps, 4, rng);
  Tensor x1 = random_tensor({1, 3, 8, 8}, rng);
  Tensor x2 = random_tensor({1, 5, 4, 4}, rng);

  Graph g;
  DsppNodes nodes = to_nodes(g, params);
  const std::vector<NodeId> features{g.constant(x1), g.constant(x2)};
  const Tensor& out = g.value(dsppnet::dspp_forward(g, features, schedule, nodes));

  // Oracle chain: dilated conv -> relu -> resize -> concat -> 1x1 conv -> relu.
  dsppnet::Conv2dSpec spec1{3, 4, 3, 3, 1, 6, 6};
  dsppnet::Conv2dSpec spec2{5, 4, 3, 3, 1, 3, 3};
  Tensor b1 = relu_copy(oracles::conv2d_ref(x1, params.branches[0].weights,
                                            params.branches[0].bias, spec1));
  Tensor b2 = relu_copy(oracles::conv2d_ref(x2, params.branches[1].weights,
                                            params.branches[1].bias, spec2));
  Tensor b1s = oracles::bilinear_ref(b1, 4, 4);
  Tensor cat = Tensor::zeros({1, 8, 4, 4});
  for (int i = 0; i < 4 * 16; ++i) cat.at(i) = b1s.at(i);
  for (int i = 0; i < 4 * 16; ++i) cat.at(4 * 16 + i) = b2.at(i);
  dsppnet::Conv2dSpec fuse_spec{8, 4, 1, 1, 1, 1, 0};
  Tensor expect = relu_copy(
      oracles::conv2d_ref(cat, params.fuse_weights, params.fuse_bias, fuse_spec));

  REQUIRE(out.same_shape(expect));
  for (std::int64_t i = 0; i < out.size(); ++i) {
    CHECK(out.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-12));
  }
}

TEST_CASE("dspp_forward output resolution is the smallest tap for any count") {
  Rng rng(127);
  const std::vector<StageTap> taps{
      {4, 8, 8, 2, 4}, {5, 4, 4, 3, 8}, {6, 2, 2, 4, 16}};
  RateSchedule schedule = dsppnet::compute_rates(taps, 3);
  DsppParams params = dsppnet::init_dspp_params(taps, 3, rng);
  Graph g;
  DsppNodes nodes = to_nodes(g, params);
  const std::vector<NodeId> features{g.constant(random_tensor({2, 2, 8, 8}, rng)),
                                     g.constant(random_tensor({2, 3, 4, 4}, rng)),
                                     g.constant(random_tensor({2, 4, 2, 2}, rng))};
  const Tensor& out = g.value(dsppnet::dspp_forward(g, features, schedule, nodes));
  CHECK(out.shape() == std::vector<int>{2, 3, 2, 2});
}

TEST_CASE("dspp_forward rejects a feature/schedule count mismatch") {
  Rng rng(131);
  const std::vector<StageTap> taps{{5, 4, 4, 2, 8}, {6, 2, 2, 2, 16}};
  RateSchedule schedule = dsppnet::compute_rates(taps, 3);
  DsppParams params = dsppnet::init_dspp_params(taps, 2, rng);
  Graph g;
  DsppNodes nodes = to_nodes(g, params);
  const std::vector<NodeId> features{g.constant(random_tensor({1, 2, 4, 4}, rng))};
  CHECK_THROWS_AS(dsppnet::dspp_forward(g, features, schedule, nodes),
                  std::invalid_argument);
}

TEST_CASE("dspp_forward gradient passes finite differences") {
  Rng rng(137);
  const std::vector<StageTap> taps{{5, 4, 4, 2, 8}, {6, 2, 2, 3, 16}};
  RateSchedule schedule = dsppnet::compute_rates(taps, 2);
  DsppParams params = dsppnet::init_dspp_params(taps, 2, rng);
  Tensor x2 = random_tensor({1, 3, 2, 2}, rng);

  auto f = [&](Graph& g, NodeId x) {
    DsppNodes nodes = to_nodes(g, params);
    const std::vector<NodeId> features{x, g.constant(x2)};
    NodeId y = dsppnet::dspp_forward(g, features, schedule, nodes);
    return dsppnet::sum(g, dsppnet::mul(g, y, y));
  };
  CHECK(dsppnet::grad_check(f, random_tensor({1, 2, 4, 4}, rng), 1e-3) < 1e-4);
}
