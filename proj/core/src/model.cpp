#include "dsppnet/model.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "dsppnet/init.hpp"

namespace dsppnet {

void BackboneConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw std::invalid_argument("backbone config: " + what);
  };
  if (input_h < 1 || input_w < 1) bad("input extents must be >= 1");
  if (input_c < 1) bad("input channel count must be >= 1");
  for (int c : stage_channels) {
    // >= 4 keeps the attention gate's C/4 squeeze at least one channel wide.
    if (c < 4) bad("stage channel counts must be >= 4");
  }
  if (classes < 2) bad("classes must be >= 2");
}

void AblationConfig::validate() const {
  std::vector<int> s = dspp_stages;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
    throw std::invalid_argument("ablation config: duplicate pyramid stage");
  }
  if (s != dspp_stages) {
    throw std::invalid_argument("ablation config: pyramid stages must be ascending");
  }
  for (int st : dspp_stages) {
    if (st < 4 || st > 6) {
      throw std::invalid_argument("ablation config: pyramid stages must lie in {4,5,6}, got " +
                                  std::to_string(st));
    }
  }
}

std::string AblationConfig::stages_str() const {
  if (dspp_stages.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < dspp_stages.size(); ++i) {
    if (i) out += "+";
    out += std::to_string(dspp_stages[i]);
  }
  return out;
}

std::string AblationConfig::descriptor() const {
  return "dspp=" + stages_str() + ",cid=" + (use_cid ? "on" : "off");
}

std::vector<AblationConfig> ablation_matrix() {
  return {
      {{}, false},     {{}, true},       {{6}, false},
      {{6}, true},     {{5, 6}, true},   {{4, 5, 6}, true},
  };
}

std::array<std::pair<int, int>, 6> stage_extents(const BackboneConfig& backbone) {
  std::array<std::pair<int, int>, 6> out{};
  int h = backbone.input_h, w = backbone.input_w;
  out[0] = {h, w};  // stage 1 preserves resolution
  for (int s = 1; s < 6; ++s) {
    h = (h - 1) / 2 + 1;  // stride-2 conv with padding 1: ceil(h / 2)
    w = (w - 1) / 2 + 1;
    out[static_cast<std::size_t>(s)] = {h, w};
  }
  return out;
}

namespace {

Conv2dSpec stage_conv_spec(int in_c, int out_c, int stride) {
  Conv2dSpec s;
  s.in_channels = in_c;
  s.out_channels = out_c;
  s.kernel_h = 3;
  s.kernel_w = 3;
  s.stride = stride;
  s.dilation = 1;
  s.padding = 1;
  return s;
}

}  // namespace

Model build_model(const BackboneConfig& backbone, const AblationConfig& ablation,
                  std::uint64_t seed, int alpha, int branch_channels) {
  backbone.validate();
  ablation.validate();
  if (alpha < 1) {
    throw std::invalid_argument("build_model: alpha must be >= 1");
  }
  if (branch_channels < 1) {
    throw std::invalid_argument("build_model: branch_channels must be >= 1");
  }

  Model m;
  m.backbone_ = backbone;
  m.ablation_ = ablation;
  m.alpha_ = alpha;
  m.branch_channels_ = branch_channels;

  Rng rng(seed);
  auto push = [&m](std::string name, Tensor value) {
    m.params_.push_back({std::move(name), std::move(value)});
    return static_cast<int>(m.params_.size()) - 1;
  };

  for (int s = 1; s <= 6; ++s) {
    const int in_c = s == 1 ? backbone.input_c
                            : backbone.stage_channels[static_cast<std::size_t>(s - 2)];
    const int out_c = backbone.stage_channels[static_cast<std::size_t>(s - 1)];
    const std::string prefix = "stage" + std::to_string(s);
    Model::StageSlots& slots = m.stages_[static_cast<std::size_t>(s - 1)];
    slots.conv1_w = push(prefix + "/conv1/weights",
                         kaiming_uniform({out_c, in_c, 3, 3}, in_c * 9, rng));
    slots.conv1_b = push(prefix + "/conv1/bias", Tensor::zeros({out_c}));
    slots.conv2_w = push(prefix + "/conv2/weights",
                         kaiming_uniform({out_c, out_c, 3, 3}, out_c * 9, rng));
    slots.conv2_b = push(prefix + "/conv2/bias", Tensor::zeros({out_c}));
  }

  if (ablation.use_cid) {
    const int c1 = backbone.stage_channels[0];
    const int reduced = cid_reduced_channels(c1);
    m.cid_.reduce_w = push("cid/reduce/weights",
                           kaiming_uniform({reduced, c1, 1, 1}, c1, rng));
    m.cid_.reduce_b = push("cid/reduce/bias", Tensor::zeros({reduced}));
    m.cid_.project_w = push("cid/project/weights",
                            kaiming_uniform({1, reduced, 1, 1}, reduced, rng));
    m.cid_.project_b = push("cid/project/bias", Tensor::zeros({1}));
  }

  if (ablation.has_dspp()) {
    const auto extents = stage_extents(backbone);
    for (int st : ablation.dspp_stages) {
      StageTap tap;
      tap.stage = st;
      tap.height = extents[static_cast<std::size_t>(st - 1)].first;
      tap.width = extents[static_cast<std::size_t>(st - 1)].second;
      tap.channels = backbone.stage_channels[static_cast<std::size_t>(st - 1)];
      tap.stride = 1 << (st - 1);  // stage 1 is stride 1, each later stage doubles
      m.taps_.push_back(tap);
    }
    m.schedule_ = compute_rates(m.taps_, alpha);
    for (std::size_t i = 0; i < m.taps_.size(); ++i) {
      const StageTap& tap = m.taps_[i];
      const std::string prefix = "dspp/branch" + std::to_string(tap.stage);
      m.dspp_.branch_w.push_back(
          push(prefix + "/weights", kaiming_uniform({branch_channels, tap.channels, 3, 3},
                                                    tap.channels * 9, rng)));
      m.dspp_.branch_b.push_back(push(prefix + "/bias", Tensor::zeros({branch_channels})));
    }
    const int fused_in = static_cast<int>(m.taps_.size()) * branch_channels;
    m.dspp_.fuse_w = push("dspp/fuse/weights",
                          kaiming_uniform({branch_channels, fused_in, 1, 1}, fused_in, rng));
    m.dspp_.fuse_b = push("dspp/fuse/bias", Tensor::zeros({branch_channels}));
  }

  const int head_in = backbone.stage_channels[5] +
                      (ablation.has_dspp() ? branch_channels : 0);
  m.head_w_ = push("head/weights",
                   kaiming_uniform({backbone.classes, head_in}, head_in, rng));
  m.head_b_ = push("head/bias", Tensor::zeros({backbone.classes}));
  return m;
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const ParamSlot& p : params_) n += p.value.size();
  return n;
}

Model::Trace Model::forward_trace(Graph& g, const Tensor& batch, bool trainable) const {
  if (params_.empty()) {
    throw std::logic_error("forward_trace called on an unbuilt model");
  }
  if (batch.rank() != 4 || batch.dim(1) != backbone_.input_c ||
      batch.dim(2) != backbone_.input_h || batch.dim(3) != backbone_.input_w) {
    throw std::invalid_argument(
        "model input must be [N," + std::to_string(backbone_.input_c) + "," +
        std::to_string(backbone_.input_h) + "," + std::to_string(backbone_.input_w) +
        "], got " + batch.shape_str());
  }

  Trace t;
  t.param_ids.reserve(params_.size());
  for (const ParamSlot& p : params_) {
    t.param_ids.push_back(trainable ? g.parameter(p.value) : g.constant(p.value));
  }
  auto pid = [&t](int slot) { return t.param_ids[static_cast<std::size_t>(slot)]; };

  t.input = g.constant(batch);
  NodeId x = t.input;
  for (int s = 1; s <= 6; ++s) {
    const StageSlots& slots = stages_[static_cast<std::size_t>(s - 1)];
    const int in_c = s == 1 ? backbone_.input_c
                            : backbone_.stage_channels[static_cast<std::size_t>(s - 2)];
    const int out_c = backbone_.stage_channels[static_cast<std::size_t>(s - 1)];
    const std::string prefix = "stage" + std::to_string(s);

    x = conv2d(g, x, pid(slots.conv1_w), pid(slots.conv1_b),
               stage_conv_spec(in_c, out_c, s == 1 ? 1 : 2), prefix + "/conv1");
    x = relu(g, x, prefix + "/conv1");
    x = conv2d(g, x, pid(slots.conv2_w), pid(slots.conv2_b),
               stage_conv_spec(out_c, out_c, 1), prefix + "/conv2");
    x = relu(g, x, prefix + "/conv2");
    t.stage_out[static_cast<std::size_t>(s - 1)] = x;

    if (s == 1 && ablation_.use_cid) {
      CidNodes cid_nodes{pid(cid_.reduce_w), pid(cid_.reduce_b),
                         pid(cid_.project_w), pid(cid_.project_b)};
      t.cid_gate = attention_map(g, x, cid_nodes, "cid");
      x = mul_channel_broadcast(g, x, t.cid_gate, "cid/apply");
    }
  }

  NodeId backbone_gap = global_avg_pool(g, x, "head/gap");
  NodeId head_in = backbone_gap;
  if (ablation_.has_dspp()) {
    std::vector<NodeId> features;
    for (int st : ablation_.dspp_stages) {
      features.push_back(t.stage_out[static_cast<std::size_t>(st - 1)]);
    }
    DsppNodes nodes;
    nodes.branch_channels = branch_channels_;
    for (std::size_t i = 0; i < dspp_.branch_w.size(); ++i) {
      nodes.branches.push_back({pid(dspp_.branch_w[i]), pid(dspp_.branch_b[i])});
    }
    nodes.fuse_weights = pid(dspp_.fuse_w);
    nodes.fuse_bias = pid(dspp_.fuse_b);
    t.dspp_out = dspp_forward(g, features, schedule_, nodes, "dspp");

    NodeId dspp_gap = global_avg_pool(g, t.dspp_out, "dspp/gap");
    const std::array<NodeId, 2> parts{dspp_gap, backbone_gap};
    head_in = concat_channels(g, parts, "head/concat");
  }
  t.head_in = head_in;
  t.logits = dense(g, head_in, pid(head_w_), pid(head_b_), "head");
  return t;
}

Tensor Model::forward(const Tensor& batch) const {
  Graph g;
  const Trace t = forward_trace(g, batch, /*trainable=*/false);
  return g.value(t.logits);
}

void Model::reinit_head(int classes, std::uint64_t seed) {
  if (classes < 2) {
    throw std::invalid_argument("reinit_head: classes must be >= 2");
  }
  const int head_in = backbone_.stage_channels[5] +
                      (ablation_.has_dspp() ? branch_channels_ : 0);
  Rng rng(seed);
  backbone_.classes = classes;
  params_[static_cast<std::size_t>(head_w_)].value =
      kaiming_uniform({classes, head_in}, head_in, rng);
  params_[static_cast<std::size_t>(head_b_)].value = Tensor::zeros({classes});
}

std::string Model::describe() const {
  const auto extents = stage_extents(backbone_);
  std::string out;
  char line[160];
  auto add = [&](const std::string& name, const std::string& shape, std::int64_t n) {
    std::snprintf(line, sizeof(line), "%-18s %-14s %10lld\n", name.c_str(),
                  shape.c_str(), static_cast<long long>(n));
    out += line;
  };
  auto dims3 = [](int c, int h, int w) {
    return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  };
  auto slot_size = [this](int w, int b) {
    return slot(w).size() + slot(b).size();
  };

  std::snprintf(line, sizeof(line), "%-18s %-14s %10s\n", "layer", "output", "params");
  out += line;
  add("input", dims3(backbone_.input_c, backbone_.input_h, backbone_.input_w), 0);
  for (int s = 1; s <= 6; ++s) {
    const auto [h, w] = extents[static_cast<std::size_t>(s - 1)];
    const int c = backbone_.stage_channels[static_cast<std::size_t>(s - 1)];
    const StageSlots& slots = stages_[static_cast<std::size_t>(s - 1)];
    const std::string prefix = "stage" + std::to_string(s);
    add(prefix + "/conv1", dims3(c, h, w), slot_size(slots.conv1_w, slots.conv1_b));
    add(prefix + "/conv2", dims3(c, h, w), slot_size(slots.conv2_w, slots.conv2_b));
    if (s == 1 && ablation_.use_cid) {
      add("cid/gate", dims3(1, h, w),
          slot_size(cid_.reduce_w, cid_.reduce_b) +
              slot_size(cid_.project_w, cid_.project_b));
    }
  }
  if (ablation_.has_dspp()) {
    for (std::size_t i = 0; i < taps_.size(); ++i) {
      const RateEntry& e = schedule_.entries[i];
      std::snprintf(line, sizeof(line), "dspp/branch%d", taps_[i].stage);
      std::string name = line;
      add(name + "[r=" + std::to_string(e.rate) + "]",
          dims3(branch_channels_, schedule_.min_height, schedule_.min_width),
          slot_size(dspp_.branch_w[i], dspp_.branch_b[i]));
    }
    add("dspp/fuse", dims3(branch_channels_, schedule_.min_height, schedule_.min_width),
        slot_size(dspp_.fuse_w, dspp_.fuse_b));
  }
  add("head", std::to_string(backbone_.classes) + " logits",
      slot_size(head_w_, head_b_));
  std::snprintf(line, sizeof(line), "total parameters: %lld\n",
                static_cast<long long>(parameter_count()));
  out += line;
  return out;
}

}  // namespace dsppnet
