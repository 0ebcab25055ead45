#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsppnet/cid.hpp"
#include "dsppnet/dspp.hpp"
#include "dsppnet/graph.hpp"

namespace dsppnet {

// Shape of the six-stage backbone.  Every stage is two 3x3 convs with ReLU;
// stage 1 keeps the input resolution, stages 2..6 halve it (ceil division)
// with a stride-2 first conv.  There is no normalization layer anywhere.
struct BackboneConfig {
  int input_h = 64;
  int input_w = 64;
  int input_c = 1;
  std::array<int, 6> stage_channels{16, 32, 64, 96, 128, 160};
  int classes = 2;

  void validate() const;  // throws std::invalid_argument
};

// Which optional modules are attached.  `dspp_stages` selects the backbone
// stages (subset of {4,5,6}) whose outputs feed the pyramid; empty disables
// it.  `use_cid` toggles the spatial attention gate after stage 1.
struct AblationConfig {
  std::vector<int> dspp_stages;
  bool use_cid = false;

  void validate() const;
  bool has_dspp() const { return !dspp_stages.empty(); }
  std::string descriptor() const;  // e.g. "dspp=4+5+6,cid=on"
  std::string stages_str() const;  // "4+5+6", or "-" when empty
};

// The six module-placement rows exercised by the `ablate` command, from the
// bare backbone to the full configuration.
std::vector<AblationConfig> ablation_matrix();

// Spatial extent of every stage output for a given input size (ceil-halving
// chain starting at the stage-1 resolution).
std::array<std::pair<int, int>, 6> stage_extents(const BackboneConfig& backbone);

struct ParamSlot {
  std::string name;
  Tensor value;
};

class Model;

// Constructs a model with freshly initialized parameters.  Weights are
// fan-in-scaled uniform draws from Rng(seed) in a fixed construction order;
// biases start at zero, so an all-zero input yields all-zero logits.
Model build_model(const BackboneConfig& backbone, const AblationConfig& ablation,
                  std::uint64_t seed, int alpha = 3, int branch_channels = 64);

class Model {
 public:
  Model() = default;

  const BackboneConfig& backbone() const { return backbone_; }
  const AblationConfig& ablation() const { return ablation_; }
  int alpha() const { return alpha_; }
  int branch_channels() const { return branch_channels_; }

  // Pyramid inputs and their dilation-rate schedule; empty when the pyramid
  // is disabled.
  const std::vector<StageTap>& taps() const { return taps_; }
  const RateSchedule& schedule() const { return schedule_; }

  std::vector<ParamSlot>& params() { return params_; }
  const std::vector<ParamSlot>& params() const { return params_; }
  std::int64_t parameter_count() const;

  // Handles into one forward graph.
  struct Trace {
    NodeId input;
    std::array<NodeId, 6> stage_out{};  // block outputs (stage 1 pre-gate)
    NodeId cid_gate{};                  // [N,1,H,W]; invalid when cid is off
    NodeId dspp_out{};                  // invalid when the pyramid is off
    NodeId head_in{};
    NodeId logits{};
    std::vector<NodeId> param_ids;      // parallel to params()
  };

  // Builds the forward pass over `batch` [N,C,H,W].  When `trainable`,
  // parameters enter the graph as trainable nodes so backward() yields their
  // gradients; otherwise they are constants.
  Trace forward_trace(Graph& g, const Tensor& batch, bool trainable) const;

  // Convenience forward: logits [N, classes].
  Tensor forward(const Tensor& batch) const;

  // Replaces the classification head for a task with a different class
  // count; all other parameters are kept.
  void reinit_head(int classes, std::uint64_t seed);

  // Human-readable layer table with output shapes and parameter counts.
  std::string describe() const;

 private:
  friend Model build_model(const BackboneConfig&, const AblationConfig&,
                           std::uint64_t, int, int);

  struct StageSlots {
    int conv1_w = -1, conv1_b = -1, conv2_w = -1, conv2_b = -1;
  };
  struct CidSlots {
    int reduce_w = -1, reduce_b = -1, project_w = -1, project_b = -1;
  };
  struct DsppSlots {
    std::vector<int> branch_w, branch_b;
    int fuse_w = -1, fuse_b = -1;
  };

  const Tensor& slot(int idx) const { return params_[static_cast<std::size_t>(idx)].value; }

  BackboneConfig backbone_;
  AblationConfig ablation_;
  int alpha_ = 3;
  int branch_channels_ = 64;
  std::vector<StageTap> taps_;
  RateSchedule schedule_;
  std::vector<ParamSlot> params_;
  std::array<StageSlots, 6> stages_{};
  CidSlots cid_{};
  DsppSlots dspp_{};
  int head_w_ = -1, head_b_ = -1;
};

}  // namespace dsppnet
