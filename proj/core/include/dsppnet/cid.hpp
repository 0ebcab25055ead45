#pragma once

#include <string_view>

#include "dsppnet/ops.hpp"
#include "dsppnet/random.hpp"

namespace dsppnet {

// Channel width of the squeeze layer: ceil(C / 4), never below 1.
int cid_reduced_channels(int channels);

// Channel compression ratio across a 1x1 squeeze, in_channels / out_channels.
double attention_factor(int in_channels, int out_channels);

// Parameters of the spatial attention gate: a 1x1 squeeze to the reduced
// width, ReLU, and a 1x1 projection to a single channel that is passed
// through a sigmoid.
struct CidParams {
  Tensor reduce_weights;   // [M, C, 1, 1]
  Tensor reduce_bias;      // [M]
  Tensor project_weights;  // [1, M, 1, 1]
  Tensor project_bias;     // [1]
};

CidParams init_cid_params(int channels, Rng& rng);

struct CidNodes {
  NodeId reduce_weights, reduce_bias;
  NodeId project_weights, project_bias;
};

// m = sigmoid(conv1x1(relu(conv1x1(x)))) with shape [N,1,H,W]; every value
// lies in (0, 1).
NodeId attention_map(Graph& g, NodeId input, const CidNodes& nodes,
                     std::string_view label = "cid");

// input * broadcast(attention_map(input)).  Built on the same attention_map
// node, so the gate used here and the map reported for visualization are one
// and the same tensor.
NodeId cid_forward(Graph& g, NodeId input, const CidNodes& nodes,
                   std::string_view label = "cid");

}  // namespace dsppnet
