#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsppnet/tensor.hpp"

namespace dsppnet {

// Handle into a Graph's node sequence.
struct NodeId {
  int index = -1;
  bool valid() const { return index >= 0; }
  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

using GradMap = std::map<NodeId, Tensor>;

// Accumulates the gradients of one node's inputs.  `input_grads[i]` arrives
// zero-initialized to the i-th input's shape on first touch and must be added
// to, never overwritten, because a node can feed several consumers.
using BackwardFn =
    std::function<void(const Tensor& out_value, const Tensor& out_grad,
                       std::span<const Tensor* const> input_values,
                       std::span<Tensor* const> input_grads)>;

// Append-only reverse-mode tape.  Ops (see ops.hpp) compute forward values
// eagerly, record them with a backward closure via apply(), and backward()
// replays the sequence in reverse once.  A graph belongs to a single training
// step and a single thread.
class Graph {
 public:
  NodeId constant(Tensor value);
  NodeId parameter(Tensor value);

  // Registers an op result.  Throws std::runtime_error naming `op` when the
  // forward value contains a non-finite element, so numeric blow-ups point at
  // the layer that produced them.
  NodeId apply(std::string op, std::vector<NodeId> inputs, Tensor value,
               BackwardFn backward);

  const Tensor& value(NodeId id) const;
  const std::string& op_name(NodeId id) const;
  bool is_parameter(NodeId id) const;
  int node_count() const { return static_cast<int>(nodes_.size()); }

  // Gradients of the scalar `loss` for every parameter node, zeros for
  // parameters the loss does not reach.  Gradients never accumulate across
  // passes: calling backward() twice on one graph throws std::logic_error.
  GradMap backward(NodeId loss);

  // Per-node gradient from the completed backward pass (zeros when the pass
  // did not reach the node).  Throws std::logic_error before backward().
  Tensor gradient(NodeId id) const;

 private:
  struct Node {
    std::string op;
    std::vector<NodeId> inputs;
    Tensor value;
    BackwardFn backward;
    bool trainable = false;
  };

  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
  bool backward_done_ = false;
};

// Builds a scalar-valued graph rooted at one input node.
using ScalarFn = std::function<NodeId(Graph&, NodeId)>;

// Max over components of |analytic - numeric| / max(1, |numeric|), where
// numeric is the central finite difference of `scalar_fn` at `point` with
// step `epsilon`.  The numeric side only exercises forward evaluation, so it
// is an independent oracle for every backward closure on the path.
double grad_check(const ScalarFn& scalar_fn, const Tensor& point, double epsilon);

}  // namespace dsppnet
