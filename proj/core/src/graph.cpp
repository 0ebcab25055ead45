#include "dsppnet/graph.hpp"

#include <cmath>
#include <stdexcept>

namespace dsppnet {

NodeId Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return NodeId{node_count() - 1};
}

NodeId Graph::parameter(Tensor value) {
  Node n;
  n.op = "parameter";
  n.value = std::move(value);
  n.trainable = true;
  nodes_.push_back(std::move(n));
  return NodeId{node_count() - 1};
}

NodeId Graph::apply(std::string op, std::vector<NodeId> inputs, Tensor value,
                    BackwardFn backward) {
  for (NodeId in : inputs) {
    if (!in.valid() || in.index >= node_count()) {
      throw std::invalid_argument("apply(" + op + "): input node id out of range");
    }
  }
  if (!value.all_finite()) {
    throw std::runtime_error("non-finite value produced by op '" + op + "'");
  }
  Node n;
  n.op = std::move(op);
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return NodeId{node_count() - 1};
}

const Graph::Node& Graph::node(NodeId id) const {
  if (!id.valid() || id.index >= node_count()) {
    throw std::invalid_argument("node id out of range");
  }
  return nodes_[static_cast<std::size_t>(id.index)];
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }

const std::string& Graph::op_name(NodeId id) const { return node(id).op; }

bool Graph::is_parameter(NodeId id) const { return node(id).trainable; }

GradMap Graph::backward(NodeId loss) {
  if (backward_done_) {
    throw std::logic_error(
        "backward() called twice on one graph; rebuild the graph per step "
        "(gradients never accumulate across passes)");
  }
  const Node& root = node(loss);
  if (root.value.size() != 1) {
    throw std::invalid_argument("backward() requires a scalar loss, got shape " +
                                root.value.shape_str());
  }
  backward_done_ = true;

  grads_.assign(nodes_.size(), Tensor());
  auto grad_of = [&](NodeId id) -> Tensor& {
    Tensor& g = grads_[static_cast<std::size_t>(id.index)];
    if (g.empty()) g = Tensor::zeros(nodes_[static_cast<std::size_t>(id.index)].value.shape());
    return g;
  };

  grad_of(loss).at(0) = 1.0;

  // Reverse sweep over the tape.  Append-only construction guarantees every
  // node's inputs precede it, so by the time a node is visited all of its
  // consumers have already deposited their contributions.
  for (int i = loss.index; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    Tensor& out_grad = grads_[static_cast<std::size_t>(i)];
    if (out_grad.empty() || !n.backward || n.inputs.empty()) continue;

    std::vector<const Tensor*> in_values;
    std::vector<Tensor*> in_grads;
    in_values.reserve(n.inputs.size());
    in_grads.reserve(n.inputs.size());
    for (NodeId in : n.inputs) {
      in_values.push_back(&nodes_[static_cast<std::size_t>(in.index)].value);
      in_grads.push_back(&grad_of(in));
    }
    n.backward(n.value, out_grad,
               std::span<const Tensor* const>(in_values.data(), in_values.size()),
               std::span<Tensor* const>(in_grads.data(), in_grads.size()));
  }

  GradMap out;
  for (int i = 0; i < node_count(); ++i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.trainable) continue;
    Tensor& g = grads_[static_cast<std::size_t>(i)];
    if (g.empty()) g = Tensor::zeros(n.value.shape());
    out.emplace(NodeId{i}, g);
  }
  return out;
}

Tensor Graph::gradient(NodeId id) const {
  if (!backward_done_) {
    throw std::logic_error("gradient() requires a completed backward() pass");
  }
  const Node& n = node(id);
  const Tensor& g = grads_[static_cast<std::size_t>(id.index)];
  return g.empty() ? Tensor::zeros(n.value.shape()) : g;
}

double grad_check(const ScalarFn& scalar_fn, const Tensor& point, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw std::invalid_argument("grad_check requires epsilon > 0");
  }

  Graph g;
  const NodeId x = g.parameter(point);
  const NodeId out = scalar_fn(g, x);
  if (g.value(out).size() != 1) {
    throw std::invalid_argument("grad_check requires a scalar-valued function");
  }
  GradMap grads = g.backward(out);
  const Tensor analytic = grads.at(x);

  auto eval_at = [&](const Tensor& p) {
    Graph h;
    const NodeId in = h.constant(p);
    const NodeId o = scalar_fn(h, in);
    return h.value(o).item();
  };

  double worst = 0.0;
  for (std::int64_t i = 0; i < point.size(); ++i) {
    Tensor plus = point;
    Tensor minus = point;
    plus.at(i) += epsilon;
    minus.at(i) -= epsilon;
    const double numeric = (eval_at(plus) - eval_at(minus)) / (2.0 * epsilon);
    const double err =
        std::abs(analytic.at(i) - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace dsppnet
