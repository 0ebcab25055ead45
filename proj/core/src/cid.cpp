#include "dsppnet/cid.hpp"

#include <stdexcept>
#include <string>

#include "dsppnet/init.hpp"

namespace dsppnet {

int cid_reduced_channels(int channels) {
  if (channels < 1) {
    throw std::invalid_argument("cid_reduced_channels requires channels >= 1");
  }
  return (channels + 3) / 4;
}

double attention_factor(int in_channels, int out_channels) {
  if (in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("attention_factor requires positive channel counts");
  }
  return static_cast<double>(in_channels) / static_cast<double>(out_channels);
}

CidParams init_cid_params(int channels, Rng& rng) {
  const int reduced = cid_reduced_channels(channels);
  CidParams p;
  p.reduce_weights = kaiming_uniform({reduced, channels, 1, 1}, channels, rng);
  p.reduce_bias = Tensor::zeros({reduced});
  p.project_weights = kaiming_uniform({1, reduced, 1, 1}, reduced, rng);
  p.project_bias = Tensor::zeros({1});
  return p;
}

namespace {

Conv2dSpec conv1x1(int in_c, int out_c) {
  Conv2dSpec s;
  s.in_channels = in_c;
  s.out_channels = out_c;
  s.kernel_h = 1;
  s.kernel_w = 1;
  s.stride = 1;
  s.dilation = 1;
  s.padding = 0;
  return s;
}

}  // namespace

NodeId attention_map(Graph& g, NodeId input, const CidNodes& nodes,
                     std::string_view label) {
  const std::string who(label);
  const Tensor& x = g.value(input);
  if (x.rank() != 4) {
    throw std::invalid_argument(who + ": input must be [N,C,H,W], got " +
                                x.shape_str());
  }
  const Tensor& rw = g.value(nodes.reduce_weights);
  if (rw.dim(1) != x.dim(1)) {
    throw std::invalid_argument(who + ": input has " + std::to_string(x.dim(1)) +
                                " channels but the gate was built for " +
                                std::to_string(rw.dim(1)));
  }
  const int c = x.dim(1);
  const int m = rw.dim(0);

  NodeId y = conv2d(g, input, nodes.reduce_weights, nodes.reduce_bias,
                    conv1x1(c, m), who + "/reduce");
  y = relu(g, y, who + "/reduce");
  y = conv2d(g, y, nodes.project_weights, nodes.project_bias, conv1x1(m, 1),
             who + "/project");
  return sigmoid(g, y, who + "/gate");
}

NodeId cid_forward(Graph& g, NodeId input, const CidNodes& nodes,
                   std::string_view label) {
  const NodeId gate = attention_map(g, input, nodes, label);
  return mul_channel_broadcast(g, input, gate, std::string(label) + "/apply");
}

}  // namespace dsppnet
