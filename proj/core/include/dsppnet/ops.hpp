#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsppnet/graph.hpp"

namespace dsppnet {

// 2-D convolution hyperparameters.  `dilation` is the atrous rate: kernel
// taps are spaced `dilation` pixels apart, so the effective extent per axis
// is (k - 1) * dilation + 1.  Zero padding, cross-correlation orientation
// (no kernel flip).
struct Conv2dSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int dilation = 1;
  int padding = 0;  // applied symmetrically to both spatial axes

  // Padding that preserves spatial size for odd kernels at stride 1.
  static int same_padding(int kernel, int dilation) {
    return dilation * (kernel - 1) / 2;
  }

  // floor((extent + 2*padding - dilation*(kernel-1) - 1) / stride) + 1
  int out_extent(int in_extent, int kernel) const;
  int out_h(int in_h) const { return out_extent(in_h, kernel_h); }
  int out_w(int in_w) const { return out_extent(in_w, kernel_w); }

  void validate() const;  // throws std::invalid_argument
};

// input [N,Cin,H,W], weights [Cout,Cin,Kh,Kw], bias [Cout] -> [N,Cout,H',W'].
// Implemented as im2col + GEMM; the nested-loop reference lives in the test
// suite as an independent oracle.  `label` names the call site in error
// messages (e.g. non-finite output reports).
NodeId conv2d(Graph& g, NodeId input, NodeId weights, NodeId bias,
              const Conv2dSpec& spec, std::string_view label = {});

NodeId relu(Graph& g, NodeId input, std::string_view label = {});
NodeId sigmoid(Graph& g, NodeId input, std::string_view label = {});

// [N,C,H,W] -> [N,C], mean over the spatial axes.
NodeId global_avg_pool(Graph& g, NodeId input, std::string_view label = {});

// [N,C,H,W] -> [N,C,out_h,out_w], bilinear with half-pixel centers and
// edge clamping.  When out == in the result is bitwise the input.
NodeId resize_bilinear(Graph& g, NodeId input, int out_h, int out_w,
                       std::string_view label = {});

// Concatenation along axis 1; all other dimensions must match.
NodeId concat_channels(Graph& g, std::span<const NodeId> inputs,
                       std::string_view label = {});

// input [N,D], weights [K,D], bias [K] -> [N,K].
NodeId dense(Graph& g, NodeId input, NodeId weights, NodeId bias,
             std::string_view label = {});

// Mean over the batch of -log softmax(logits)[label].  Scalar output.
NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::vector<int> labels,
                             std::string_view label = {});

// out[n,c,h,w] = input[n,c,h,w] * gate[n,0,h,w].  The only broadcasting op
// in the library; everything else requires exact shape agreement.
NodeId mul_channel_broadcast(Graph& g, NodeId input, NodeId gate,
                             std::string_view label = {});

// Elementwise helpers used by losses and diagnostics.
NodeId mul(Graph& g, NodeId a, NodeId b, std::string_view label = {});
NodeId sum(Graph& g, NodeId input, std::string_view label = {});
NodeId reshape(Graph& g, NodeId input, std::vector<int> shape,
               std::string_view label = {});

// Plain-value kernels shared by the graph ops and the evaluation code.
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);
Tensor softmax_rows(const Tensor& logits);  // [N,K] -> [N,K], numerically stable

}  // namespace dsppnet
