#include "dsppnet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <utility>

#include "dsppnet/parallel.hpp"

namespace dsppnet {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

std::string op_label(const char* op, std::string_view label) {
  if (label.empty()) return op;
  return std::string(op) + "(" + std::string(label) + ")";
}

void require(bool ok, const std::string& who, const std::string& what) {
  if (!ok) throw std::invalid_argument(who + ": " + what);
}

// ---------------------------------------------------------------------------
// conv2d

struct ConvDims {
  int n, c, h, w;      // input
  int o, kh, kw;       // kernel
  int oh, ow;          // output
  std::int64_t ckk;    // patch length = c * kh * kw
  std::int64_t in_plane, out_plane, in_sample, out_sample, patch_count;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weights, const Tensor& bias,
                   const Conv2dSpec& spec, const std::string& who) {
  spec.validate();
  require(input.rank() == 4, who, "input must be [N,C,H,W], got " + input.shape_str());
  require(weights.rank() == 4, who,
          "weights must be [Cout,Cin,Kh,Kw], got " + weights.shape_str());
  require(bias.rank() == 1, who, "bias must be [Cout], got " + bias.shape_str());

  ConvDims d{};
  d.n = input.dim(0);
  d.c = input.dim(1);
  d.h = input.dim(2);
  d.w = input.dim(3);
  d.o = weights.dim(0);
  d.kh = weights.dim(2);
  d.kw = weights.dim(3);

  require(d.c == spec.in_channels && d.o == spec.out_channels &&
              d.kh == spec.kernel_h && d.kw == spec.kernel_w &&
              weights.dim(1) == spec.in_channels,
          who, "weights " + weights.shape_str() + " / input " + input.shape_str() +
                   " disagree with the conv spec");
  require(bias.dim(0) == d.o, who, "bias length must equal out_channels");

  d.oh = spec.out_h(d.h);
  d.ow = spec.out_w(d.w);
  require(d.oh >= 1 && d.ow >= 1, who,
          "effective kernel extent exceeds the padded input (output would be " +
              std::to_string(d.oh) + "x" + std::to_string(d.ow) + ")");

  d.ckk = static_cast<std::int64_t>(d.c) * d.kh * d.kw;
  d.in_plane = static_cast<std::int64_t>(d.h) * d.w;
  d.out_plane = static_cast<std::int64_t>(d.oh) * d.ow;
  d.in_sample = d.in_plane * d.c;
  d.out_sample = d.out_plane * d.o;
  d.patch_count = d.out_plane;
  return d;
}

// Gathers the dilated, zero-padded patches of one sample into a
// [oh*ow, c*kh*kw] row-major matrix.
void im2col(const double* x, const ConvDims& d, const Conv2dSpec& s, double* col) {
  for (int oy = 0; oy < d.oh; ++oy) {
    const int iy0 = oy * s.stride - s.padding;
    for (int ox = 0; ox < d.ow; ++ox) {
      const int ix0 = ox * s.stride - s.padding;
      double* row = col + (static_cast<std::int64_t>(oy) * d.ow + ox) * d.ckk;
      std::int64_t idx = 0;
      for (int c = 0; c < d.c; ++c) {
        const double* plane = x + static_cast<std::int64_t>(c) * d.in_plane;
        for (int ky = 0; ky < d.kh; ++ky) {
          const int iy = iy0 + ky * s.dilation;
          const bool row_in = iy >= 0 && iy < d.h;
          for (int kx = 0; kx < d.kw; ++kx, ++idx) {
            const int ix = ix0 + kx * s.dilation;
            row[idx] = (row_in && ix >= 0 && ix < d.w)
                           ? plane[static_cast<std::int64_t>(iy) * d.w + ix]
                           : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-adds a patch-gradient matrix back onto one sample's input gradient.
void col2im_add(const double* col, const ConvDims& d, const Conv2dSpec& s,
                double* dx) {
  for (int oy = 0; oy < d.oh; ++oy) {
    const int iy0 = oy * s.stride - s.padding;
    for (int ox = 0; ox < d.ow; ++ox) {
      const int ix0 = ox * s.stride - s.padding;
      const double* row = col + (static_cast<std::int64_t>(oy) * d.ow + ox) * d.ckk;
      std::int64_t idx = 0;
      for (int c = 0; c < d.c; ++c) {
        double* plane = dx + static_cast<std::int64_t>(c) * d.in_plane;
        for (int ky = 0; ky < d.kh; ++ky) {
          const int iy = iy0 + ky * s.dilation;
          const bool row_in = iy >= 0 && iy < d.h;
          for (int kx = 0; kx < d.kw; ++kx, ++idx) {
            const int ix = ix0 + kx * s.dilation;
            if (row_in && ix >= 0 && ix < d.w) {
              plane[static_cast<std::int64_t>(iy) * d.w + ix] += row[idx];
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// bilinear axis table

struct AxisSample {
  int lo, hi;
  double frac;
};

// Half-pixel-center source coordinate, clamped to the valid range.  For
// out == in this degenerates to lo == i, frac == 0.
std::vector<AxisSample> bilinear_axis(int in, int out) {
  std::vector<AxisSample> table(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (int i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
    int lo = static_cast<int>(std::floor(src));
    lo = std::min(lo, in - 1);
    const int hi = std::min(lo + 1, in - 1);
    table[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
  }
  return table;
}

double lerp(double a, double b, double t) { return a + t * (b - a); }

}  // namespace

// ---------------------------------------------------------------------------
// Conv2dSpec

int Conv2dSpec::out_extent(int in_extent, int kernel) const {
  const std::int64_t span = static_cast<std::int64_t>(dilation) * (kernel - 1) + 1;
  const std::int64_t num = static_cast<std::int64_t>(in_extent) + 2LL * padding - span;
  if (num < 0) return 0;
  return static_cast<int>(num / stride) + 1;
}

void Conv2dSpec::validate() const {
  auto bad = [](const std::string& what) {
    throw std::invalid_argument("conv spec: " + what);
  };
  if (in_channels < 1) bad("in_channels must be >= 1");
  if (out_channels < 1) bad("out_channels must be >= 1");
  if (kernel_h < 1 || kernel_w < 1) bad("kernel extents must be >= 1");
  if (stride < 1) bad("stride must be >= 1");
  if (dilation < 1) bad("dilation must be >= 1");
  if (padding < 0) bad("padding must be >= 0");
}

// ---------------------------------------------------------------------------
// conv2d

NodeId conv2d(Graph& g, NodeId input, NodeId weights, NodeId bias,
              const Conv2dSpec& spec, std::string_view label) {
  const std::string who = op_label("conv2d", label);
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weights);
  const Tensor& b = g.value(bias);
  const ConvDims d = conv_dims(x, w, b, spec, who);

  Tensor out = Tensor::zeros({d.n, d.o, d.oh, d.ow});
  {
    CMapRM wm(w.data(), d.o, d.ckk);
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), d.o);
    double* out_ptr = out.data();
    const double* x_ptr = x.data();
    parallel_for(0, d.n, [&](std::int64_t lo, std::int64_t hi) {
      std::vector<double> col(static_cast<std::size_t>(d.patch_count * d.ckk));
      for (std::int64_t i = lo; i < hi; ++i) {
        im2col(x_ptr + i * d.in_sample, d, spec, col.data());
        CMapRM cm(col.data(), d.patch_count, d.ckk);
        MapRM om(out_ptr + i * d.out_sample, d.o, d.out_plane);
        om.noalias() = wm * cm.transpose();
        om.colwise() += bv;
      }
    });
  }

  auto backward = [spec, d](const Tensor&, const Tensor& out_grad,
                            std::span<const Tensor* const> in_values,
                            std::span<Tensor* const> in_grads) {
    const Tensor& x = *in_values[0];
    const Tensor& w = *in_values[1];
    Tensor& dx = *in_grads[0];
    Tensor& dw = *in_grads[1];
    Tensor& db = *in_grads[2];

    const double* go = out_grad.data();
    CMapRM wm(w.data(), d.o, d.ckk);

    // Input gradient: samples are independent, writes are disjoint.
    parallel_for(0, d.n, [&](std::int64_t lo, std::int64_t hi) {
      std::vector<double> dcol(static_cast<std::size_t>(d.patch_count * d.ckk));
      for (std::int64_t i = lo; i < hi; ++i) {
        CMapRM gm(go + i * d.out_sample, d.o, d.out_plane);
        MapRM dcm(dcol.data(), d.patch_count, d.ckk);
        dcm.noalias() = gm.transpose() * wm;
        col2im_add(dcol.data(), d, spec, dx.data() + i * d.in_sample);
      }
    });

    // Weight and bias gradients: serial accumulation in sample order keeps
    // the result identical for every thread count.
    std::vector<double> col(static_cast<std::size_t>(d.patch_count * d.ckk));
    MapRM dwm(dw.data(), d.o, d.ckk);
    Eigen::Map<Eigen::VectorXd> dbv(db.data(), d.o);
    for (std::int64_t i = 0; i < d.n; ++i) {
      im2col(x.data() + i * d.in_sample, d, spec, col.data());
      CMapRM cm(col.data(), d.patch_count, d.ckk);
      CMapRM gm(go + i * d.out_sample, d.o, d.out_plane);
      dwm.noalias() += gm * cm;
      dbv.noalias() += gm.rowwise().sum();
    }
  };

  return g.apply(who, {input, weights, bias}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// pointwise

NodeId relu(Graph& g, NodeId input, std::string_view label) {
  const std::string who = op_label("relu", label);
  const Tensor& x = g.value(input);
  Tensor out = x;
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;

  auto backward = [](const Tensor&, const Tensor& out_grad,
                     std::span<const Tensor* const> in_values,
                     std::span<Tensor* const> in_grads) {
    const Tensor& x = *in_values[0];
    Tensor& dx = *in_grads[0];
    // Subgradient 0 at the kink.
    for (std::int64_t i = 0; i < x.size(); ++i) {
      if (x.at(i) > 0.0) dx.at(i) += out_grad.at(i);
    }
  };
  return g.apply(who, {input}, std::move(out), backward);
}

NodeId sigmoid(Graph& g, NodeId input, std::string_view label) {
  const std::string who = op_label("sigmoid", label);
  const Tensor& x = g.value(input);
  Tensor out = x;
  for (auto& v : out.values()) {
    if (v >= 0.0) {
      v = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      v = e / (1.0 + e);
    }
  }

  auto backward = [](const Tensor& out_value, const Tensor& out_grad,
                     std::span<const Tensor* const>,
                     std::span<Tensor* const> in_grads) {
    Tensor& dx = *in_grads[0];
    for (std::int64_t i = 0; i < out_value.size(); ++i) {
      const double s = out_value.at(i);
      dx.at(i) += out_grad.at(i) * s * (1.0 - s);
    }
  };
  return g.apply(who, {input}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// global_avg_pool

NodeId global_avg_pool(Graph& g, NodeId input, std::string_view label) {
  const std::string who = op_label("global_avg_pool", label);
  const Tensor& x = g.value(input);
  require(x.rank() == 4, who, "input must be [N,C,H,W], got " + x.shape_str());
  const int n = x.dim(0), c = x.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);

  Tensor out = Tensor::zeros({n, c});
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(n) * c; ++nc) {
    const double* p = x.data() + nc * plane;
    double acc = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
    out.at(nc) = acc / static_cast<double>(plane);
  }

  auto backward = [plane](const Tensor&, const Tensor& out_grad,
                          std::span<const Tensor* const> in_values,
                          std::span<Tensor* const> in_grads) {
    Tensor& dx = *in_grads[0];
    (void)in_values;
    for (std::int64_t nc = 0; nc < out_grad.size(); ++nc) {
      const double share = out_grad.at(nc) / static_cast<double>(plane);
      double* p = dx.data() + nc * plane;
      for (std::int64_t i = 0; i < plane; ++i) p[i] += share;
    }
  };
  return g.apply(who, {input}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// resize_bilinear

Tensor bilinear_resize(const Tensor& input, int out_h, int out_w) {
  if (input.rank() != 4) {
    throw std::invalid_argument("bilinear_resize: input must be [N,C,H,W], got " +
                                input.shape_str());
  }
  if (out_h < 1 || out_w < 1) {
    throw std::invalid_argument("bilinear_resize: target extents must be >= 1");
  }
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ys = bilinear_axis(h, out_h);
  const auto xs = bilinear_axis(w, out_w);

  Tensor out = Tensor::zeros({n, c, out_h, out_w});
  const std::int64_t in_plane = static_cast<std::int64_t>(h) * w;
  const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(n) * c; ++nc) {
    const double* src = input.data() + nc * in_plane;
    double* dst = out.data() + nc * out_plane;
    for (int oy = 0; oy < out_h; ++oy) {
      const AxisSample& ay = ys[static_cast<std::size_t>(oy)];
      const double* r0 = src + static_cast<std::int64_t>(ay.lo) * w;
      const double* r1 = src + static_cast<std::int64_t>(ay.hi) * w;
      for (int ox = 0; ox < out_w; ++ox) {
        const AxisSample& ax = xs[static_cast<std::size_t>(ox)];
        const double top = lerp(r0[ax.lo], r0[ax.hi], ax.frac);
        const double bot = lerp(r1[ax.lo], r1[ax.hi], ax.frac);
        dst[static_cast<std::int64_t>(oy) * out_w + ox] = lerp(top, bot, ay.frac);
      }
    }
  }
  return out;
}

NodeId resize_bilinear(Graph& g, NodeId input, int out_h, int out_w,
                       std::string_view label) {
  const std::string who = op_label("resize_bilinear", label);
  const Tensor& x = g.value(input);
  Tensor out = bilinear_resize(x, out_h, out_w);

  const int h = x.dim(2), w = x.dim(3);
  auto backward = [h, w, out_h, out_w](const Tensor&, const Tensor& out_grad,
                                       std::span<const Tensor* const> in_values,
                                       std::span<Tensor* const> in_grads) {
    const Tensor& x = *in_values[0];
    Tensor& dx = *in_grads[0];
    const int n = x.dim(0), c = x.dim(1);
    const auto ys = bilinear_axis(h, out_h);
    const auto xs = bilinear_axis(w, out_w);
    const std::int64_t in_plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
    for (std::int64_t nc = 0; nc < static_cast<std::int64_t>(n) * c; ++nc) {
      const double* go = out_grad.data() + nc * out_plane;
      double* dst = dx.data() + nc * in_plane;
      for (int oy = 0; oy < out_h; ++oy) {
        const AxisSample& ay = ys[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const AxisSample& ax = xs[static_cast<std::size_t>(ox)];
          const double gv = go[static_cast<std::int64_t>(oy) * out_w + ox];
          dst[static_cast<std::int64_t>(ay.lo) * w + ax.lo] +=
              gv * (1.0 - ay.frac) * (1.0 - ax.frac);
          dst[static_cast<std::int64_t>(ay.lo) * w + ax.hi] +=
              gv * (1.0 - ay.frac) * ax.frac;
          dst[static_cast<std::int64_t>(ay.hi) * w + ax.lo] +=
              gv * ay.frac * (1.0 - ax.frac);
          dst[static_cast<std::int64_t>(ay.hi) * w + ax.hi] +=
              gv * ay.frac * ax.frac;
        }
      }
    }
  };
  return g.apply(who, {input}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// concat_channels

NodeId concat_channels(Graph& g, std::span<const NodeId> inputs,
                       std::string_view label) {
  const std::string who = op_label("concat_channels", label);
  require(!inputs.empty(), who, "needs at least one input");

  const Tensor& first = g.value(inputs[0]);
  require(first.rank() >= 2, who, "inputs must have rank >= 2");
  std::vector<int> out_shape = first.shape();
  std::vector<std::int64_t> channel_sizes;

  std::int64_t inner = 1;
  for (int a = 2; a < first.rank(); ++a) inner *= first.dim(a);

  int total_c = 0;
  for (NodeId id : inputs) {
    const Tensor& t = g.value(id);
    require(t.rank() == first.rank(), who, "rank mismatch across inputs");
    for (int a = 0; a < t.rank(); ++a) {
      if (a == 1) continue;
      require(t.dim(a) == first.dim(a), who,
              "non-channel dimension mismatch: " + t.shape_str() + " vs " +
                  first.shape_str());
    }
    total_c += t.dim(1);
    channel_sizes.push_back(static_cast<std::int64_t>(t.dim(1)) * inner);
  }
  out_shape[1] = total_c;

  const int n = first.dim(0);
  const std::int64_t out_sample = static_cast<std::int64_t>(total_c) * inner;
  Tensor out = Tensor::zeros(out_shape);
  for (int b = 0; b < n; ++b) {
    double* dst = out.data() + static_cast<std::int64_t>(b) * out_sample;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Tensor& t = g.value(inputs[i]);
      const std::int64_t block = channel_sizes[i];
      std::memcpy(dst, t.data() + static_cast<std::int64_t>(b) * block,
                  static_cast<std::size_t>(block) * sizeof(double));
      dst += block;
    }
  }

  auto backward = [channel_sizes, out_sample, n](
                      const Tensor&, const Tensor& out_grad,
                      std::span<const Tensor* const>,
                      std::span<Tensor* const> in_grads) {
    for (int b = 0; b < n; ++b) {
      const double* src = out_grad.data() + static_cast<std::int64_t>(b) * out_sample;
      for (std::size_t i = 0; i < channel_sizes.size(); ++i) {
        const std::int64_t block = channel_sizes[i];
        double* dst = in_grads[i]->data() + static_cast<std::int64_t>(b) * block;
        for (std::int64_t j = 0; j < block; ++j) dst[j] += src[j];
        src += block;
      }
    }
  };

  std::vector<NodeId> in_vec(inputs.begin(), inputs.end());
  return g.apply(who, std::move(in_vec), std::move(out), backward);
}

// ---------------------------------------------------------------------------
// dense

NodeId dense(Graph& g, NodeId input, NodeId weights, NodeId bias,
             std::string_view label) {
  const std::string who = op_label("dense", label);
  const Tensor& x = g.value(input);
  const Tensor& w = g.value(weights);
  const Tensor& b = g.value(bias);
  require(x.rank() == 2, who, "input must be [N,D], got " + x.shape_str());
  require(w.rank() == 2, who, "weights must be [K,D], got " + w.shape_str());
  require(b.rank() == 1, who, "bias must be [K], got " + b.shape_str());
  const int n = x.dim(0), dim = x.dim(1), k = w.dim(0);
  require(w.dim(1) == dim, who, "weights " + w.shape_str() +
                                    " incompatible with input " + x.shape_str());
  require(b.dim(0) == k, who, "bias length must equal the output width");

  Tensor out = Tensor::zeros({n, k});
  {
    // Evaluate row by row so a sample's logits do not depend on what else is
    // in the batch (same matrix-vector product regardless of batch size).
    CMapRM wm(w.data(), k, dim);
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), k);
    for (int r = 0; r < n; ++r) {
      Eigen::Map<const Eigen::VectorXd> xr(
          x.data() + static_cast<std::int64_t>(r) * dim, dim);
      Eigen::Map<Eigen::VectorXd> orow(
          out.data() + static_cast<std::int64_t>(r) * k, k);
      orow.noalias() = wm * xr;
      orow += bv;
    }
  }

  auto backward = [n, dim, k](const Tensor&, const Tensor& out_grad,
                              std::span<const Tensor* const> in_values,
                              std::span<Tensor* const> in_grads) {
    const Tensor& x = *in_values[0];
    const Tensor& w = *in_values[1];
    CMapRM gm(out_grad.data(), n, k);
    CMapRM xm(x.data(), n, dim);
    CMapRM wm(w.data(), k, dim);
    MapRM dxm(in_grads[0]->data(), n, dim);
    MapRM dwm(in_grads[1]->data(), k, dim);
    Eigen::Map<Eigen::RowVectorXd> dbv(in_grads[2]->data(), k);
    dxm.noalias() += gm * wm;
    dwm.noalias() += gm.transpose() * xm;
    dbv.noalias() += gm.colwise().sum();
  };
  return g.apply(who, {input, weights, bias}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// softmax helpers and loss

Tensor softmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw std::invalid_argument("softmax_rows: input must be [N,K], got " +
                                logits.shape_str());
  }
  const int n = logits.dim(0), k = logits.dim(1);
  Tensor out = Tensor::zeros({n, k});
  for (int r = 0; r < n; ++r) {
    const double* row = logits.data() + static_cast<std::int64_t>(r) * k;
    double* dst = out.data() + static_cast<std::int64_t>(r) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) {
      dst[j] = std::exp(row[j] - m);
      denom += dst[j];
    }
    for (int j = 0; j < k; ++j) dst[j] /= denom;
  }
  return out;
}

NodeId softmax_cross_entropy(Graph& g, NodeId logits, std::vector<int> labels,
                             std::string_view label) {
  const std::string who = op_label("softmax_cross_entropy", label);
  const Tensor& z = g.value(logits);
  require(z.rank() == 2, who, "logits must be [N,K], got " + z.shape_str());
  const int n = z.dim(0), k = z.dim(1);
  require(static_cast<int>(labels.size()) == n, who,
          "labels length must equal the batch size");
  for (int y : labels) {
    require(y >= 0 && y < k, who,
            "label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
  }

  // probs are kept for the backward pass: d loss / d logits = (p - onehot)/N.
  Tensor probs = Tensor::zeros({n, k});
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    const double* row = z.data() + static_cast<std::int64_t>(r) * k;
    double* p = probs.data() + static_cast<std::int64_t>(r) * k;
    double m = row[0];
    for (int j = 1; j < k; ++j) m = std::max(m, row[j]);
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(row[j] - m);
    const double lse = m + std::log(denom);
    total += lse - row[labels[static_cast<std::size_t>(r)]];
    for (int j = 0; j < k; ++j) p[j] = std::exp(row[j] - lse);
  }

  Tensor out = Tensor::scalar(total / static_cast<double>(n));
  auto backward = [probs = std::move(probs), labels = std::move(labels), n, k](
                      const Tensor&, const Tensor& out_grad,
                      std::span<const Tensor* const>,
                      std::span<Tensor* const> in_grads) {
    Tensor& dz = *in_grads[0];
    const double scale = out_grad.at(0) / static_cast<double>(n);
    for (int r = 0; r < n; ++r) {
      const std::int64_t base = static_cast<std::int64_t>(r) * k;
      for (int j = 0; j < k; ++j) {
        dz.at(base + j) += scale * probs.at(base + j);
      }
      dz.at(base + labels[static_cast<std::size_t>(r)]) -= scale;
    }
  };
  return g.apply(who, {logits}, std::move(out), backward);
}

// ---------------------------------------------------------------------------
// broadcast multiply and elementwise helpers

NodeId mul_channel_broadcast(Graph& g, NodeId input, NodeId gate,
                             std::string_view label) {
  const std::string who = op_label("mul_channel_broadcast", label);
  const Tensor& x = g.value(input);
  const Tensor& m = g.value(gate);
  require(x.rank() == 4, who, "input must be [N,C,H,W], got " + x.shape_str());
  require(m.rank() == 4, who, "gate must be [N,1,H,W], got " + m.shape_str());
  require(m.dim(1) == 1, who, "gate must have exactly one channel");
  require(m.dim(0) == x.dim(0) && m.dim(2) == x.dim(2) && m.dim(3) == x.dim(3), who,
          "gate " + m.shape_str() + " does not match input " + x.shape_str());

  const int n = x.dim(0), c = x.dim(1);
  const std::int64_t plane = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  Tensor out = Tensor::zeros(x.shape());
  for (int b = 0; b < n; ++b) {
    const double* gp = m.data() + static_cast<std::int64_t>(b) * plane;
    for (int ch = 0; ch < c; ++ch) {
      const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        out.at(base + i) = x.at(base + i) * gp[i];
      }
    }
  }

  auto backward = [n, c, plane](const Tensor&, const Tensor& out_grad,
                                std::span<const Tensor* const> in_values,
                                std::span<Tensor* const> in_grads) {
    const Tensor& x = *in_values[0];
    const Tensor& m = *in_values[1];
    Tensor& dx = *in_grads[0];
    Tensor& dm = *in_grads[1];
    for (int b = 0; b < n; ++b) {
      const double* gp = m.data() + static_cast<std::int64_t>(b) * plane;
      double* dgp = dm.data() + static_cast<std::int64_t>(b) * plane;
      for (int ch = 0; ch < c; ++ch) {
        const std::int64_t base = (static_cast<std::int64_t>(b) * c + ch) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          dx.at(base + i) += out_grad.at(base + i) * gp[i];
          dgp[i] += out_grad.at(base + i) * x.at(base + i);
        }
      }
    }
  };
  return g.apply(who, {input, gate}, std::move(out), backward);
}

NodeId mul(Graph& g, NodeId a, NodeId b, std::string_view label) {
  const std::string who = op_label("mul", label);
  const Tensor& ta = g.value(a);
  const Tensor& tb = g.value(b);
  require(ta.same_shape(tb), who, "shape mismatch: " + ta.shape_str() + " vs " +
                                      tb.shape_str() + " (no implicit broadcasting)");
  Tensor out = ta;
  for (std::int64_t i = 0; i < out.size(); ++i) out.at(i) *= tb.at(i);

  auto backward = [](const Tensor&, const Tensor& out_grad,
                     std::span<const Tensor* const> in_values,
                     std::span<Tensor* const> in_grads) {
    const Tensor& ta = *in_values[0];
    const Tensor& tb = *in_values[1];
    for (std::int64_t i = 0; i < out_grad.size(); ++i) {
      in_grads[0]->at(i) += out_grad.at(i) * tb.at(i);
      in_grads[1]->at(i) += out_grad.at(i) * ta.at(i);
    }
  };
  return g.apply(who, {a, b}, std::move(out), backward);
}

NodeId sum(Graph& g, NodeId input, std::string_view label) {
  const std::string who = op_label("sum", label);
  const Tensor& x = g.value(input);
  double acc = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) acc += x.at(i);

  auto backward = [](const Tensor&, const Tensor& out_grad,
                     std::span<const Tensor* const>,
                     std::span<Tensor* const> in_grads) {
    Tensor& dx = *in_grads[0];
    const double gv = out_grad.at(0);
    for (std::int64_t i = 0; i < dx.size(); ++i) dx.at(i) += gv;
  };
  return g.apply(who, {input}, Tensor::scalar(acc), backward);
}

NodeId reshape(Graph& g, NodeId input, std::vector<int> shape,
               std::string_view label) {
  const std::string who = op_label("reshape", label);
  const Tensor& x = g.value(input);
  require(shape_size(shape) == x.size(), who,
          "cannot reshape " + x.shape_str() + " to " + shape_str(shape));
  Tensor out = Tensor::from_buffer(shape, x.values());

  auto backward = [](const Tensor&, const Tensor& out_grad,
                     std::span<const Tensor* const>,
                     std::span<Tensor* const> in_grads) {
    Tensor& dx = *in_grads[0];
    for (std::int64_t i = 0; i < out_grad.size(); ++i) dx.at(i) += out_grad.at(i);
  };
  return g.apply(who, {input}, std::move(out), backward);
}

}  // namespace dsppnet
