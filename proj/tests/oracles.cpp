#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace oracles {

using dsppnet::ConfusionCounts;
using dsppnet::Conv2dSpec;
using dsppnet::Tensor;

Tensor conv2d_ref(const Tensor& input, const Tensor& weights, const Tensor& bias,
                  const Conv2dSpec& spec) {
  const int n = input.dim(0), c_in = input.dim(1);
  const int h = input.dim(2), w = input.dim(3);
  const int c_out = weights.dim(0), kh = weights.dim(2), kw = weights.dim(3);
  const int oh = spec.out_h(h), ow = spec.out_w(w);
  const int s = spec.stride, d = spec.dilation, p = spec.padding;

  Tensor out = Tensor::zeros({n, c_out, oh, ow});
  auto in_at = [&](int nn, int cc, int yy, int xx) -> double {
    if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
    return input.at(((static_cast<std::int64_t>(nn) * c_in + cc) * h + yy) * w + xx);
  };
  for (int nn = 0; nn < n; ++nn) {
    for (int oc = 0; oc < c_out; ++oc) {
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias.at(oc);
          for (int ic = 0; ic < c_in; ++ic) {
            for (int ky = 0; ky < kh; ++ky) {
              for (int kx = 0; kx < kw; ++kx) {
                const double v = in_at(nn, ic, oy * s - p + ky * d, ox * s - p + kx * d);
                const double wv = weights.at(
                    ((static_cast<std::int64_t>(oc) * c_in + ic) * kh + ky) * kw + kx);
                acc += v * wv;
              }
            }
          }
          out.at(((static_cast<std::int64_t>(nn) * c_out + oc) * oh + oy) * ow + ox) = acc;
        }
      }
    }
  }
  return out;
}

Tensor dense_ref(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  const int n = input.dim(0), d = input.dim(1), k = weights.dim(0);
  Tensor out = Tensor::zeros({n, k});
  for (int nn = 0; nn < n; ++nn) {
    for (int kk = 0; kk < k; ++kk) {
      double acc = bias.at(kk);
      for (int dd = 0; dd < d; ++dd) {
        acc += input.at(static_cast<std::int64_t>(nn) * d + dd) *
               weights.at(static_cast<std::int64_t>(kk) * d + dd);
      }
      out.at(static_cast<std::int64_t>(nn) * k + kk) = acc;
    }
  }
  return out;
}

Tensor bilinear_ref(const Tensor& input, int out_h, int out_w) {
  const int n = input.dim(0), c = input.dim(1);
  const int h = input.dim(2), w = input.dim(3);
  Tensor out = Tensor::zeros({n, c, out_h, out_w});

  auto src_coord = [](int i, int in_extent, int out_extent) {
    double v = (static_cast<double>(i) + 0.5) * static_cast<double>(in_extent) /
                   static_cast<double>(out_extent) -
               0.5;
    if (v < 0.0) v = 0.0;
    const double hi = static_cast<double>(in_extent - 1);
    if (v > hi) v = hi;
    return v;
  };

  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      const std::int64_t base = (static_cast<std::int64_t>(nn) * c + cc) *
                                static_cast<std::int64_t>(h) * w;
      for (int oy = 0; oy < out_h; ++oy) {
        const double sy = src_coord(oy, h, out_h);
        const int y0 = static_cast<int>(std::floor(sy));
        const int y1 = std::min(y0 + 1, h - 1);
        const double fy = sy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
          const double sx = src_coord(ox, w, out_w);
          const int x0 = static_cast<int>(std::floor(sx));
          const int x1 = std::min(x0 + 1, w - 1);
          const double fx = sx - x0;
          const double v00 = input.at(base + static_cast<std::int64_t>(y0) * w + x0);
          const double v01 = input.at(base + static_cast<std::int64_t>(y0) * w + x1);
          const double v10 = input.at(base + static_cast<std::int64_t>(y1) * w + x0);
          const double v11 = input.at(base + static_cast<std::int64_t>(y1) * w + x1);
          const double v = (1.0 - fy) * (1.0 - fx) * v00 + (1.0 - fy) * fx * v01 +
                           fy * (1.0 - fx) * v10 + fy * fx * v11;
          out.at((static_cast<std::int64_t>(nn) * c + cc) *
                     static_cast<std::int64_t>(out_h) * out_w +
                 static_cast<std::int64_t>(oy) * out_w + ox) = v;
        }
      }
    }
  }
  return out;
}

Tensor global_avg_pool_ref(const Tensor& input) {
  const int n = input.dim(0), c = input.dim(1);
  const int h = input.dim(2), w = input.dim(3);
  Tensor out = Tensor::zeros({n, c});
  for (int nn = 0; nn < n; ++nn) {
    for (int cc = 0; cc < c; ++cc) {
      double acc = 0.0;
      const std::int64_t base = (static_cast<std::int64_t>(nn) * c + cc) *
                                static_cast<std::int64_t>(h) * w;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
        acc += input.at(base + i);
      }
      out.at(static_cast<std::int64_t>(nn) * c + cc) =
          acc / (static_cast<double>(h) * static_cast<double>(w));
    }
  }
  return out;
}

double pairwise_auc(std::span<const double> scores, std::span<const int> labels) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j]) {
        wins += 1.0;
      } else if (scores[i] == scores[j]) {
        wins += 0.5;
      }
    }
  }
  return wins / static_cast<double>(pairs);
}

ConfusionCounts confusion_ref(std::span<const double> scores,
                              std::span<const int> labels, double threshold) {
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++c.tp;
    if (pred && !pos) ++c.fp;
    if (!pred && pos) ++c.fn;
    if (!pred && !pos) ++c.tn;
  }
  return c;
}

}  // namespace oracles
