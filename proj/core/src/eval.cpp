#include "dsppnet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "dsppnet/ops.hpp"

namespace dsppnet {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void check_scores_labels(std::span<const double> scores, std::span<const int> labels,
                         const char* who) {
  if (scores.size() != labels.size()) {
    throw std::invalid_argument(std::string(who) + ": scores/labels length mismatch");
  }
  if (scores.empty()) {
    throw std::invalid_argument(std::string(who) + ": empty input");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument(std::string(who) + ": non-finite score");
    }
  }
  for (int l : labels) {
    if (l != 0 && l != 1) {
      throw std::invalid_argument(std::string(who) + ": labels must be 0 or 1");
    }
  }
}

}  // namespace

ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold) {
  check_scores_labels(scores, labels, "confusion");
  if (!std::isfinite(threshold)) {
    throw std::invalid_argument("confusion: threshold must be finite");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = labels[i] == 1;
    if (pred && truth) ++c.tp;
    else if (pred && !truth) ++c.fp;
    else if (!pred && truth) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Metrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() <= 0) {
    throw std::invalid_argument("metrics_from_counts: empty confusion counts");
  }
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  if (c.tp + c.fp > 0) {
    m.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  } else {
    m.precision_degenerate = true;  // 0/0 -> 0 by convention
  }
  if (c.tp + c.fn > 0) {
    m.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  } else {
    m.recall_degenerate = true;
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  } else {
    m.f1_degenerate = true;
  }
  return m;
}

RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_scores_labels(scores, labels, "roc_auc");
  long long pos = 0, neg = 0;
  for (int l : labels) (l == 1 ? pos : neg)++;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("roc_auc requires both classes to be present");
  }

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  RocCurve curve;
  curve.points.push_back({0.0, 0.0});
  long long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    // Tied scores enter the positive side together: one curve point per
    // distinct threshold.
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? tp : fp)++;
      ++j;
    }
    curve.points.push_back({static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
    i = j;
  }

  double auc = 0.0;
  for (std::size_t k = 1; k < curve.points.size(); ++k) {
    const RocPoint& a = curve.points[k - 1];
    const RocPoint& b = curve.points[k];
    auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  curve.auc = auc;
  return curve;
}

std::string roc_csv(const RocCurve& curve) {
  std::string out = "fpr,tpr\n";
  for (const RocPoint& p : curve.points) {
    out += fmt_double(p.fpr) + "," + fmt_double(p.tpr) + "\n";
  }
  return out;
}

SplitEval evaluate_split(const Model& model, const std::vector<Sample>& samples,
                         int batch_size) {
  if (samples.empty()) {
    throw std::invalid_argument("evaluate_split: empty sample set");
  }
  if (batch_size < 1) {
    throw std::invalid_argument("evaluate_split: batch_size must be >= 1");
  }
  const int classes = model.backbone().classes;

  SplitEval ev;
  ev.binary = classes == 2;
  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t first = 0; first < samples.size();
       first += static_cast<std::size_t>(batch_size)) {
    const std::size_t last =
        std::min(samples.size(), first + static_cast<std::size_t>(batch_size));
    std::vector<int> batch_labels;
    const Tensor batch = make_batch(samples, order, first, last, &batch_labels);
    const Tensor logits = model.forward(batch);
    const Tensor probs = softmax_rows(logits);

    const int n = static_cast<int>(last - first);
    for (int r = 0; r < n; ++r) {
      const double* row = probs.data() + static_cast<std::int64_t>(r) * classes;
      int arg = 0;
      for (int k = 1; k < classes; ++k) {
        if (row[k] > row[arg]) arg = k;
      }
      ev.labels.push_back(batch_labels[static_cast<std::size_t>(r)]);
      if (ev.binary) {
        ev.scores.push_back(row[1]);
        ev.predictions.push_back(row[1] >= 0.5 ? 1 : 0);
      } else {
        ev.scores.push_back(row[arg]);
        ev.predictions.push_back(arg);
      }
    }
  }

  if (ev.binary) {
    ev.counts = confusion(ev.scores, ev.labels, 0.5);
    ev.metrics = metrics_from_counts(ev.counts);
    long long pos = 0, neg = 0;
    for (int l : ev.labels) (l == 1 ? pos : neg)++;
    if (pos > 0 && neg > 0) {
      ev.roc = roc_auc(ev.scores, ev.labels);
      ev.roc_defined = true;
    }
  } else {
    long long hit = 0;
    for (std::size_t i = 0; i < ev.labels.size(); ++i) {
      if (ev.labels[i] == ev.predictions[i]) ++hit;
    }
    ev.metrics.accuracy =
        static_cast<double>(hit) / static_cast<double>(ev.labels.size());
  }
  return ev;
}

std::string metrics_csv(const SplitEval& ev) {
  std::string out = "metric,value\n";
  out += "accuracy," + fmt_double(ev.metrics.accuracy) + "\n";
  out += "precision," + fmt_double(ev.metrics.precision) + "\n";
  out += "recall," + fmt_double(ev.metrics.recall) + "\n";
  out += "f1," + fmt_double(ev.metrics.f1) + "\n";
  if (ev.roc_defined) {
    out += "auc," + fmt_double(ev.roc.auc) + "\n";
  }
  if (ev.binary) {
    out += "tp," + std::to_string(ev.counts.tp) + "\n";
    out += "fp," + std::to_string(ev.counts.fp) + "\n";
    out += "fn," + std::to_string(ev.counts.fn) + "\n";
    out += "tn," + std::to_string(ev.counts.tn) + "\n";
  }
  return out;
}

Tensor grad_cam(const Model& model, const Tensor& image, int target_class,
                int stage) {
  const BackboneConfig& bb = model.backbone();
  if (stage < 1 || stage > 6) {
    throw std::invalid_argument("grad_cam: stage must be in [1, 6]");
  }
  if (target_class < 0 || target_class >= bb.classes) {
    throw std::invalid_argument("grad_cam: target class out of range");
  }
  Tensor batch;
  if (image.rank() == 3) {
    std::vector<int> shape = {1, image.dim(0), image.dim(1), image.dim(2)};
    batch = Tensor::from_buffer(shape, image.values());
  } else if (image.rank() == 4 && image.dim(0) == 1) {
    batch = image;
  } else {
    throw std::invalid_argument("grad_cam: image must be [C,H,W] or [1,C,H,W], got " +
                                image.shape_str());
  }

  Graph g;
  const Model::Trace trace = model.forward_trace(g, batch, /*trainable=*/false);

  // d logits[0, target] / d activations via a one-hot projection.
  Tensor mask = Tensor::zeros({1, bb.classes});
  mask.at(target_class) = 1.0;
  const NodeId picked = sum(g, mul(g, trace.logits, g.constant(mask)), "gradcam/pick");
  g.backward(picked);

  const NodeId tap = trace.stage_out[static_cast<std::size_t>(stage - 1)];
  const Tensor& act = g.value(tap);
  const Tensor grad = g.gradient(tap);
  const int c = act.dim(1), h = act.dim(2), w = act.dim(3);
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  // Channel weights: spatial mean of the gradient.
  Tensor cam = Tensor::zeros({1, 1, h, w});
  for (int ch = 0; ch < c; ++ch) {
    const double* gp = grad.data() + static_cast<std::int64_t>(ch) * plane;
    const double* ap = act.data() + static_cast<std::int64_t>(ch) * plane;
    double weight = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) weight += gp[i];
    weight /= static_cast<double>(plane);
    for (std::int64_t i = 0; i < plane; ++i) cam.at(i) += weight * ap[i];
  }
  for (auto& v : cam.values()) v = v > 0.0 ? v : 0.0;

  Tensor resized = bilinear_resize(cam, bb.input_h, bb.input_w);
  double mn = resized.at(0), mx = resized.at(0);
  for (std::int64_t i = 0; i < resized.size(); ++i) {
    mn = std::min(mn, resized.at(i));
    mx = std::max(mx, resized.at(i));
  }
  Tensor out = Tensor::zeros({bb.input_h, bb.input_w});
  if (mx > mn) {
    const double range = mx - mn;
    for (std::int64_t i = 0; i < resized.size(); ++i) {
      out.at(i) = (resized.at(i) - mn) / range;
    }
  }
  return out;
}

}  // namespace dsppnet
