#pragma once

#include <span>
#include <string>
#include <vector>

#include "dsppnet/data.hpp"
#include "dsppnet/model.hpp"

namespace dsppnet {

struct ConfusionCounts {
  long long tp = 0, fp = 0, fn = 0, tn = 0;
  long long total() const { return tp + fp + fn + tn; }
};

// Binary metrics with the 0/0 -> 0 convention; the `*_degenerate` flags
// record which ratios hit an empty denominator so callers can warn instead
// of silently reporting 0.
struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool f1_degenerate = false;
};

// Predicted positive iff score >= threshold; labels must be 0/1.
ConfusionCounts confusion(std::span<const double> scores, std::span<const int> labels,
                          double threshold);
Metrics metrics_from_counts(const ConfusionCounts& counts);

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

// Threshold sweep over the distinct scores in descending order; tied scores
// move together.  Points run from (0,0) to (1,1) and auc is the trapezoid
// area, which equals the tie-aware pairwise ranking statistic.  Requires both
// classes present.
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
};
RocCurve roc_auc(std::span<const double> scores, std::span<const int> labels);

std::string roc_csv(const RocCurve& curve);  // "fpr,tpr" rows

// Full evaluation of a model over a sample set.  `scores` is the positive
// class probability (softmax column 1) when the model is binary; predictions
// then use score >= 0.5.  For more than two classes only accuracy (argmax)
// is populated and `binary` is false.
struct SplitEval {
  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<int> predictions;
  ConfusionCounts counts;
  Metrics metrics;
  RocCurve roc;
  bool binary = false;
  bool roc_defined = false;  // both classes present in the labels
};
SplitEval evaluate_split(const Model& model, const std::vector<Sample>& samples,
                         int batch_size);

// "metric,value" rows for the metrics CSV artifact.
std::string metrics_csv(const SplitEval& eval);

// Class-discriminative localization map: gradients of logit `target_class`
// w.r.t. the chosen stage's activations are averaged per channel into
// weights, the weighted activation sum is rectified, bilinearly resized to
// the input resolution, and min-max normalized onto [0,1] (an all-zero map
// stays all-zero).  `image` is [C,H,W] or [1,C,H,W]; returns [H,W].
Tensor grad_cam(const Model& model, const Tensor& image, int target_class,
                int stage);

}  // namespace dsppnet
