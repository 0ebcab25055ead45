#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsppnet/tensor.hpp"

namespace dsppnet {

// Inclusive pixel box, used to record where a synthetic blob landed.
struct Box {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
  bool empty() const { return x1 < x0 || y1 < y0; }
  bool contains(int x, int y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

struct Sample {
  Tensor image;        // [C,H,W], values in [0,1]
  int label = 0;       // index into DatasetSplit::class_names
  std::string source;  // "<class>/<file>" provenance id
  Box blob;            // synthetic positives only; empty otherwise
};

struct DatasetSplit {
  std::vector<Sample> train, val, test;
  std::vector<std::string> class_names;  // lexicographic; index == label
};

// Fractions of each class routed to train/val/test.  Must be non-negative
// and sum to 1 within 1e-9.
struct SplitRatios {
  double train = 0.8;
  double val = 0.2;
  double test = 0.0;
  void validate() const;
};

// Synthetic blob benchmark: negatives are uniform noise in [0, noise]; for
// positives a Gaussian-profile disc (peak `intensity`, sigma = radius / 2,
// integer center placed so the disc fits) is added on top and the image is
// clamped to [0,1].  Class names are "negative" and "positive".
struct SynthConfig {
  int per_class = 300;
  int height = 64;
  int width = 64;
  double radius_min = 6.0;
  double radius_max = 12.0;
  double intensity = 0.9;
  double noise = 0.35;
  std::uint64_t seed = 1;
  void validate() const;
};

DatasetSplit generate_synthetic(const SynthConfig& config, const SplitRatios& ratios);

// Loads root/<class>/*.pgm|*.png.  Class index is the lexicographic rank of
// the class directory name; files are visited in lexicographic order.  Images
// are converted to `target_c` channels (RGB averaged to gray when target_c is
// 1, gray replicated when 3) and bilinearly resized to target_h x target_w
// when they differ.  The split is stratified per class with Fisher-Yates
// order drawn from derive_seed(seed, "split/<class>").
DatasetSplit load_dataset(const std::string& root, const SplitRatios& ratios,
                          std::uint64_t seed, int target_c, int target_h,
                          int target_w);

// Writes every sample of the split as root/<class>/<file>.pgm so a synthetic
// dataset can be re-loaded through the directory path.  Returns the number of
// files written.
int materialize(const DatasetSplit& split, const std::string& root);

// Stacks samples[indices[first..last)] into a batch tensor plus labels.
Tensor make_batch(const std::vector<Sample>& samples, const std::vector<int>& order,
                  std::size_t first, std::size_t last, std::vector<int>* labels);

}  // namespace dsppnet
