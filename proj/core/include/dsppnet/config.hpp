#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dsppnet/data.hpp"
#include "dsppnet/model.hpp"
#include "dsppnet/train.hpp"

namespace dsppnet {

// Flat "key = value" text with '#' comments and blank lines.  Keys and
// values are trimmed; duplicate keys keep the last occurrence; a line
// without '=' is an error.
using KeyValueMap = std::map<std::string, std::string>;
KeyValueMap parse_key_values(std::string_view text);
KeyValueMap read_key_value_file(const std::string& path);

// Typed accessors; all throw std::invalid_argument naming the key on a
// malformed value.
std::int64_t parse_int(const KeyValueMap& kv, const std::string& key,
                       std::int64_t fallback);
double parse_double(const KeyValueMap& kv, const std::string& key, double fallback);
bool parse_bool(const KeyValueMap& kv, const std::string& key, bool fallback);
std::uint64_t parse_u64(const KeyValueMap& kv, const std::string& key,
                        std::uint64_t fallback);
std::vector<int> parse_int_list(const std::string& text, const std::string& key);

// Everything a CLI run needs, with working defaults: an empty config is a
// valid 64x64 synthetic-data run of the full model.
struct RunConfig {
  std::uint64_t seed = 1;
  BackboneConfig backbone;
  AblationConfig ablation{{4, 5, 6}, true};
  OptimConfig optim;
  SynthConfig synth;
  // 5:1 train/val so the default synthetic benchmark (300 images per class)
  // lands on 500 training and 100 validation images.
  SplitRatios ratios{5.0 / 6.0, 1.0 / 6.0, 0.0};
  int alpha = 3;
  int branch_channels = 64;
  std::string data_dir;  // empty: use the synthetic generator
  std::string out_dir = "out";
  int threads = 0;  // 0 = hardware default
  int gradcam_stage = 6;
  int gradcam_class = -1;  // -1: use the predicted class

  // Applies a parsed key/value map on top of the current values.  Unknown
  // keys are an error listing the offender.
  void apply(const KeyValueMap& kv);

  // Derived seeds handed to the subsystems, all rooted at `seed`.
  std::uint64_t model_seed() const;
  std::uint64_t data_seed() const;
  std::uint64_t train_seed() const;

  void finalize();  // propagates seed/derived fields, validates everything
};

}  // namespace dsppnet
