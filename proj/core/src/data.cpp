#include "dsppnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "dsppnet/image_io.hpp"
#include "dsppnet/ops.hpp"
#include "dsppnet/random.hpp"

namespace fs = std::filesystem;

namespace dsppnet {

void SplitRatios::validate() const {
  if (train < 0.0 || val < 0.0 || test < 0.0) {
    throw std::invalid_argument("split ratios must be non-negative");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw std::invalid_argument("split ratios must sum to 1");
  }
}

void SynthConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw std::invalid_argument("synth config: " + what);
  };
  if (per_class < 1) bad("per_class must be >= 1");
  if (height < 1 || width < 1) bad("image extents must be >= 1");
  if (!(radius_min > 0.0) || radius_max < radius_min) {
    bad("need 0 < radius_min <= radius_max");
  }
  if (!(intensity > 0.0) || intensity > 1.0) bad("intensity must lie in (0, 1]");
  if (noise < 0.0 || noise > 1.0) bad("noise amplitude must lie in [0, 1]");
  const int reach = static_cast<int>(std::ceil(radius_max));
  if (2 * reach > std::min(height, width) - 1) {
    bad("radius_max " + std::to_string(radius_max) +
        " does not fit inside a " + std::to_string(width) + "x" +
        std::to_string(height) + " image");
  }
}

namespace {

// Stratified routing of one class's samples into train/val/test.  Boundaries
// are round-half-up of the cumulative ratios, so class proportions are
// preserved to within one sample.
void split_class(std::vector<Sample>&& samples, const SplitRatios& ratios,
                 std::uint64_t seed, DatasetSplit* out) {
  const int n = static_cast<int>(samples.size());
  const std::vector<int> perm = random_permutation(n, seed);
  const int c1 = static_cast<int>(
      std::floor(static_cast<double>(n) * ratios.train + 0.5));
  const int c2 = static_cast<int>(
      std::floor(static_cast<double>(n) * (ratios.train + ratios.val) + 0.5));
  for (int i = 0; i < n; ++i) {
    Sample& s = samples[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    auto& dest = i < c1 ? out->train : (i < c2 ? out->val : out->test);
    dest.push_back(std::move(s));
  }
}

std::string zero_pad(int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*d", width, v);
  return buf;
}

}  // namespace

DatasetSplit generate_synthetic(const SynthConfig& config, const SplitRatios& ratios) {
  config.validate();
  ratios.validate();

  const int h = config.height, w = config.width;
  Rng rng(derive_seed(config.seed, "synth"));

  DatasetSplit out;
  out.class_names = {"negative", "positive"};

  for (int label = 0; label <= 1; ++label) {
    std::vector<Sample> samples;
    samples.reserve(static_cast<std::size_t>(config.per_class));
    for (int i = 0; i < config.per_class; ++i) {
      Sample s;
      s.label = label;
      s.source = out.class_names[static_cast<std::size_t>(label)] + "/" +
                 zero_pad(i, 4);
      Tensor img = Tensor::zeros({1, h, w});
      for (std::int64_t p = 0; p < img.size(); ++p) {
        img.at(p) = rng.uniform(0.0, config.noise);
      }
      if (label == 1) {
        const double r = rng.uniform(config.radius_min, config.radius_max);
        const int reach = static_cast<int>(std::ceil(r));
        const int cx = static_cast<int>(rng.uniform_int(reach, w - 1 - reach));
        const int cy = static_cast<int>(rng.uniform_int(reach, h - 1 - reach));
        const double sigma = r / 2.0;
        const double inv = 1.0 / (2.0 * sigma * sigma);
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            const double d2 = static_cast<double>((x - cx) * (x - cx) +
                                                  (y - cy) * (y - cy));
            img.at(static_cast<std::int64_t>(y) * w + x) +=
                config.intensity * std::exp(-d2 * inv);
          }
        }
        s.blob = Box{cx - reach, cy - reach, cx + reach, cy + reach};
      }
      for (std::int64_t p = 0; p < img.size(); ++p) {
        img.at(p) = std::min(1.0, std::max(0.0, img.at(p)));
      }
      s.image = std::move(img);
      samples.push_back(std::move(s));
    }
    split_class(std::move(samples), ratios,
                derive_seed(config.seed,
                            "split/" + out.class_names[static_cast<std::size_t>(label)]),
                &out);
  }
  return out;
}

DatasetSplit load_dataset(const std::string& root, const SplitRatios& ratios,
                          std::uint64_t seed, int target_c, int target_h,
                          int target_w) {
  ratios.validate();
  if (target_c != 1 && target_c != 3) {
    throw std::invalid_argument("load_dataset: target channel count must be 1 or 3");
  }
  if (target_h < 1 || target_w < 1) {
    throw std::invalid_argument("load_dataset: target extents must be >= 1");
  }
  if (!fs::is_directory(root)) {
    throw std::runtime_error("dataset root '" + root + "' is not a directory");
  }

  std::vector<std::string> classes;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) classes.push_back(entry.path().filename().string());
  }
  std::sort(classes.begin(), classes.end());
  if (classes.size() < 2) {
    throw std::runtime_error("dataset root '" + root +
                             "' needs at least two class directories");
  }

  DatasetSplit out;
  out.class_names = classes;
  for (std::size_t label = 0; label < classes.size(); ++label) {
    const fs::path dir = fs::path(root) / classes[label];
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() &&
          image_extension_supported(entry.path().filename().string())) {
        files.push_back(entry.path().filename().string());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw std::runtime_error("class directory '" + dir.string() +
                               "' contains no .pgm or .png images");
    }

    std::vector<Sample> samples;
    samples.reserve(files.size());
    for (const std::string& file : files) {
      Tensor img = read_image((dir / file).string());
      const int c = img.dim(0);
      if (c == 3 && target_c == 1) {
        // Channel average to grayscale.
        const std::int64_t plane =
            static_cast<std::int64_t>(img.dim(1)) * img.dim(2);
        Tensor gray = Tensor::zeros({1, img.dim(1), img.dim(2)});
        for (std::int64_t i = 0; i < plane; ++i) {
          gray.at(i) =
              (img.at(i) + img.at(plane + i) + img.at(2 * plane + i)) / 3.0;
        }
        img = std::move(gray);
      } else if (c == 1 && target_c == 3) {
        Tensor rgb = Tensor::zeros({3, img.dim(1), img.dim(2)});
        const std::int64_t plane =
            static_cast<std::int64_t>(img.dim(1)) * img.dim(2);
        for (int p = 0; p < 3; ++p) {
          for (std::int64_t i = 0; i < plane; ++i) {
            rgb.at(static_cast<std::int64_t>(p) * plane + i) = img.at(i);
          }
        }
        img = std::move(rgb);
      } else if (c != target_c) {
        throw std::runtime_error((dir / file).string() + ": has " +
                                 std::to_string(c) + " channels, expected " +
                                 std::to_string(target_c));
      }
      if (img.dim(1) != target_h || img.dim(2) != target_w) {
        Tensor batched = Tensor::from_buffer({1, img.dim(0), img.dim(1), img.dim(2)},
                                             img.values());
        Tensor resized = bilinear_resize(batched, target_h, target_w);
        img = Tensor::from_buffer({target_c, target_h, target_w}, resized.values());
      }

      Sample s;
      s.image = std::move(img);
      s.label = static_cast<int>(label);
      s.source = classes[label] + "/" + file;
      samples.push_back(std::move(s));
    }
    split_class(std::move(samples), ratios,
                derive_seed(seed, "split/" + classes[label]), &out);
  }
  return out;
}

int materialize(const DatasetSplit& split, const std::string& root) {
  int written = 0;
  auto dump = [&](const std::vector<Sample>& samples) {
    for (const Sample& s : samples) {
      const std::size_t slash = s.source.find('/');
      if (slash == std::string::npos || s.label < 0 ||
          s.label >= static_cast<int>(split.class_names.size())) {
        throw std::invalid_argument("materialize: sample '" + s.source +
                                    "' has no class prefix");
      }
      std::string file = s.source.substr(slash + 1);
      const std::size_t dot = file.find_last_of('.');
      if (dot != std::string::npos) file = file.substr(0, dot);
      const fs::path dir =
          fs::path(root) / split.class_names[static_cast<std::size_t>(s.label)];
      fs::create_directories(dir);

      Tensor gray = s.image;
      if (gray.rank() == 3 && gray.dim(0) == 3) {
        const std::int64_t plane =
            static_cast<std::int64_t>(gray.dim(1)) * gray.dim(2);
        Tensor g = Tensor::zeros({1, gray.dim(1), gray.dim(2)});
        for (std::int64_t i = 0; i < plane; ++i) {
          g.at(i) = (gray.at(i) + gray.at(plane + i) + gray.at(2 * plane + i)) / 3.0;
        }
        gray = std::move(g);
      }
      write_pgm((dir / (file + ".pgm")).string(), gray);
      ++written;
    }
  };
  dump(split.train);
  dump(split.val);
  dump(split.test);
  return written;
}

Tensor make_batch(const std::vector<Sample>& samples, const std::vector<int>& order,
                  std::size_t first, std::size_t last, std::vector<int>* labels) {
  if (first >= last || last > order.size()) {
    throw std::invalid_argument("make_batch: bad range");
  }
  const Sample& head = samples[static_cast<std::size_t>(order[first])];
  const int c = head.image.dim(0), h = head.image.dim(1), w = head.image.dim(2);
  const int n = static_cast<int>(last - first);
  Tensor batch = Tensor::zeros({n, c, h, w});
  const std::int64_t sample_size = head.image.size();
  if (labels) labels->clear();
  for (int i = 0; i < n; ++i) {
    const Sample& s =
        samples[static_cast<std::size_t>(order[first + static_cast<std::size_t>(i)])];
    if (!s.image.same_shape(head.image)) {
      throw std::invalid_argument("make_batch: sample '" + s.source +
                                  "' shape " + s.image.shape_str() +
                                  " differs from " + head.image.shape_str());
    }
    std::copy(s.image.values().begin(), s.image.values().end(),
              batch.values().begin() + static_cast<std::int64_t>(i) * sample_size);
    if (labels) labels->push_back(s.label);
  }
  return batch;
}

}  // namespace dsppnet
