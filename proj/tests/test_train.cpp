#include <cmath>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "dsppnet/data.hpp"
#include "dsppnet/model.hpp"
#include "dsppnet/random.hpp"
#include "dsppnet/tensor.hpp"
#include "dsppnet/train.hpp"

using dsppnet::AblationConfig;
using dsppnet::BackboneConfig;
using dsppnet::Checkpoint;
using dsppnet::DatasetSplit;
using dsppnet::EpochStats;
using dsppnet::Model;
using dsppnet::OptimConfig;
using dsppnet::Rng;
using dsppnet::Sample;
using dsppnet::SynthConfig;
using dsppnet::Tensor;
using dsppnet::TrainResult;
namespace fs = std::filesystem;

namespace {

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(),
                     sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

Model tiny_model(std::uint64_t seed, const AblationConfig& ablation = {{4, 5, 6}, true},
                 int classes = 2) {
  BackboneConfig b;
  b.input_h = 16;
  b.input_w = 16;
  b.input_c = 1;
  b.stage_channels = {4, 4, 4, 4, 4, 4};
  b.classes = classes;
  return dsppnet::build_model(b, ablation, seed, /*alpha=*/3, /*branch_channels=*/8);
}

DatasetSplit tiny_blobs(int per_class, dsppnet::SplitRatios ratios,
                        std::uint64_t seed = 5) {
  SynthConfig c;
  c.per_class = per_class;
  c.height = 16;
  c.width = 16;
  c.radius_min = 3.0;
  c.radius_max = 5.0;
  c.intensity = 1.0;
  c.noise = 0.2;
  c.seed = seed;
  return dsppnet::generate_synthetic(c, ratios);
}

std::vector<Tensor> param_copies(const Model& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.params()) out.push_back(p.value);
  return out;
}

std::vector<Tensor> zero_velocities(const Model& m) {
  std::vector<Tensor> out;
  for (const auto& p : m.params()) out.push_back(Tensor::zeros(p.value.shape()));
  return out;
}

}  // namespace

TEST_CASE("cosine schedule hits both endpoints exactly") {
  CHECK(dsppnet::cosine_lr(0, 20, 0.1, 1e-5) == 0.1);
  CHECK(dsppnet::cosine_lr(20, 20, 0.1, 1e-5) == 1e-5);
  // Halfway: w = (1 + cos(pi/2))/2 ~ 0.5, so lr ~ (0.1 + 1e-5)/2.
  CHECK(dsppnet::cosine_lr(10, 20, 0.1, 1e-5) ==
        doctest::Approx(0.050005).epsilon(1e-12));
  // Monotone decreasing across the whole run.
  double prev = dsppnet::cosine_lr(0, 10, 0.1, 1e-5);
  for (int t = 1; t <= 10; ++t) {
    const double cur = dsppnet::cosine_lr(t, 10, 0.1, 1e-5);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK_THROWS_AS(dsppnet::cosine_lr(0, 0, 0.1, 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(dsppnet::cosine_lr(-1, 10, 0.1, 1e-5), std::invalid_argument);
  CHECK_THROWS_AS(dsppnet::cosine_lr(11, 10, 0.1, 1e-5), std::invalid_argument);
}

TEST_CASE("plain gradient step without momentum or decay") {
  OptimConfig c;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  Tensor p({1}, {1.0});
  Tensor g({1}, {2.0});
  Tensor v = Tensor::zeros({1});
  dsppnet::sgd_step(p, g, v, 0.1, c);
  CHECK(v.at(0) == -0.2);
  CHECK(p.at(0) == 0.8);  // 1 - 0.1*2, exact in binary
}

TEST_CASE("first momentum step equals the plain step") {
  OptimConfig plain;
  plain.momentum = 0.0;
  plain.weight_decay = 0.0;
  OptimConfig heavy = plain;
  heavy.momentum = 0.9;
  Tensor p1({2}, {1.0, -0.5}), p2 = p1;
  Tensor g({2}, {0.25, 3.0});
  Tensor v1 = Tensor::zeros({2}), v2 = Tensor::zeros({2});
  dsppnet::sgd_step(p1, g, v1, 0.01, plain);
  dsppnet::sgd_step(p2, g, v2, 0.01, heavy);
  CHECK(same_bits(p1, p2));
  CHECK(same_bits(v1, v2));
}

TEST_CASE("two momentum steps match the hand-executed recurrence bitwise") {
  // Dyadic constants keep every product exact, so the comparison is immune
  // to how the compiler associates or fuses the arithmetic.
  OptimConfig c;
  c.momentum = 0.5;
  c.weight_decay = 0.0;
  const double lr = 0.25;
  Tensor p({1}, {1.0});
  Tensor g({1}, {1.0});
  Tensor v = Tensor::zeros({1});
  dsppnet::sgd_step(p, g, v, lr, c);
  // v1 = 0.5*0 - 0.25 = -0.25; p1 = 0.75.
  CHECK(v.at(0) == -0.25);
  CHECK(p.at(0) == 0.75);
  dsppnet::sgd_step(p, g, v, lr, c);
  // v2 = 0.5*(-0.25) - 0.25 = -0.375; p2 = 0.375.
  CHECK(v.at(0) == -0.375);
  CHECK(p.at(0) == 0.375);
}

TEST_CASE("classic momentum values land near the textbook result") {
  OptimConfig c;
  c.momentum = 0.9;
  c.weight_decay = 0.0;
  Tensor p({1}, {1.0});
  Tensor g({1}, {1.0});
  Tensor v = Tensor::zeros({1});
  dsppnet::sgd_step(p, g, v, 0.1, c);
  dsppnet::sgd_step(p, g, v, 0.1, c);
  // v1 = -0.1, p1 = 0.9, v2 = -0.19, p2 = 0.71 up to rounding.
  CHECK(p.at(0) == doctest::Approx(0.71).epsilon(1e-15));
  CHECK(v.at(0) == doctest::Approx(-0.19).epsilon(1e-15));
}

TEST_CASE("weight decay acts on the parameter even with zero gradient") {
  OptimConfig c;
  c.momentum = 0.0;
  c.weight_decay = 0.5;
  Tensor p({1}, {2.0});
  Tensor g = Tensor::zeros({1});
  Tensor v = Tensor::zeros({1});
  // g' = 0 + 0.5*2 = 1; v = -0.25; p = 1.75.  All dyadic, hence exact.
  dsppnet::sgd_step(p, g, v, 0.25, c);
  CHECK(p.at(0) == 1.75);
  CHECK(v.at(0) == -0.25);
}

TEST_CASE("optimizer config validation") {
  OptimConfig c;
  c.validate();
  c.epochs = -1;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = OptimConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = OptimConfig{};
  c.lr_max = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = OptimConfig{};
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("history csv serializes header plus one line per epoch") {
  CHECK(dsppnet::history_csv({}) ==
        "epoch,lr,train_loss,val_accuracy,val_precision,val_recall,val_f1,val_auc\n");
  std::vector<EpochStats> h(1);
  h[0].epoch = 1;
  h[0].lr = 0.5;
  h[0].train_loss = 0.25;
  h[0].val_accuracy = 1.0;
  h[0].val_precision = 0.75;
  h[0].val_recall = 0.5;
  h[0].val_f1 = 0.625;
  h[0].val_auc = 1.0;
  CHECK(dsppnet::history_csv(h) ==
        "epoch,lr,train_loss,val_accuracy,val_precision,val_recall,val_f1,val_auc\n"
        "1,0.5,0.25,1,0.75,0.5,0.625,1\n");
}

TEST_CASE("checkpoints round-trip through the binary file bit for bit") {
  Model model = tiny_model(21);
  Rng rng(99);
  std::vector<Tensor> vel = zero_velocities(model);
  for (Tensor& t : vel) {
    for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = rng.uniform(-1.0, 1.0);
  }
  std::vector<EpochStats> history(2);
  history[0] = {1, 0.1, 1.25, 0.5, 0.5, 1.0, 2.0 / 3.0, 0.625};
  history[1] = {2, 0.05, 0.75, 0.875, 0.8, 1.0, 8.0 / 9.0, 0.9375};
  Checkpoint c = dsppnet::make_checkpoint(model, vel, 2, history);

  const fs::path path =
      fs::temp_directory_path() / "dsppnet_train_tests" / "roundtrip.ckpt";
  fs::create_directories(path.parent_path());
  dsppnet::save_checkpoint(c, path.string());
  Checkpoint back = dsppnet::load_checkpoint(path.string());

  CHECK(back.backbone.input_h == 16);
  CHECK(back.backbone.stage_channels == std::array<int, 6>{4, 4, 4, 4, 4, 4});
  CHECK(back.backbone.classes == 2);
  CHECK(back.ablation.descriptor() == c.ablation.descriptor());
  CHECK(back.alpha == 3);
  CHECK(back.branch_channels == 8);
  CHECK(back.epoch == 2);
  REQUIRE(back.history.size() == 2);
  CHECK(back.history[1].lr == history[1].lr);
  CHECK(back.history[1].val_f1 == history[1].val_f1);
  CHECK(back.history[0].train_loss == history[0].train_loss);

  REQUIRE(back.params.size() == c.params.size());
  REQUIRE(back.velocities.size() == c.velocities.size());
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    CHECK(back.params[i].name == c.params[i].name);
    CHECK(same_bits(back.params[i].value, c.params[i].value));
    CHECK(same_bits(back.velocities[i].value, c.velocities[i].value));
  }

  // A restored model computes the same logits bitwise.
  Model restored = dsppnet::restore_model(back);
  Tensor batch = Tensor::zeros({2, 1, 16, 16});
  Rng brng(5);
  for (std::int64_t i = 0; i < batch.size(); ++i) batch.at(i) = brng.uniform(0.0, 1.0);
  CHECK(same_bits(restored.forward(batch), model.forward(batch)));

  CHECK_THROWS_AS(dsppnet::load_checkpoint((path.parent_path() / "nope.ckpt").string()),
                  std::runtime_error);
}

TEST_CASE("zero epochs returns the initial state untouched") {
  Model model = tiny_model(4);
  const std::vector<Tensor> init = param_copies(model);
  DatasetSplit data = tiny_blobs(4, {0.5, 0.5, 0.0});
  OptimConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 2;
  TrainResult r = dsppnet::train(model, data, cfg);
  CHECK(r.history.empty());
  CHECK(r.final.epoch == 0);
  CHECK(r.best.epoch == 0);
  REQUIRE(r.final.params.size() == init.size());
  for (std::size_t i = 0; i < init.size(); ++i) {
    CHECK(same_bits(r.final.params[i].value, init[i]));
    CHECK(same_bits(r.best.params[i].value, init[i]));
    for (std::int64_t j = 0; j < r.final.velocities[i].value.size(); ++j) {
      CHECK(r.final.velocities[i].value.at(j) == 0.0);
    }
  }
}

TEST_CASE("one sample for one epoch performs exactly one optimizer step") {
  Model model = tiny_model(11);
  const std::vector<Tensor> init = param_copies(model);

  DatasetSplit data;
  data.class_names = {"negative", "positive"};
  Sample s;
  s.label = 1;
  s.image = Tensor::zeros({1, 16, 16});
  Rng rng(17);
  for (std::int64_t i = 0; i < s.image.size(); ++i) {
    s.image.at(i) = rng.uniform(0.0, 1.0);
  }
  s.source = "positive/0000";
  data.train.push_back(std::move(s));

  OptimConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 1;
  TrainResult r = dsppnet::train(model, data, cfg);
  REQUIRE(r.history.size() == 1);
  CHECK(r.history[0].lr == cfg.lr_max);  // epoch 0 of the cosine schedule

  // With zero initial velocity, theta_1 = theta_0 + v_1 coordinate by
  // coordinate; re-doing that one addition must reproduce the stored bits.
  bool moved = false;
  for (std::size_t i = 0; i < init.size(); ++i) {
    const Tensor& fin = r.final.params[i].value;
    const Tensor& vel = r.final.velocities[i].value;
    for (std::int64_t j = 0; j < fin.size(); ++j) {
      CHECK(fin.at(j) == init[i].at(j) + vel.at(j));
      moved = moved || vel.at(j) != 0.0;
    }
  }
  CHECK(moved);
}

TEST_CASE("training shrinks the loss on an easy blob problem") {
  Model model = tiny_model(3);
  DatasetSplit data = tiny_blobs(12, {0.75, 0.25, 0.0});
  REQUIRE(data.train.size() == 18);
  REQUIRE(data.val.size() == 6);

  OptimConfig cfg;
  cfg.epochs = 12;
  cfg.batch_size = 6;
  cfg.lr_max = 0.02;
  cfg.lr_min = 1e-4;
  cfg.seed = 9;
  TrainResult r = dsppnet::train(model, data, cfg);

  REQUIRE(r.history.size() == 12);
  for (int e = 0; e < 12; ++e) {
    CHECK(r.history[static_cast<std::size_t>(e)].epoch == e + 1);
    CHECK(r.history[static_cast<std::size_t>(e)].lr ==
          dsppnet::cosine_lr(e, 12, cfg.lr_max, cfg.lr_min));
  }
  CHECK(r.history.back().train_loss < r.history.front().train_loss);

  // The best checkpoint is the first epoch attaining the maximum accuracy.
  int expect = 0;
  double best_acc = -1.0;
  for (const EpochStats& st : r.history) {
    if (st.val_accuracy > best_acc) {
      best_acc = st.val_accuracy;
      expect = st.epoch;
    }
  }
  CHECK(r.best.epoch == expect);
  CHECK(r.best.history.size() == static_cast<std::size_t>(expect));
  CHECK(r.best.history.back().val_accuracy == best_acc);
  CHECK(r.final.epoch == 12);
  CHECK(r.final.history.size() == 12);
}

TEST_CASE("identical runs produce bitwise identical checkpoints") {
  DatasetSplit data = tiny_blobs(6, {0.75, 0.25, 0.0});
  OptimConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 3;
  cfg.seed = 31;

  Model a = tiny_model(8);
  Model b = tiny_model(8);
  TrainResult ra = dsppnet::train(a, data, cfg);
  TrainResult rb = dsppnet::train(b, data, cfg);
  CHECK(dsppnet::history_csv(ra.history) == dsppnet::history_csv(rb.history));
  REQUIRE(ra.final.params.size() == rb.final.params.size());
  for (std::size_t i = 0; i < ra.final.params.size(); ++i) {
    CHECK(same_bits(ra.final.params[i].value, rb.final.params[i].value));
    CHECK(same_bits(ra.final.velocities[i].value, rb.final.velocities[i].value));
  }
}

TEST_CASE("finetuning from an untrained checkpoint replays a fresh run") {
  DatasetSplit data = tiny_blobs(6, {0.75, 0.25, 0.0});
  OptimConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 3;
  cfg.seed = 13;

  Model fresh = tiny_model(14);
  const std::vector<Tensor> vel = zero_velocities(fresh);
  Checkpoint start = dsppnet::make_checkpoint(fresh, vel, 0, {});

  TrainResult direct = dsppnet::train(fresh, data, cfg);
  TrainResult tuned = dsppnet::finetune(start, data, cfg);

  CHECK(dsppnet::history_csv(direct.history) == dsppnet::history_csv(tuned.history));
  REQUIRE(direct.final.params.size() == tuned.final.params.size());
  for (std::size_t i = 0; i < direct.final.params.size(); ++i) {
    CHECK(same_bits(direct.final.params[i].value, tuned.final.params[i].value));
  }
}

TEST_CASE("finetune with zero epochs keeps the checkpoint parameters") {
  Model model = tiny_model(2);
  Checkpoint start =
      dsppnet::make_checkpoint(model, zero_velocities(model), 0, {});
  DatasetSplit data = tiny_blobs(4, {1.0, 0.0, 0.0});
  OptimConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 2;
  TrainResult r = dsppnet::finetune(start, data, cfg);
  REQUIRE(r.final.params.size() == start.params.size());
  for (std::size_t i = 0; i < start.params.size(); ++i) {
    CHECK(r.final.params[i].name == start.params[i].name);
    CHECK(same_bits(r.final.params[i].value, start.params[i].value));
  }
}

TEST_CASE("finetune re-initializes the head when the class count changes") {
  Model model = tiny_model(6);
  Checkpoint start =
      dsppnet::make_checkpoint(model, zero_velocities(model), 0, {});

  DatasetSplit data;
  data.class_names = {"a", "b", "c"};
  Rng rng(23);
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.label = i;
    s.image = Tensor::zeros({1, 16, 16});
    for (std::int64_t p = 0; p < s.image.size(); ++p) {
      s.image.at(p) = rng.uniform(0.0, 1.0);
    }
    s.source = data.class_names[static_cast<std::size_t>(i)] + "/0000";
    data.train.push_back(std::move(s));
  }

  OptimConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 1;
  TrainResult r = dsppnet::finetune(start, data, cfg);

  REQUIRE(r.final.params.size() == start.params.size());
  for (std::size_t i = 0; i < start.params.size(); ++i) {
    const std::string& name = start.params[i].name;
    if (name == "head/weights") {
      CHECK(r.final.params[i].value.dim(0) == 3);
      CHECK(r.final.params[i].value.dim(1) == start.params[i].value.dim(1));
    } else if (name == "head/bias") {
      CHECK(r.final.params[i].value.dim(0) == 3);
    } else {
      CHECK(same_bits(r.final.params[i].value, start.params[i].value));
    }
  }
}

TEST_CASE("a poisoned parameter aborts training with epoch and batch context") {
  Model model = tiny_model(7);
  model.params()[0].value.at(0) = std::nan("");
  DatasetSplit data = tiny_blobs(4, {1.0, 0.0, 0.0});
  OptimConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 4;
  bool threw = false;
  try {
    dsppnet::train(model, data, cfg);
  } catch (const std::runtime_error& e) {
    threw = true;
    const std::string what = e.what();
    CHECK(what.find("training aborted at epoch 1, batch 1") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("train validates its dataset and batch size") {
  Model model = tiny_model(1);
  DatasetSplit empty;
  empty.class_names = {"negative", "positive"};
  OptimConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(dsppnet::train(model, empty, cfg), std::invalid_argument);

  DatasetSplit data = tiny_blobs(2, {1.0, 0.0, 0.0});
  cfg.batch_size = 64;  // larger than the four training images
  CHECK_THROWS_AS(dsppnet::train(model, data, cfg), std::invalid_argument);
}
