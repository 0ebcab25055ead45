#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsppnet/data.hpp"
#include "dsppnet/eval.hpp"
#include "dsppnet/model.hpp"

namespace dsppnet {

struct OptimConfig {
  int epochs = 20;
  int batch_size = 32;
  double lr_max = 0.1;
  double lr_min = 1e-5;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 1;

  void validate() const;
};

// Cosine decay evaluated at integer epoch boundaries.  Arranged as the convex
// combination lr_min*(1-w) + lr_max*w with w = (1 + cos(pi*t/T))/2, so
// cosine_lr(0, T) == lr_max and cosine_lr(T, T) == lr_min exactly.
double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min);

// One SGD update of a single parameter tensor with classical momentum and
// coupled L2 weight decay, applied elementwise in index order:
//   g' = g + weight_decay * p;  v = momentum * v - lr * g';  p += v.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
              const OptimConfig& config);

struct EpochStats {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_precision = 0.0;
  double val_recall = 0.0;
  double val_f1 = 0.0;
  double val_auc = 0.0;
};

// "epoch,lr,train_loss,val_accuracy,val_precision,val_recall,val_f1,val_auc"
std::string history_csv(std::span<const EpochStats> history);

// Complete training state at one point in time: enough to resume, evaluate,
// or fine-tune.
struct Checkpoint {
  BackboneConfig backbone;
  AblationConfig ablation;
  int alpha = 3;
  int branch_channels = 64;
  int epoch = 0;  // epochs completed in the run that wrote it
  std::vector<EpochStats> history;
  std::vector<ParamSlot> params;
  std::vector<ParamSlot> velocities;  // parallel to params
};

Checkpoint make_checkpoint(const Model& model, std::span<const Tensor> velocities,
                           int epoch, std::span<const EpochStats> history);

// Binary format: magic "DSPP", u32 version, a length-prefixed key=value text
// block describing the architecture and history, then one record per tensor
// (u32 name length, name bytes, u32 rank, u32 dims, raw little-endian f64
// payload).  Velocities are stored under "velocity/<param name>".  Exact
// round-trip: save followed by load reproduces every double bit for bit.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds a model and copies the checkpoint parameters into it.
Model restore_model(const Checkpoint& ckpt);

struct TrainResult {
  Checkpoint final;           // state after the last epoch
  Checkpoint best;            // highest validation accuracy (final when no val)
  std::vector<EpochStats> history;
};

// Trains in place.  Per epoch: one cosine LR value, a fresh Fisher-Yates
// shuffle drawn from derive_seed(seed, "shuffle/<epoch>"), sequential batches
// of `batch_size` (last one short).  Validation runs after each epoch when a
// validation split is present.  With epochs == 0 the loop is skipped and both
// checkpoints hold the initial state.
TrainResult train(Model& model, const DatasetSplit& data, const OptimConfig& config);

// Same loop with fresh velocities and a fresh schedule, starting from the
// checkpoint's parameters.  The head is re-initialized (seeded from
// derive_seed(config.seed, "head")) when the dataset's class count differs
// from the checkpoint's.
TrainResult finetune(const Checkpoint& ckpt, const DatasetSplit& data,
                     const OptimConfig& config);

}  // namespace dsppnet
