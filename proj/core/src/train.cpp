#include "dsppnet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dsppnet/config.hpp"
#include "dsppnet/ops.hpp"
#include "dsppnet/random.hpp"

namespace dsppnet {

namespace {

constexpr char kMagic[4] = {'D', 'S', 'P', 'P'};
constexpr std::uint32_t kVersion = 1;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(std::span<const int> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

bool read_u32(std::istream& in, std::uint32_t* v) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() != 4) return false;
  *v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
       (static_cast<std::uint32_t>(b[2]) << 16) |
       (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

void write_f64(std::ostream& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

bool read_f64(std::istream& in, double* d) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (in.gcount() != 8) return false;
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  std::memcpy(d, &bits, 8);
  return true;
}

void write_tensor_record(std::ostream& out, const std::string& name, const Tensor& t) {
  write_u32(out, static_cast<std::uint32_t>(name.size()));
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  write_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (int a = 0; a < t.rank(); ++a) {
    write_u32(out, static_cast<std::uint32_t>(t.dim(a)));
  }
  for (std::int64_t i = 0; i < t.size(); ++i) write_f64(out, t.at(i));
}

std::string stats_line(const EpochStats& s) {
  return std::to_string(s.epoch) + "," + fmt_double(s.lr) + "," +
         fmt_double(s.train_loss) + "," + fmt_double(s.val_accuracy) + "," +
         fmt_double(s.val_precision) + "," + fmt_double(s.val_recall) + "," +
         fmt_double(s.val_f1) + "," + fmt_double(s.val_auc);
}

EpochStats parse_stats_line(const std::string& line) {
  std::vector<double> fields;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) fields.push_back(std::stod(item));
  if (fields.size() != 8) {
    throw std::runtime_error("checkpoint history row has " +
                             std::to_string(fields.size()) + " fields, expected 8");
  }
  EpochStats s;
  s.epoch = static_cast<int>(fields[0]);
  s.lr = fields[1];
  s.train_loss = fields[2];
  s.val_accuracy = fields[3];
  s.val_precision = fields[4];
  s.val_recall = fields[5];
  s.val_f1 = fields[6];
  s.val_auc = fields[7];
  return s;
}

}  // namespace

void OptimConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw std::invalid_argument("optimizer config: " + what);
  };
  if (epochs < 0) bad("epochs must be >= 0");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (!(lr_min > 0.0) || !(lr_max >= lr_min)) bad("need 0 < lr_min <= lr_max");
  if (momentum < 0.0 || momentum >= 1.0) bad("momentum must lie in [0, 1)");
  if (weight_decay < 0.0) bad("weight_decay must be >= 0");
}

double cosine_lr(int epoch, int total_epochs, double lr_max, double lr_min) {
  if (total_epochs < 1) {
    throw std::invalid_argument("cosine_lr: total_epochs must be >= 1");
  }
  if (epoch < 0 || epoch > total_epochs) {
    throw std::invalid_argument("cosine_lr: epoch out of [0, total_epochs]");
  }
  // Convex combination so the endpoints are exactly lr_max and lr_min.
  const double w =
      0.5 * (1.0 + std::cos(M_PI * (static_cast<double>(epoch) /
                                    static_cast<double>(total_epochs))));
  return lr_min * (1.0 - w) + lr_max * w;
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr,
              const OptimConfig& config) {
  if (!param.same_shape(grad) || !param.same_shape(velocity)) {
    throw std::invalid_argument("sgd_step: parameter " + param.shape_str() +
                                ", gradient " + grad.shape_str() +
                                " and velocity " + velocity.shape_str() +
                                " must share one shape");
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("sgd_step: learning rate must be positive and finite");
  }
  for (std::int64_t i = 0; i < param.size(); ++i) {
    const double g = grad.at(i) + config.weight_decay * param.at(i);
    velocity.at(i) = config.momentum * velocity.at(i) - lr * g;
    param.at(i) += velocity.at(i);
  }
}

std::string history_csv(std::span<const EpochStats> history) {
  std::string out =
      "epoch,lr,train_loss,val_accuracy,val_precision,val_recall,val_f1,val_auc\n";
  for (const EpochStats& s : history) out += stats_line(s) + "\n";
  return out;
}

Checkpoint make_checkpoint(const Model& model, std::span<const Tensor> velocities,
                           int epoch, std::span<const EpochStats> history) {
  if (velocities.size() != model.params().size()) {
    throw std::invalid_argument("make_checkpoint: velocity count mismatch");
  }
  Checkpoint c;
  c.backbone = model.backbone();
  c.ablation = model.ablation();
  c.alpha = model.alpha();
  c.branch_channels = model.branch_channels();
  c.epoch = epoch;
  c.history.assign(history.begin(), history.end());
  c.params = model.params();
  c.velocities.reserve(velocities.size());
  for (std::size_t i = 0; i < velocities.size(); ++i) {
    c.velocities.push_back({model.params()[i].name, velocities[i]});
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::string config;
  config += "format = dsppnet-checkpoint\n";
  config += "backbone.input_h = " + std::to_string(ckpt.backbone.input_h) + "\n";
  config += "backbone.input_w = " + std::to_string(ckpt.backbone.input_w) + "\n";
  config += "backbone.input_c = " + std::to_string(ckpt.backbone.input_c) + "\n";
  config += "backbone.stage_channels = " +
            join_ints(std::span<const int>(ckpt.backbone.stage_channels.data(), 6)) + "\n";
  config += "backbone.classes = " + std::to_string(ckpt.backbone.classes) + "\n";
  config += "ablation.dspp_stages = " + join_ints(ckpt.ablation.dspp_stages) + "\n";
  config += std::string("ablation.use_cid = ") + (ckpt.ablation.use_cid ? "1" : "0") + "\n";
  config += "alpha = " + std::to_string(ckpt.alpha) + "\n";
  config += "branch_channels = " + std::to_string(ckpt.branch_channels) + "\n";
  config += "epoch = " + std::to_string(ckpt.epoch) + "\n";
  config += "history.count = " + std::to_string(ckpt.history.size()) + "\n";
  for (std::size_t i = 0; i < ckpt.history.size(); ++i) {
    config += "history." + std::to_string(i + 1) + " = " +
              stats_line(ckpt.history[i]) + "\n";
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(config.size()));
  out.write(config.data(), static_cast<std::streamsize>(config.size()));
  for (const ParamSlot& p : ckpt.params) write_tensor_record(out, p.name, p.value);
  for (const ParamSlot& v : ckpt.velocities) {
    write_tensor_record(out, "velocity/" + v.name, v.value);
  }
  if (!out) throw std::runtime_error("short write to checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  auto corrupt = [&path](const std::string& what) -> std::runtime_error {
    return std::runtime_error("checkpoint '" + path + "': " + what);
  };

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    throw corrupt("bad magic (not a checkpoint file)");
  }
  std::uint32_t version = 0, config_len = 0;
  if (!read_u32(in, &version) || version != kVersion) {
    throw corrupt("unsupported version " + std::to_string(version));
  }
  if (!read_u32(in, &config_len)) throw corrupt("truncated header");
  std::string config(config_len, '\0');
  in.read(config.data(), config_len);
  if (static_cast<std::uint32_t>(in.gcount()) != config_len) {
    throw corrupt("truncated config block");
  }

  const KeyValueMap kv = parse_key_values(config);
  if (const auto it = kv.find("format");
      it == kv.end() || it->second != "dsppnet-checkpoint") {
    throw corrupt("missing or wrong format tag");
  }

  Checkpoint c;
  c.backbone.input_h = static_cast<int>(parse_int(kv, "backbone.input_h", 0));
  c.backbone.input_w = static_cast<int>(parse_int(kv, "backbone.input_w", 0));
  c.backbone.input_c = static_cast<int>(parse_int(kv, "backbone.input_c", 0));
  c.backbone.classes = static_cast<int>(parse_int(kv, "backbone.classes", 0));
  if (const auto it = kv.find("backbone.stage_channels"); it != kv.end()) {
    const std::vector<int> ch = parse_int_list(it->second, "backbone.stage_channels");
    if (ch.size() != 6) throw corrupt("stage_channels must have 6 entries");
    std::copy(ch.begin(), ch.end(), c.backbone.stage_channels.begin());
  } else {
    throw corrupt("missing backbone.stage_channels");
  }
  if (const auto it = kv.find("ablation.dspp_stages"); it != kv.end()) {
    c.ablation.dspp_stages = parse_int_list(it->second, "ablation.dspp_stages");
  }
  c.ablation.use_cid = parse_bool(kv, "ablation.use_cid", false);
  c.alpha = static_cast<int>(parse_int(kv, "alpha", 3));
  c.branch_channels = static_cast<int>(parse_int(kv, "branch_channels", 64));
  c.epoch = static_cast<int>(parse_int(kv, "epoch", 0));
  const std::int64_t rows = parse_int(kv, "history.count", 0);
  for (std::int64_t i = 1; i <= rows; ++i) {
    const auto it = kv.find("history." + std::to_string(i));
    if (it == kv.end()) throw corrupt("missing history row " + std::to_string(i));
    c.history.push_back(parse_stats_line(it->second));
  }

  // Tensor records until EOF.
  while (true) {
    std::uint32_t name_len = 0;
    if (!read_u32(in, &name_len)) break;  // clean EOF
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (static_cast<std::uint32_t>(in.gcount()) != name_len) {
      throw corrupt("truncated tensor name");
    }
    std::uint32_t rank = 0;
    if (!read_u32(in, &rank) || rank > 8) throw corrupt("bad tensor rank");
    std::vector<int> shape;
    std::int64_t count = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      std::uint32_t dim = 0;
      if (!read_u32(in, &dim) || dim == 0) throw corrupt("bad tensor dimension");
      shape.push_back(static_cast<int>(dim));
      count *= dim;
    }
    std::vector<double> data(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
      if (!read_f64(in, &data[static_cast<std::size_t>(i)])) {
        throw corrupt("truncated tensor payload for '" + name + "'");
      }
    }
    Tensor t(std::move(shape), std::move(data));
    if (name.rfind("velocity/", 0) == 0) {
      c.velocities.push_back({name.substr(9), std::move(t)});
    } else {
      c.params.push_back({std::move(name), std::move(t)});
    }
  }
  if (c.params.empty()) throw corrupt("no parameter records");
  return c;
}

Model restore_model(const Checkpoint& ckpt) {
  Model m = build_model(ckpt.backbone, ckpt.ablation, /*seed=*/0, ckpt.alpha,
                        ckpt.branch_channels);
  if (m.params().size() != ckpt.params.size()) {
    throw std::runtime_error(
        "checkpoint has " + std::to_string(ckpt.params.size()) +
        " parameter tensors but the architecture defines " +
        std::to_string(m.params().size()));
  }
  for (ParamSlot& slot : m.params()) {
    const auto it =
        std::find_if(ckpt.params.begin(), ckpt.params.end(),
                     [&slot](const ParamSlot& p) { return p.name == slot.name; });
    if (it == ckpt.params.end()) {
      throw std::runtime_error("checkpoint is missing parameter '" + slot.name + "'");
    }
    if (!it->value.same_shape(slot.value)) {
      throw std::runtime_error("checkpoint parameter '" + slot.name + "' has shape " +
                               it->value.shape_str() + ", expected " +
                               slot.value.shape_str());
    }
    slot.value = it->value;
  }
  return m;
}

TrainResult train(Model& model, const DatasetSplit& data, const OptimConfig& config) {
  config.validate();
  const std::size_t n = data.train.size();
  if (n == 0) {
    throw std::invalid_argument("train: the training split is empty");
  }
  if (static_cast<std::size_t>(config.batch_size) > n) {
    throw std::invalid_argument("train: batch_size " +
                                std::to_string(config.batch_size) +
                                " exceeds the training-set size " + std::to_string(n));
  }

  std::vector<Tensor> velocities;
  velocities.reserve(model.params().size());
  for (const ParamSlot& p : model.params()) {
    velocities.push_back(Tensor::zeros(p.value.shape()));
  }

  std::vector<EpochStats> history;
  Checkpoint best;
  double best_acc = -1.0;
  bool has_best = false;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, config.epochs, config.lr_max, config.lr_min);
    const std::vector<int> order = random_permutation(
        static_cast<int>(n),
        derive_seed(config.seed, "shuffle/" + std::to_string(epoch)));

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < n;
         first += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t last =
          std::min(n, first + static_cast<std::size_t>(config.batch_size));
      try {
        std::vector<int> labels;
        const Tensor batch = make_batch(data.train, order, first, last, &labels);
        Graph g;
        const Model::Trace trace = model.forward_trace(g, batch, /*trainable=*/true);
        const NodeId loss = softmax_cross_entropy(g, trace.logits, labels, "loss");
        loss_sum += g.value(loss).item() * static_cast<double>(last - first);

        GradMap grads = g.backward(loss);
        for (std::size_t i = 0; i < model.params().size(); ++i) {
          sgd_step(model.params()[i].value, grads.at(trace.param_ids[i]),
                   velocities[i], lr, config);
        }
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("training aborted at epoch " +
                                 std::to_string(epoch + 1) + ", batch " +
                                 std::to_string(batch_index + 1) + ": " + e.what());
      }
    }

    EpochStats stats;
    stats.epoch = epoch + 1;
    stats.lr = lr;
    stats.train_loss = loss_sum / static_cast<double>(n);
    if (!data.val.empty()) {
      const SplitEval ev = evaluate_split(model, data.val, config.batch_size);
      stats.val_accuracy = ev.metrics.accuracy;
      stats.val_precision = ev.metrics.precision;
      stats.val_recall = ev.metrics.recall;
      stats.val_f1 = ev.metrics.f1;
      stats.val_auc = ev.roc_defined ? ev.roc.auc : 0.0;
    }
    history.push_back(stats);

    if (!data.val.empty() && stats.val_accuracy > best_acc) {
      best_acc = stats.val_accuracy;
      best = make_checkpoint(model, velocities, epoch + 1, history);
      has_best = true;
    }
  }

  TrainResult result;
  result.history = history;
  result.final = make_checkpoint(model, velocities, config.epochs, history);
  result.best = has_best ? std::move(best) : result.final;
  return result;
}

TrainResult finetune(const Checkpoint& ckpt, const DatasetSplit& data,
                     const OptimConfig& config) {
  config.validate();
  Model model = restore_model(ckpt);
  const int classes = static_cast<int>(data.class_names.size());
  if (classes >= 2 && classes != model.backbone().classes) {
    model.reinit_head(classes, derive_seed(config.seed, "head"));
  }
  return train(model, data, config);
}

}  // namespace dsppnet
