// Command-line front end: rate inspection, synthetic data generation,
// training, ablation sweeps, evaluation, fine-tuning, and heatmap export.
//
// Exit codes: 0 success, 1 runtime failure (aborted training, incompatible
// checkpoint, I/O), 2 usage or config error.

#include "CLI11.hpp"

#include <dsppnet/config.hpp>
#include <dsppnet/data.hpp>
#include <dsppnet/dspp.hpp>
#include <dsppnet/eval.hpp>
#include <dsppnet/image_io.hpp>
#include <dsppnet/model.hpp>
#include <dsppnet/parallel.hpp>
#include <dsppnet/train.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dsppnet;

namespace {

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << text;
  out.flush();
  if (!out) {
    throw std::runtime_error("write failed: " + path.string());
  }
}

// Option storage shared by every subcommand.  Only flags the user actually
// passed are applied, so the precedence is: built-in defaults, then the
// config file, then DSPPNET_OUT, then explicit flags.
struct CommonFlags {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string out;
  std::string data;
  bool synthetic = false;
  int epochs = 0;
  int batch_size = 0;
  int alpha = 0;
  int threads = 0;

  void attach(CLI::App* cmd, bool training) {
    cmd->add_option("--config", config_path,
                    "key = value config file (flags override it)");
    cmd->add_option("--seed", seed, "master RNG seed");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--data", data, "dataset root with class subdirectories");
    cmd->add_flag("--synth", synthetic,
                  "use the synthetic blob dataset (ignore data_dir)");
    cmd->add_option("--alpha", alpha, "base dilation rate of the pyramid");
    cmd->add_option("--threads", threads, "worker threads (0 = hardware)");
    if (training) {
      cmd->add_option("--epochs", epochs, "training epochs");
      cmd->add_option("--batch-size", batch_size, "mini-batch size");
    }
  }

  static bool passed(const CLI::App* cmd, const std::string& name) {
    const CLI::Option* opt = cmd->get_option_no_throw(name);
    return opt != nullptr && opt->count() > 0;
  }

  RunConfig build(const CLI::App* cmd) const {
    RunConfig cfg;
    if (passed(cmd, "--config")) {
      try {
        cfg.apply(read_key_value_file(config_path));
      } catch (const std::runtime_error& e) {
        // An unreadable config file is a usage error (exit 2), not a
        // runtime failure.
        throw std::invalid_argument(e.what());
      }
    }
    if (const char* env = std::getenv("DSPPNET_OUT")) {
      cfg.out_dir = env;
    }
    KeyValueMap kv;
    if (passed(cmd, "--seed")) kv["seed"] = std::to_string(seed);
    if (passed(cmd, "--out")) kv["out_dir"] = out;
    if (passed(cmd, "--data")) kv["data_dir"] = data;
    if (passed(cmd, "--alpha")) kv["alpha"] = std::to_string(alpha);
    if (passed(cmd, "--threads")) kv["threads"] = std::to_string(threads);
    if (passed(cmd, "--epochs")) kv["epochs"] = std::to_string(epochs);
    if (passed(cmd, "--batch-size")) {
      kv["batch_size"] = std::to_string(batch_size);
    }
    cfg.apply(kv);
    if (passed(cmd, "--synth")) {
      cfg.data_dir.clear();
    }
    cfg.finalize();
    set_thread_count(cfg.threads);
    return cfg;
  }
};

DatasetSplit resolve_dataset(const RunConfig& cfg) {
  if (cfg.data_dir.empty()) {
    return generate_synthetic(cfg.synth, cfg.ratios);
  }
  return load_dataset(cfg.data_dir, cfg.ratios, cfg.data_seed(),
                      cfg.backbone.input_c, cfg.backbone.input_h,
                      cfg.backbone.input_w);
}

// The data pipeline produces images at the config's input size, so a
// checkpoint trained at a different size cannot be driven by this run.
void check_input_compat(const Checkpoint& ckpt, const RunConfig& cfg) {
  const BackboneConfig& a = ckpt.backbone;
  const BackboneConfig& b = cfg.backbone;
  auto mismatch = [](const char* dim, int have, int want) {
    std::ostringstream msg;
    msg << "incompatible checkpoint: " << dim << " is " << have
        << " but the run config requests " << want;
    throw std::runtime_error(msg.str());
  };
  if (a.input_h != b.input_h) mismatch("input_height", a.input_h, b.input_h);
  if (a.input_w != b.input_w) mismatch("input_width", a.input_w, b.input_w);
  if (a.input_c != b.input_c) mismatch("input_channels", a.input_c, b.input_c);
}

// Converts a loaded [C,H,W] image to the model's channel count and size.
Tensor prepare_image(const Tensor& img, const BackboneConfig& b) {
  const std::vector<int>& s = img.shape();
  const int c = s[0], h = s[1], w = s[2];
  Tensor converted = img;
  if (c != b.input_c) {
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::vector<double> out(static_cast<std::size_t>(b.input_c) * plane);
    if (c == 3 && b.input_c == 1) {
      for (std::size_t i = 0; i < plane; ++i) {
        out[i] = (img.values()[i] + img.values()[plane + i] +
                  img.values()[2 * plane + i]) /
                 3.0;
      }
    } else if (c == 1 && b.input_c == 3) {
      for (int ch = 0; ch < 3; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) {
          out[static_cast<std::size_t>(ch) * plane + i] = img.values()[i];
        }
      }
    } else {
      std::ostringstream msg;
      msg << "cannot convert a " << c << "-channel image to " << b.input_c
          << " channels";
      throw std::invalid_argument(msg.str());
    }
    converted = Tensor({b.input_c, h, w}, out);
  }
  if (h != b.input_h || w != b.input_w) {
    Tensor batch = Tensor::from_buffer({1, b.input_c, h, w}, converted.values());
    Tensor resized = bilinear_resize(batch, b.input_h, b.input_w);
    converted = Tensor::from_buffer({b.input_c, b.input_h, b.input_w},
                                    resized.values());
  }
  return converted;
}

Tensor gray_view(const Tensor& img) {
  const std::vector<int>& s = img.shape();
  if (s[0] == 1) {
    return Tensor::from_buffer({s[1], s[2]}, img.values());
  }
  const std::size_t plane = static_cast<std::size_t>(s[1]) * s[2];
  std::vector<double> out(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    out[i] = (img.values()[i] + img.values()[plane + i] +
              img.values()[2 * plane + i]) /
             3.0;
  }
  return Tensor({s[1], s[2]}, out);
}

int cmd_rates(const RunConfig& cfg) {
  Model model = build_model(cfg.backbone, cfg.ablation, cfg.model_seed(),
                            cfg.alpha, cfg.branch_channels);
  std::cout << schedule_csv(model.taps(), model.schedule());
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  DatasetSplit split = generate_synthetic(cfg.synth, cfg.ratios);
  fs::create_directories(cfg.out_dir);
  const int written = materialize(split, cfg.out_dir);
  std::cout << "wrote " << written << " images to " << cfg.out_dir << "\n";
  return 0;
}

void save_train_artifacts(const RunConfig& cfg, const Model& model,
                          const TrainResult& result,
                          const DatasetSplit& data) {
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text_file(out / "history.csv", history_csv(result.history));
  save_checkpoint(result.final, (out / "final.ckpt").string());
  save_checkpoint(result.best, (out / "best.ckpt").string());
  if (!data.test.empty()) {
    SplitEval ev = evaluate_split(model, data.test, cfg.optim.batch_size);
    write_text_file(out / "test_metrics.csv", metrics_csv(ev));
  }
  std::cout << "trained " << result.final.epoch << " epoch(s); artifacts in "
            << cfg.out_dir << "\n";
  if (!result.history.empty()) {
    std::cout << "final val_accuracy = " << result.history.back().val_accuracy
              << " (best epoch " << result.best.epoch << ")\n";
  }
}

int cmd_train(const RunConfig& cfg, bool describe) {
  Model model = build_model(cfg.backbone, cfg.ablation, cfg.model_seed(),
                            cfg.alpha, cfg.branch_channels);
  if (describe) {
    std::cout << model.describe();
    return 0;
  }
  DatasetSplit data = resolve_dataset(cfg);
  TrainResult result = train(model, data, cfg.optim);
  save_train_artifacts(cfg, model, result, data);
  return 0;
}

int cmd_finetune(const RunConfig& cfg, const std::string& ckpt_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  check_input_compat(ckpt, cfg);
  DatasetSplit data = resolve_dataset(cfg);
  TrainResult result = finetune(ckpt, data, cfg.optim);
  Model model = restore_model(result.final);
  save_train_artifacts(cfg, model, result, data);
  return 0;
}

int cmd_ablate(const RunConfig& cfg) {
  DatasetSplit data = resolve_dataset(cfg);
  if (data.val.empty()) {
    throw std::invalid_argument(
        "the ablation sweep compares validation metrics; the validation "
        "split is empty");
  }
  fs::create_directories(cfg.out_dir);
  const fs::path csv_path = fs::path(cfg.out_dir) / "ablation.csv";
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) {
    throw std::runtime_error("cannot open " + csv_path.string() +
                             " for writing");
  }
  csv << "dspp_stages,cid,parameters,val_accuracy,val_precision,val_recall,"
         "val_f1,val_auc\n"
      << std::flush;

  bool any_failed = false;
  for (const AblationConfig& row : ablation_matrix()) {
    try {
      Model model = build_model(cfg.backbone, row, cfg.model_seed(),
                                cfg.alpha, cfg.branch_channels);
      TrainResult result = train(model, data, cfg.optim);
      SplitEval ev = evaluate_split(model, data.val, cfg.optim.batch_size);
      std::ostringstream line;
      line.precision(17);
      line << row.stages_str() << ',' << (row.use_cid ? "on" : "off") << ','
           << model.parameter_count() << ',' << ev.metrics.accuracy << ','
           << ev.metrics.precision << ',' << ev.metrics.recall << ','
           << ev.metrics.f1 << ',' << ev.roc.auc << '\n';
      csv << line.str() << std::flush;  // keep finished rows on later failures
      std::cout << "ablation row " << row.descriptor()
                << ": val_accuracy = " << ev.metrics.accuracy << "\n";
    } catch (const std::exception& e) {
      any_failed = true;
      std::cerr << "ablation row " << row.descriptor() << " failed: "
                << e.what() << "\n";
    }
  }
  std::cout << "ablation table written to " << csv_path.string() << "\n";
  return any_failed ? 1 : 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ckpt_path,
             const std::string& split_name) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  check_input_compat(ckpt, cfg);
  Model model = restore_model(ckpt);
  DatasetSplit data = resolve_dataset(cfg);
  if (static_cast<int>(data.class_names.size()) != ckpt.backbone.classes) {
    std::ostringstream msg;
    msg << "incompatible checkpoint: classes is " << ckpt.backbone.classes
        << " but the dataset has " << data.class_names.size() << " classes";
    throw std::runtime_error(msg.str());
  }
  const std::vector<Sample>* samples = nullptr;
  if (split_name == "train") samples = &data.train;
  else if (split_name == "val") samples = &data.val;
  else if (split_name == "test") samples = &data.test;
  else throw std::invalid_argument("unknown split '" + split_name +
                                   "'; expected train, val, or test");
  if (samples->empty()) {
    throw std::invalid_argument("the '" + split_name + "' split is empty");
  }
  SplitEval ev = evaluate_split(model, *samples, cfg.optim.batch_size);
  fs::create_directories(cfg.out_dir);
  write_text_file(fs::path(cfg.out_dir) / "metrics.csv", metrics_csv(ev));
  if (ev.roc_defined) {
    write_text_file(fs::path(cfg.out_dir) / "roc.csv", roc_csv(ev.roc));
  }
  std::cout << "split = " << split_name
            << "  accuracy = " << ev.metrics.accuracy
            << "  f1 = " << ev.metrics.f1;
  if (ev.roc_defined) {
    std::cout << "  auc = " << ev.roc.auc;
  }
  std::cout << "\nmetrics written to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_gradcam(const RunConfig& cfg, const std::string& ckpt_path,
                const std::string& image_path) {
  Checkpoint ckpt = load_checkpoint(ckpt_path);
  check_input_compat(ckpt, cfg);
  Model model = restore_model(ckpt);

  Tensor image;  // [C,H,W] at the model's input size
  if (!image_path.empty()) {
    image = prepare_image(read_image(image_path), model.backbone());
  } else {
    // Default subject: the first positive-class validation sample (training
    // split as fallback) of the configured dataset.
    DatasetSplit data = resolve_dataset(cfg);
    const Sample* subject = nullptr;
    for (const std::vector<Sample>* split : {&data.val, &data.train}) {
      for (const Sample& s : *split) {
        if (s.label == 1) {
          subject = &s;
          break;
        }
      }
      if (subject != nullptr) break;
    }
    if (subject == nullptr) {
      throw std::invalid_argument(
          "no positive-class sample found; pass --image explicitly");
    }
    image = subject->image;
    std::cout << "subject: " << subject->source << "\n";
  }

  const std::vector<int>& s = image.shape();
  Tensor batch = Tensor::from_buffer({1, s[0], s[1], s[2]}, image.values());
  int target = cfg.gradcam_class;
  if (target < 0) {
    const Tensor logits = model.forward(batch);
    target = 0;
    for (int k = 1; k < logits.shape()[1]; ++k) {
      if (logits.at(k) > logits.at(target)) {
        target = k;
      }
    }
  }

  Tensor cam = grad_cam(model, image, target, cfg.gradcam_stage);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_pgm((out / "gradcam.pgm").string(), cam);
  write_overlay_ppm((out / "overlay.ppm").string(), gray_view(image), cam);
  std::cout << "target class = " << target << ", stage = "
            << cfg.gradcam_stage << "\n";
  std::cout << "wrote gradcam.pgm, overlay.ppm";

  if (model.ablation().use_cid) {
    Graph g;
    Model::Trace trace = model.forward_trace(g, batch, /*trainable=*/false);
    const Tensor& gate = g.value(trace.cid_gate);  // [1,1,H,W]
    const std::vector<int>& gs = gate.shape();
    Tensor map = Tensor::from_buffer({gs[2], gs[3]}, gate.values());
    write_pgm((out / "attention.pgm").string(), map);
    std::cout << ", attention.pgm";
  }
  std::cout << " to " << cfg.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Staged CNN with a multi-rate dilated pyramid and spatial attention: "
      "training, evaluation, and visualization on image folders or a "
      "synthetic benchmark"};
  app.require_subcommand(1);

  CLI::App* rates = app.add_subcommand(
      "rates", "Print the dilation-rate schedule of the pyramid as CSV");
  CommonFlags rates_flags;
  rates_flags.attach(rates, /*training=*/false);

  CLI::App* synth = app.add_subcommand(
      "synth", "Materialize the synthetic blob dataset as an image folder");
  CommonFlags synth_flags;
  synth_flags.attach(synth, /*training=*/false);

  CLI::App* train_cmd =
      app.add_subcommand("train", "Train a model and save checkpoints");
  CommonFlags train_flags;
  train_flags.attach(train_cmd, /*training=*/true);
  bool describe = false;
  train_cmd->add_flag("--describe", describe,
                      "print the architecture table and exit (no training)");

  CLI::App* ablate = app.add_subcommand(
      "ablate", "Train every module-placement row and tabulate the metrics");
  CommonFlags ablate_flags;
  ablate_flags.attach(ablate, /*training=*/true);

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Evaluate a checkpoint on one dataset split");
  CommonFlags eval_flags;
  eval_flags.attach(eval_cmd, /*training=*/true);
  std::string eval_ckpt;
  std::string eval_split = "val";
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")
      ->required();
  eval_cmd->add_option("--split", eval_split,
                       "dataset split to evaluate: train, val, or test");

  CLI::App* finetune_cmd = app.add_subcommand(
      "finetune", "Continue training from a checkpoint (fresh schedule)");
  CommonFlags finetune_flags;
  finetune_flags.attach(finetune_cmd, /*training=*/true);
  std::string finetune_ckpt;
  finetune_cmd->add_option("--checkpoint", finetune_ckpt, "checkpoint file")
      ->required();

  CLI::App* gradcam_cmd = app.add_subcommand(
      "gradcam", "Export localization heatmaps for one image");
  CommonFlags gradcam_flags;
  gradcam_flags.attach(gradcam_cmd, /*training=*/false);
  std::string gradcam_ckpt;
  std::string gradcam_image;
  int gradcam_stage = 0;
  int gradcam_class = 0;
  gradcam_cmd->add_option("--checkpoint", gradcam_ckpt, "checkpoint file")
      ->required();
  gradcam_cmd->add_option("--image", gradcam_image,
                          "input image (.pgm or .png); default: the first "
                          "positive validation sample");
  gradcam_cmd->add_option("--stage", gradcam_stage,
                          "backbone stage whose activations are mapped");
  gradcam_cmd->add_option("--target-class", gradcam_class,
                          "class index to explain (default: predicted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rates->parsed()) return cmd_rates(rates_flags.build(rates));
    if (synth->parsed()) return cmd_synth(synth_flags.build(synth));
    if (train_cmd->parsed()) {
      return cmd_train(train_flags.build(train_cmd), describe);
    }
    if (ablate->parsed()) return cmd_ablate(ablate_flags.build(ablate));
    if (eval_cmd->parsed()) {
      return cmd_eval(eval_flags.build(eval_cmd), eval_ckpt, eval_split);
    }
    if (finetune_cmd->parsed()) {
      return cmd_finetune(finetune_flags.build(finetune_cmd), finetune_ckpt);
    }
    if (gradcam_cmd->parsed()) {
      RunConfig cfg = gradcam_flags.build(gradcam_cmd);
      if (gradcam_cmd->count("--stage") > 0) {
        cfg.gradcam_stage = gradcam_stage;
        if (gradcam_stage < 1 || gradcam_stage > 6) {
          throw std::invalid_argument("--stage must lie in 1..6");
        }
      }
      if (gradcam_cmd->count("--target-class") > 0) {
        cfg.gradcam_class = gradcam_class;
      }
      return cmd_gradcam(cfg, gradcam_ckpt, gradcam_image);
    }
    return 2;  // unreachable: a subcommand is required
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
