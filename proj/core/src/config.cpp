#include "dsppnet/config.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "dsppnet/random.hpp"

namespace dsppnet {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* kind) {
  throw std::invalid_argument("config key '" + key + "': '" + value +
                              "' is not a valid " + kind);
}

}  // namespace

KeyValueMap parse_key_values(std::string_view text) {
  KeyValueMap out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const std::size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;

    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + stripped + "'");
    }
    const std::string key = trim(std::string_view(stripped).substr(0, eq));
    const std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": empty key");
    }
    out[key] = value;
  }
  return out;
}

KeyValueMap read_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_key_values(buf.str());
}

std::int64_t parse_int(const KeyValueMap& kv, const std::string& key,
                       std::int64_t fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  errno = 0;
  char* end = nullptr;
  const long long v = std::strtoll(it->second.c_str(), &end, 10);
  if (errno != 0 || end == it->second.c_str() || *end != '\0') {
    bad_value(key, it->second, "integer");
  }
  return v;
}

std::uint64_t parse_u64(const KeyValueMap& kv, const std::string& key,
                        std::uint64_t fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(it->second.c_str(), &end, 10);
  if (errno != 0 || end == it->second.c_str() || *end != '\0' ||
      it->second.find('-') != std::string::npos) {
    bad_value(key, it->second, "unsigned integer");
  }
  return v;
}

double parse_double(const KeyValueMap& kv, const std::string& key, double fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (errno != 0 || end == it->second.c_str() || *end != '\0') {
    bad_value(key, it->second, "number");
  }
  return v;
}

bool parse_bool(const KeyValueMap& kv, const std::string& key, bool fallback) {
  const auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  bad_value(key, v, "boolean");
}

std::vector<int> parse_int_list(const std::string& text, const std::string& key) {
  std::vector<int> out;
  std::string cur;
  auto flush = [&] {
    const std::string item = trim(cur);
    cur.clear();
    if (item.empty()) return;
    errno = 0;
    char* end = nullptr;
    const long v = std::strtol(item.c_str(), &end, 10);
    if (errno != 0 || end == item.c_str() || *end != '\0') {
      bad_value(key, item, "integer list element");
    }
    out.push_back(static_cast<int>(v));
  };
  for (char c : text) {
    if (c == ',') {
      flush();
    } else {
      cur += c;
    }
  }
  flush();
  return out;
}

void RunConfig::apply(const KeyValueMap& kv) {
  static const char* known[] = {
      "seed",           "alpha",          "branch_channels", "input_height",
      "input_width",    "input_channels", "stage_channels",  "classes",
      "dspp_stages",    "use_cid",        "epochs",          "batch_size",
      "lr_max",         "lr_min",         "momentum",        "weight_decay",
      "train_ratio",    "val_ratio",      "test_ratio",      "synth_per_class",
      "synth_radius_min", "synth_radius_max", "synth_intensity", "synth_noise",
      "data_dir",       "out_dir",        "threads",         "gradcam_stage",
      "gradcam_class",
  };
  for (const auto& [key, value] : kv) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) {
          return key == k;
        }) == std::end(known)) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
    (void)value;
  }

  seed = parse_u64(kv, "seed", seed);
  alpha = static_cast<int>(parse_int(kv, "alpha", alpha));
  branch_channels = static_cast<int>(parse_int(kv, "branch_channels", branch_channels));
  backbone.input_h = static_cast<int>(parse_int(kv, "input_height", backbone.input_h));
  backbone.input_w = static_cast<int>(parse_int(kv, "input_width", backbone.input_w));
  backbone.input_c = static_cast<int>(parse_int(kv, "input_channels", backbone.input_c));
  backbone.classes = static_cast<int>(parse_int(kv, "classes", backbone.classes));
  if (const auto it = kv.find("stage_channels"); it != kv.end()) {
    const std::vector<int> ch = parse_int_list(it->second, "stage_channels");
    if (ch.size() != 6) {
      throw std::invalid_argument("config key 'stage_channels': expected 6 values, got " +
                                  std::to_string(ch.size()));
    }
    std::copy(ch.begin(), ch.end(), backbone.stage_channels.begin());
  }
  if (const auto it = kv.find("dspp_stages"); it != kv.end()) {
    ablation.dspp_stages =
        it->second == "none" ? std::vector<int>{} : parse_int_list(it->second, "dspp_stages");
  }
  ablation.use_cid = parse_bool(kv, "use_cid", ablation.use_cid);

  optim.epochs = static_cast<int>(parse_int(kv, "epochs", optim.epochs));
  optim.batch_size = static_cast<int>(parse_int(kv, "batch_size", optim.batch_size));
  optim.lr_max = parse_double(kv, "lr_max", optim.lr_max);
  optim.lr_min = parse_double(kv, "lr_min", optim.lr_min);
  optim.momentum = parse_double(kv, "momentum", optim.momentum);
  optim.weight_decay = parse_double(kv, "weight_decay", optim.weight_decay);

  ratios.train = parse_double(kv, "train_ratio", ratios.train);
  ratios.val = parse_double(kv, "val_ratio", ratios.val);
  ratios.test = parse_double(kv, "test_ratio", ratios.test);

  synth.per_class = static_cast<int>(parse_int(kv, "synth_per_class", synth.per_class));
  synth.radius_min = parse_double(kv, "synth_radius_min", synth.radius_min);
  synth.radius_max = parse_double(kv, "synth_radius_max", synth.radius_max);
  synth.intensity = parse_double(kv, "synth_intensity", synth.intensity);
  synth.noise = parse_double(kv, "synth_noise", synth.noise);

  if (const auto it = kv.find("data_dir"); it != kv.end()) data_dir = it->second;
  if (const auto it = kv.find("out_dir"); it != kv.end()) out_dir = it->second;
  threads = static_cast<int>(parse_int(kv, "threads", threads));
  gradcam_stage = static_cast<int>(parse_int(kv, "gradcam_stage", gradcam_stage));
  gradcam_class = static_cast<int>(parse_int(kv, "gradcam_class", gradcam_class));
}

std::uint64_t RunConfig::model_seed() const { return derive_seed(seed, "model"); }
std::uint64_t RunConfig::data_seed() const { return derive_seed(seed, "data"); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(seed, "train"); }

void RunConfig::finalize() {
  backbone.validate();
  ablation.validate();
  optim.seed = train_seed();
  optim.validate();
  ratios.validate();
  synth.seed = data_seed();
  synth.height = backbone.input_h;
  synth.width = backbone.input_w;
  synth.validate();
  if (alpha < 1) throw std::invalid_argument("config key 'alpha': must be >= 1");
  if (branch_channels < 1) {
    throw std::invalid_argument("config key 'branch_channels': must be >= 1");
  }
  if (threads < 0) throw std::invalid_argument("config key 'threads': must be >= 0");
  if (gradcam_stage < 1 || gradcam_stage > 6) {
    throw std::invalid_argument("config key 'gradcam_stage': must be in [1, 6]");
  }
}

}  // namespace dsppnet
