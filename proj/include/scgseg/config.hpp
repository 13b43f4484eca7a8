#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "scgseg/errors.hpp"
#include "scgseg/gcn.hpp"
#include "scgseg/losses.hpp"
#include "scgseg/model.hpp"

namespace scgseg {

// Flat run configuration covering data, model, loss, and optimizer settings.
// Values come from three layers with increasing precedence: the defaults
// below, then a config file, then command-line overrides -- both of the
// latter funnel through apply_setting with dotted keys.
struct RunConfig {
  // data
  std::string manifest;             // TSV: image path, mask path, id
  std::string image_dir, mask_dir;  // alternative to a manifest
  int synthetic_count = 0;          // > 0 generates data instead of loading
  int image_size = 512;
  double train_fraction = 268.0 / 318.0;

  // model
  int base_channels = 16;
  int latent_dim = 128;
  int node_grid = 16;
  int fuse_channels = 16;
  std::string gcn_norm = "symmetric";
  double dropout = 0.6;

  LossConfig loss;

  // training
  int batch_size = 4;
  int epochs = 250;
  int max_steps = 0;  // 0 means no cap
  double learning_rate = 1e-4;
  std::uint64_t seed = 42;
  bool deterministic = false;
  std::string checkpoint_dir = "checkpoints";
  std::string metrics_file = "metrics.csv";
  double threshold = 0.5;
};

namespace detail {
inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(n);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const unsigned long long n = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v +
                      "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}
}  // namespace detail

// Applies one dotted key = value setting; unknown keys are an error so typos
// in config files fail loudly instead of silently training with defaults.
inline void apply_setting(RunConfig& c, const std::string& key,
                          const std::string& value) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_u64;
  if (key == "data.manifest")
    c.manifest = value;
  else if (key == "data.image_dir")
    c.image_dir = value;
  else if (key == "data.mask_dir")
    c.mask_dir = value;
  else if (key == "data.synthetic_count")
    c.synthetic_count = parse_int(key, value);
  else if (key == "data.image_size")
    c.image_size = parse_int(key, value);
  else if (key == "data.train_fraction")
    c.train_fraction = parse_double(key, value);
  else if (key == "model.base_channels")
    c.base_channels = parse_int(key, value);
  else if (key == "model.latent_dim")
    c.latent_dim = parse_int(key, value);
  else if (key == "model.node_grid")
    c.node_grid = parse_int(key, value);
  else if (key == "model.fuse_channels")
    c.fuse_channels = parse_int(key, value);
  else if (key == "model.gcn_norm")
    c.gcn_norm = value;
  else if (key == "model.dropout")
    c.dropout = parse_double(key, value);
  else if (key == "loss.objective")
    c.loss.objective = value;
  else if (key == "loss.tversky_beta")
    c.loss.tversky_beta = parse_double(key, value);
  else if (key == "loss.focal_gamma")
    c.loss.focal_gamma = parse_double(key, value);
  else if (key == "loss.kl_weight")
    c.loss.kl_weight = parse_double(key, value);
  else if (key == "loss.dl_weight")
    c.loss.dl_weight = parse_double(key, value);
  else if (key == "loss.aux_weight")
    c.loss.aux_weight = parse_double(key, value);
  else if (key == "loss.smooth")
    c.loss.smooth = parse_double(key, value);
  else if (key == "train.batch_size")
    c.batch_size = parse_int(key, value);
  else if (key == "train.epochs")
    c.epochs = parse_int(key, value);
  else if (key == "train.max_steps")
    c.max_steps = parse_int(key, value);
  else if (key == "train.learning_rate")
    c.learning_rate = parse_double(key, value);
  else if (key == "train.seed")
    c.seed = parse_u64(key, value);
  else if (key == "train.deterministic")
    c.deterministic = parse_bool(key, value);
  else if (key == "train.checkpoint_dir")
    c.checkpoint_dir = value;
  else if (key == "train.metrics_file")
    c.metrics_file = value;
  else if (key == "train.threshold")
    c.threshold = parse_double(key, value);
  else
    throw ConfigError("unknown config key '" + key + "'");
}

// key = value lines, '#' starts a comment, blank lines are skipped.
inline void apply_config_text(RunConfig& c, std::istream& in,
                              const std::string& origin) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": empty key");
    apply_setting(c, key, value);
  }
}

inline void load_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  apply_config_text(c, in, path);
}

// Accepts "key=value" as passed on the command line.
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment +
                      "' is not of the form key=value");
  apply_setting(c, detail::trim(assignment.substr(0, eq)),
                detail::trim(assignment.substr(eq + 1)));
}

inline void validate_config(const RunConfig& c) {
  auto positive = [](const char* k, auto v) {
    if (v <= 0)
      throw ValidationError(std::string(k) + " must be positive, got " +
                            std::to_string(v));
  };
  positive("data.image_size", c.image_size);
  positive("model.base_channels", c.base_channels);
  positive("model.latent_dim", c.latent_dim);
  positive("model.node_grid", c.node_grid);
  positive("model.fuse_channels", c.fuse_channels);
  positive("train.batch_size", c.batch_size);
  positive("train.learning_rate", c.learning_rate);
  if (c.synthetic_count < 0)
    throw ValidationError("data.synthetic_count must be >= 0");
  if (c.epochs < 0) throw ValidationError("train.epochs must be >= 0");
  if (c.max_steps < 0) throw ValidationError("train.max_steps must be >= 0");
  if (c.image_size % 8 != 0)
    throw ValidationError("data.image_size must be divisible by 8, got " +
                          std::to_string(c.image_size));
  if (!(c.train_fraction > 0.0 && c.train_fraction < 1.0))
    throw ValidationError("data.train_fraction must lie in (0,1)");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0))
    throw ValidationError("model.dropout must lie in [0,1)");
  if (!(c.threshold > 0.0 && c.threshold < 1.0))
    throw ValidationError("train.threshold must lie in (0,1)");
  parse_gcn_norm(c.gcn_norm);  // throws on unknown names
  validate_loss_config(c.loss);
}

inline ModelConfig model_config(const RunConfig& c) {
  ModelConfig m;
  m.cnn.base_channels = c.base_channels;
  m.cnn.input_size = c.image_size;
  m.cnn.dropout_p = c.dropout;
  m.scg.node_h = c.node_grid;
  m.scg.node_w = c.node_grid;
  m.scg.latent_dim = c.latent_dim;
  m.head.fuse_channels = c.fuse_channels;
  m.head.dropout_p = c.dropout;
  m.head.threshold = c.threshold;
  m.gcn_norm = parse_gcn_norm(c.gcn_norm);
  return m;
}

// FNV-1a over the fields that determine parameter names and shapes; stored
// in checkpoints so a mismatched architecture is caught before loading.
inline std::uint64_t config_hash(const RunConfig& c) {
  std::ostringstream os;
  os << "base=" << c.base_channels << ";latent=" << c.latent_dim
     << ";nodes=" << c.node_grid << ";fuse=" << c.fuse_channels
     << ";norm=" << c.gcn_norm;
  const std::string s = os.str();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace scgseg
