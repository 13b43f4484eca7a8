#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "scgseg/adam.hpp"
#include "scgseg/checkpoint.hpp"
#include "scgseg/config.hpp"
#include "scgseg/data.hpp"
#include "scgseg/image_io.hpp"
#include "scgseg/losses.hpp"
#include "scgseg/metrics_log.hpp"
#include "scgseg/model.hpp"

namespace scgseg {

// Resolves the configured data source. Synthetic data wins over a manifest,
// which wins over a directory pair, so a config can keep its file paths while
// smoke-testing against generated data.
inline std::vector<ImageSample> load_dataset(const RunConfig& cfg) {
  if (cfg.synthetic_count > 0)
    return make_synthetic_dataset(cfg.synthetic_count, cfg.image_size,
                                  cfg.seed);
  std::vector<ManifestEntry> entries;
  if (!cfg.manifest.empty()) {
    entries = read_manifest(cfg.manifest);
  } else if (!cfg.image_dir.empty() && !cfg.mask_dir.empty()) {
    entries = pair_directories(cfg.image_dir, cfg.mask_dir);
  } else {
    throw ValidationError(
        "no data source: set data.synthetic_count, data.manifest, or "
        "data.image_dir + data.mask_dir");
  }
  std::vector<ImageSample> out;
  out.reserve(entries.size());
  for (const auto& e : entries)
    out.push_back(load_sample(e.image_path, e.mask_path, cfg.image_size, e.id));
  return out;
}

// Maps an image batch {B,1,S,S} to probabilities of the same shape. Tests
// inject oracle predictors here; the real one wraps an eval-mode forward.
using Predictor = std::function<Tensor<double>(const Tensor<double>&)>;

inline Predictor model_predictor(ParamStore<double>& store,
                                 const ModelConfig& cfg) {
  return [&store, cfg](const Tensor<double>& images) {
    Tape<double> t;
    Var batch = t.constant(images);
    ModelOutputs out = model_forward(t, batch, store, cfg, RunMode::eval());
    return t.val(out.prob);
  };
}

struct EvalRow {
  std::string id;
  double dice = 0, ftl = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_dice = 0, mean_ftl = 0;
};

// Per-sample hard dice (0.5 threshold) and soft focal-Tversky, plus their
// means. Samples are scored one at a time so every row is independent of
// batch composition.
inline EvalReport evaluate_dataset(const Predictor& predict,
                                   const std::vector<ImageSample>& samples,
                                   const LossConfig& loss) {
  if (samples.empty())
    throw ValidationError("evaluation needs a nonempty dataset");
  EvalReport rep;
  for (const auto& s : samples) {
    const int S_ = s.image.dim(0);
    Tensor<double> batch({1, 1, S_, S_});
    batch.data = s.image.data;
    Tensor<double> target({1, 1, S_, S_});
    target.data = s.mask.data;
    const Tensor<double> prob = predict(batch);
    EvalRow row;
    row.id = s.id;
    row.dice = hard_dice(prob, target);
    row.ftl = ftl_metric(prob, target, loss.tversky_beta, loss.focal_gamma,
                         loss.smooth);
    rep.mean_dice += row.dice;
    rep.mean_ftl += row.ftl;
    rep.rows.push_back(std::move(row));
  }
  rep.mean_dice /= double(rep.rows.size());
  rep.mean_ftl /= double(rep.rows.size());
  return rep;
}

namespace detail {
// The training loop aborts on the first non-finite loss term; naming the
// term turns "loss is NaN" into a usable diagnostic.
inline void require_finite(const char* name, double v, long long step) {
  if (!std::isfinite(v))
    throw ValidationError("non-finite loss term '" + std::string(name) +
                          "' (" + std::to_string(v) + ") at step " +
                          std::to_string(step));
}

struct BatchMetrics {
  double total = 0, primary = 0, kl = 0, dl = 0, aux = 0, dice = 0, ftl = 0;
};

template <typename S>
BatchMetrics bundle_metrics(const Tape<S>& t, const LossBundle& b,
                            const Tensor<S>& probs, const Tensor<S>& masks,
                            const LossConfig& loss, long long step) {
  BatchMetrics m;
  m.total = t.val(b.total).data[0];
  m.primary = t.val(b.primary).data[0];
  m.kl = t.val(b.kl).data[0];
  m.dl = t.val(b.dl).data[0];
  m.aux = t.val(b.aux).data[0];
  require_finite("primary", m.primary, step);
  require_finite("kl", m.kl, step);
  require_finite("dl", m.dl, step);
  require_finite("aux", m.aux, step);
  require_finite("total", m.total, step);
  m.dice = hard_dice(probs, masks);
  m.ftl = ftl_metric(probs, masks, loss.tversky_beta, loss.focal_gamma,
                     loss.smooth);
  return m;
}
}  // namespace detail

// Sample-weighted mean of loss terms and metrics over a split, eval mode.
inline detail::BatchMetrics eval_split(ParamStore<double>& store,
                                       const ModelConfig& mcfg,
                                       const LossConfig& loss,
                                       const std::vector<Batch>& batches,
                                       long long step) {
  detail::BatchMetrics acc;
  std::int64_t n = 0;
  for (const auto& batch : batches) {
    Tape<double> t;
    Var x = t.constant(batch.images);
    Var y = t.constant(batch.masks);
    ModelOutputs out = model_forward(t, x, store, mcfg, RunMode::eval());
    LossBundle b = composite_loss(t, out.prob, out.aux_prob, out.graph, y,
                                  loss);
    const auto m = detail::bundle_metrics(t, b, t.val(out.prob), batch.masks,
                                          loss, step);
    const double w = double(batch.images.dim(0));
    acc.total += w * m.total;
    acc.primary += w * m.primary;
    acc.kl += w * m.kl;
    acc.dl += w * m.dl;
    acc.aux += w * m.aux;
    acc.dice += w * m.dice;
    acc.ftl += w * m.ftl;
    n += batch.images.dim(0);
  }
  acc.total /= double(n);
  acc.primary /= double(n);
  acc.kl /= double(n);
  acc.dl /= double(n);
  acc.aux /= double(n);
  acc.dice /= double(n);
  acc.ftl /= double(n);
  return acc;
}

struct TrainResult {
  long long steps = 0;
  int epochs_run = 0;
  double best_test_dice = std::numeric_limits<double>::quiet_NaN();
  std::string last_checkpoint, best_checkpoint;
  std::string metrics_path;
};

// Full training run: forward / composite loss / backward / Adam step per
// batch, a train metrics row per step, a test row per epoch, best-by-test-
// dice and last checkpoints. Every random choice derives from cfg.seed, so a
// run is reproducible bit for bit (the CPU kernels are single-threaded and
// have no nondeterministic reductions).
inline TrainResult train_run(const RunConfig& cfg) {
  validate_config(cfg);
  const ModelConfig mcfg = model_config(cfg);
  const std::uint64_t arch_hash = config_hash(cfg);

  auto samples = load_dataset(cfg);
  DatasetSplit split =
      split_dataset(std::move(samples), cfg.train_fraction, cfg.seed);
  if (split.train.empty())
    throw ValidationError("train split is empty; lower data.train_fraction");

  ParamStore<double> store;
  Rng init_rng(cfg.seed);
  build_model(mcfg, store, init_rng);
  Adam<double> opt(store, cfg.learning_rate);
  Rng forward_rng(mix_seed(cfg.seed, 0x5eed));

  std::filesystem::create_directories(cfg.checkpoint_dir);
  const std::string last_path =
      (std::filesystem::path(cfg.checkpoint_dir) / "last.ckpt").string();
  const std::string best_path =
      (std::filesystem::path(cfg.checkpoint_dir) / "best.ckpt").string();
  MetricsWriter log(cfg.metrics_file);

  std::vector<Batch> test_batches;
  if (!split.test.empty())
    test_batches = make_batches(split.test, cfg.batch_size);

  TrainResult res;
  res.metrics_path = cfg.metrics_file;
  res.last_checkpoint = last_path;
  std::map<std::string, double> snapshot;
  long long step = 0;
  bool stop = false;

  auto run_test_eval = [&](int epoch) {
    if (test_batches.empty()) return;
    const auto m = eval_split(store, mcfg, cfg.loss, test_batches, step);
    log.append({step, epoch, "test", m.total, m.primary, m.kl, m.dl, m.aux,
                m.dice, m.ftl});
    snapshot["test_dice"] = m.dice;
    snapshot["test_total"] = m.total;
    if (std::isnan(res.best_test_dice) || m.dice > res.best_test_dice) {
      res.best_test_dice = m.dice;
      save_checkpoint(best_path, store, arch_hash, step, snapshot);
      res.best_checkpoint = best_path;
    }
  };

  for (int epoch = 1; epoch <= cfg.epochs && !stop; ++epoch) {
    auto batches = make_batches(split.train, cfg.batch_size,
                                mix_seed(cfg.seed, 1000 + epoch));
    for (const auto& batch : batches) {
      ++step;
      store.zero_grad();
      Tape<double> t;
      Var x = t.constant(batch.images);
      Var y = t.constant(batch.masks);
      ModelOutputs out =
          model_forward(t, x, store, mcfg, RunMode::training(forward_rng));
      LossBundle b =
          composite_loss(t, out.prob, out.aux_prob, out.graph, y, cfg.loss);
      const auto m = detail::bundle_metrics(t, b, t.val(out.prob),
                                            batch.masks, cfg.loss, step);
      t.backward(b.total);
      opt.step();
      log.append({step, epoch, "train", m.total, m.primary, m.kl, m.dl, m.aux,
                  m.dice, m.ftl});
      snapshot["train_total"] = m.total;
      snapshot["train_dice"] = m.dice;
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        stop = true;
        break;
      }
    }
    res.epochs_run = epoch;
    run_test_eval(epoch);
  }
  res.steps = step;
  save_checkpoint(last_path, store, arch_hash, step, snapshot);
  return res;
}

struct PredictResult {
  std::vector<std::string> outputs;
  std::vector<std::string> errors;  // "path: reason" per failed input
};

// A single image file, or every png/jpg/jpeg directly inside a directory.
inline std::vector<std::string> collect_inputs(const std::string& path) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path))
    throw IoError("input path '" + path + "' is neither a file nor a directory");
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    for (auto& c : ext) c = char(std::tolower(static_cast<unsigned char>(c)));
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
      files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// Writes <stem>.png binary masks (0/255) and optionally <stem>_prob.png
// 16-bit probability maps. Failures are collected per file so one bad input
// does not abort the batch.
inline PredictResult predict_files(ParamStore<double>& store,
                                   const ModelConfig& mcfg,
                                   const std::vector<std::string>& inputs,
                                   const std::string& out_dir,
                                   double threshold, bool save_prob,
                                   int image_size) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ValidationError("prediction threshold must lie in [0,1], got " +
                          std::to_string(threshold));
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Predictor predict = model_predictor(store, mcfg);
  PredictResult res;
  for (const auto& in : inputs) {
    try {
      Tensor<double> img = load_image_normalized(in, image_size);
      Tensor<double> batch({1, 1, image_size, image_size});
      batch.data = img.data;
      const Tensor<double> prob = predict(batch);
      Tensor<double> mask({image_size, image_size});
      for (std::int64_t i = 0; i < mask.size(); ++i)
        mask.data[i] = prob.data[i] >= threshold ? 1.0 : 0.0;
      const std::string stem = fs::path(in).stem().string();
      const std::string mask_path = (fs::path(out_dir) / (stem + ".png")).string();
      save_mask_png(mask_path, mask);
      res.outputs.push_back(mask_path);
      if (save_prob) {
        Tensor<double> p({image_size, image_size});
        p.data = prob.data;
        const std::string prob_path =
            (fs::path(out_dir) / (stem + "_prob.png")).string();
        save_prob_png16(prob_path, p);
        res.outputs.push_back(prob_path);
      }
    } catch (const std::exception& e) {
      res.errors.push_back(in + ": " + e.what());
    }
  }
  return res;
}

}  // namespace scgseg
