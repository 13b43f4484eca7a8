// Command-line harness: train / evaluate / predict / verify / curves over
// the segmentation library. Exit codes: 0 success, 1 validation or
// configuration error, 2 I/O error, 3 verification failure.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scgseg/config.hpp"
#include "scgseg/plot.hpp"
#include "scgseg/train.hpp"
#include "scgseg/verify.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  long long seed = -1;
  std::string device = "cpu";
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path,
                  "Config file of dotted key = value lines");
  cmd->add_option("--set", args.overrides,
                  "Override any config key, e.g. --set train.epochs=10")
      ->take_all();
  cmd->add_option("--seed", args.seed, "Random seed (train.seed)");
  cmd->add_option("--device", args.device, "Compute device")
      ->check(CLI::IsMember({"cpu", "gpu"}));
  cmd->add_flag("--deterministic", args.deterministic,
                "Force deterministic execution");
}

scgseg::RunConfig resolve_config(const CommonArgs& args) {
  scgseg::RunConfig cfg;
  if (!args.config_path.empty())
    scgseg::load_config_file(cfg, args.config_path);
  for (const auto& o : args.overrides) scgseg::apply_override(cfg, o);
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (args.deterministic) cfg.deterministic = true;
  if (args.device == "gpu")
    throw scgseg::ConfigError(
        "this build runs on cpu only; --device gpu is unavailable");
  return cfg;
}

// Builds the model store for the configured architecture and fills it from a
// checkpoint, refusing mismatched architectures.
scgseg::CheckpointInfo load_model(const scgseg::RunConfig& cfg,
                                  const std::string& ckpt_path,
                                  scgseg::ParamStore<double>& store) {
  scgseg::validate_config(cfg);
  scgseg::Rng rng(cfg.seed);
  scgseg::build_model(scgseg::model_config(cfg), store, rng);
  auto info = scgseg::load_checkpoint(ckpt_path, store);
  if (info.config_hash != scgseg::config_hash(cfg))
    throw scgseg::ValidationError(
        "checkpoint '" + ckpt_path +
        "' was written with a different architecture configuration; adjust "
        "the model.* settings to match the training run");
  return info;
}

int cmd_train(const CommonArgs& common) {
  auto cfg = resolve_config(common);
  auto res = scgseg::train_run(cfg);
  std::printf("trained %lld steps over %d epochs\n", res.steps,
              res.epochs_run);
  if (!std::isnan(res.best_test_dice))
    std::printf("best test dice %.4f (%s)\n", res.best_test_dice,
                res.best_checkpoint.c_str());
  std::printf("last checkpoint: %s\nmetrics: %s\n",
              res.last_checkpoint.c_str(), res.metrics_path.c_str());
  return 0;
}

int cmd_evaluate(const CommonArgs& common, const std::string& ckpt,
                 const std::string& out_path) {
  auto cfg = resolve_config(common);
  scgseg::ParamStore<double> store;
  auto info = load_model(cfg, ckpt, store);
  auto samples = scgseg::load_dataset(cfg);
  auto rep = scgseg::evaluate_dataset(
      scgseg::model_predictor(store, scgseg::model_config(cfg)), samples,
      cfg.loss);

  std::ostream* os = &std::cout;
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw scgseg::IoError("cannot write '" + out_path + "'");
    os = &file;
  }
  *os << "id,dice,ftl\n";
  os->precision(6);
  for (const auto& r : rep.rows)
    *os << r.id << ',' << r.dice << ',' << r.ftl << '\n';
  *os << "aggregate," << rep.mean_dice << ',' << rep.mean_ftl << '\n';
  std::fprintf(stderr, "checkpoint step %lld, %zu samples, mean dice %.4f\n",
               info.step, rep.rows.size(), rep.mean_dice);
  return 0;
}

int cmd_predict(const CommonArgs& common, const std::string& ckpt,
                const std::string& input, const std::string& out_dir,
                double threshold_flag, bool prob_maps) {
  auto cfg = resolve_config(common);
  // the prediction threshold is an argument of this operation, not part of
  // the model configuration, and may sit on the [0,1] boundary
  const double thr = threshold_flag >= 0 ? threshold_flag : cfg.threshold;
  scgseg::ParamStore<double> store;
  load_model(cfg, ckpt, store);
  auto files = scgseg::collect_inputs(input);
  auto res = scgseg::predict_files(store, scgseg::model_config(cfg), files,
                                   out_dir, thr, prob_maps, cfg.image_size);
  std::printf("wrote %zu files to %s\n", res.outputs.size(), out_dir.c_str());
  for (const auto& e : res.errors)
    std::fprintf(stderr, "error: %s\n", e.c_str());
  return res.errors.empty() ? 0 : 2;
}

int cmd_verify(const CommonArgs& common, const std::string& report_path,
               int trials, int e2e_params, bool quick) {
  auto cfg = resolve_config(common);
  if (quick) {
    trials = std::min(trials, 50);
    e2e_params = std::min(e2e_params, 6);
  }
  auto rep = scgseg::run_verification(cfg.seed, trials, e2e_params);
  for (const auto& c : rep.checks)
    std::printf("[%s] %-32s (%.2fs) %s\n", c.pass ? "PASS" : "FAIL",
                c.name.c_str(), c.seconds, c.detail.c_str());
  std::printf("parameters: %lld vs reference %lld (ratio %.4f)\n",
              static_cast<long long>(rep.param_count),
              static_cast<long long>(rep.unet64_params), rep.param_ratio);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw scgseg::IoError("cannot write '" + report_path + "'");
    out << scgseg::report_json(rep).dump(2) << "\n";
  }
  return rep.all_pass ? 0 : 3;
}

int cmd_curves(const std::string& log_path, const std::string& out_dir) {
  auto written = scgseg::emit_curves(log_path, out_dir);
  for (const auto& p : written) std::printf("wrote %s\n", p.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-augmented binary segmentation harness"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string ckpt, input, out_dir, out_path, log_path, report_path;
  double threshold = -1;
  bool prob_maps = false, quick = false;
  int trials = 1000, e2e_params = 20;

  auto* train = app.add_subcommand("train", "Train a model");
  add_common(train, common);

  auto* evaluate =
      app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  evaluate->add_option("--out", out_path, "Write the metrics CSV here");

  auto* predict =
      app.add_subcommand("predict", "Write segmentation masks for images");
  add_common(predict, common);
  predict->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  predict->add_option("--input", input, "Image file or directory")
      ->required();
  predict->add_option("--out-dir", out_dir, "Output directory")->required();
  predict->add_option("--threshold", threshold,
                      "Mask threshold (default from config)");
  predict->add_flag("--prob-maps", prob_maps,
                    "Also write 16-bit probability maps");

  auto* verify = app.add_subcommand("verify", "Run the self-check suite");
  add_common(verify, common);
  verify->add_option("--report", report_path, "Write a JSON report here");
  verify->add_option("--trials", trials, "Randomized trials per invariant");
  verify->add_option("--e2e-params", e2e_params,
                     "Sampled parameters for the end-to-end gradient check");
  verify->add_flag("--quick", quick, "Reduced trial counts for smoke tests");

  auto* curves = app.add_subcommand("curves", "Plot metrics from a log");
  curves->add_option("--log", log_path, "Metrics CSV from a training run")
      ->required();
  curves->add_option("--out-dir", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) return cmd_train(common);
    if (evaluate->parsed()) return cmd_evaluate(common, ckpt, out_path);
    if (predict->parsed())
      return cmd_predict(common, ckpt, input, out_dir, threshold, prob_maps);
    if (verify->parsed())
      return cmd_verify(common, report_path, trials, e2e_params, quick);
    if (curves->parsed()) return cmd_curves(log_path, out_dir);
  } catch (const scgseg::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return 2;
  } catch (const scgseg::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
