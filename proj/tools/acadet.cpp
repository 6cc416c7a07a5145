// Command-line front end: training, evaluation, prediction, synthetic data
// generation, ablation sweeps, and the gradient checker.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "acadet/checkpoint.hpp"
#include "acadet/config.hpp"
#include "acadet/gradcheck.hpp"
#include "acadet/train.hpp"

namespace {

using namespace acadet;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON run configuration");
  cmd->add_option("--set", opts.sets,
                  "Override a config value, e.g. --set optim.lr=0.01");
  cmd->add_option("--seed", opts.seed, "Override the run seed")
      ->each([&opts](const std::string&) { opts.has_seed = true; });
}

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? default_run_config()
                                           : load_run_config(opts.config_path);
  if (!opts.sets.empty()) cfg = apply_overrides(cfg, opts.sets);
  if (opts.has_seed) cfg.seed = opts.seed;
  cfg.validate();
  return cfg;
}

const std::vector<VideoRecord>& pick_split(const LoadedData& data,
                                           const std::string& split) {
  if (split == "holdout") {
    if (data.holdout.empty()) throw ConfigError("no holdout videos configured");
    return data.holdout;
  }
  return data.train;
}

int cmd_train(const CommonOpts& opts, const std::string& out_dir, bool quiet) {
  RunConfig cfg = resolve_config(opts);
  TrainResult res = train_run(cfg, out_dir, !quiet);
  std::printf("trained %d epoch(s); final loss %s\n", res.epochs_run,
              fmt_double(res.final_loss).c_str());
  std::printf("train mAP %s  holdout mAP %s%s\n",
              fmt_double(res.final_train_map).c_str(),
              fmt_double(res.final_holdout_map).c_str(),
              res.reached_targets ? "  (targets reached)" : "");
  std::printf("checkpoints: %s, %s\n", res.best_checkpoint.c_str(),
              res.last_checkpoint.c_str());
  std::printf("metrics: %s\n", res.metrics_csv.c_str());
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt_path,
             const std::string& out_dir, const std::string& split) {
  RunConfig cfg = resolve_config(opts);
  Model model = load_model(ckpt_path);
  cfg.model = model.config();
  cfg.validate();
  LoadedData data = load_data(cfg);
  const std::vector<VideoRecord>& records = pick_split(data, split);

  std::filesystem::create_directories(out_dir);
  std::vector<VideoSegment> preds = predict_segments(model, records, cfg);
  std::vector<std::string> ids;
  for (const VideoRecord& r : records) ids.push_back(r.video_id);
  save_predictions(out_dir + "/predictions.json", ids, preds, data.labels);

  EvalReport report =
      evaluate(preds, ground_truth_segments(records), cfg.eval.tiou_thresholds);
  save_eval_report(out_dir + "/eval_report.json", report, data.labels);

  for (std::size_t i = 0; i < report.thresholds.size(); ++i)
    std::printf("mAP@%s = %s\n", fmt_double(report.thresholds[i]).c_str(),
                fmt_double(report.map_at[i]).c_str());
  std::printf("average mAP = %s\n", fmt_double(report.average_map).c_str());
  std::printf("wrote %s/predictions.json and %s/eval_report.json\n",
              out_dir.c_str(), out_dir.c_str());
  return 0;
}

int cmd_predict(const CommonOpts& opts, const std::string& ckpt_path,
                const std::string& out_dir, const std::string& split) {
  RunConfig cfg = resolve_config(opts);
  Model model = load_model(ckpt_path);
  cfg.model = model.config();
  cfg.validate();
  LoadedData data = load_data(cfg);
  const std::vector<VideoRecord>& records = pick_split(data, split);

  std::filesystem::create_directories(out_dir);
  std::vector<VideoSegment> preds = predict_segments(model, records, cfg);
  std::vector<std::string> ids;
  for (const VideoRecord& r : records) ids.push_back(r.video_id);
  save_predictions(out_dir + "/predictions.json", ids, preds, data.labels);
  std::printf("wrote %s/predictions.json (%zu segments over %zu videos)\n",
              out_dir.c_str(), preds.size(), ids.size());
  return 0;
}

int cmd_gen_data(const CommonOpts& opts, const std::string& out_dir) {
  RunConfig cfg = resolve_config(opts);
  if (cfg.data.source != DataSource::synthetic)
    throw ConfigError("gen-data requires data.source = synthetic");
  LoadedData data = load_data(cfg);
  std::filesystem::create_directories(out_dir);
  save_dataset(out_dir + "/annotations.json", out_dir + "/features",
               data.train, data.labels);
  std::printf("wrote %zu training videos under %s\n", data.train.size(),
              out_dir.c_str());
  if (!data.holdout.empty()) {
    save_dataset(out_dir + "/holdout_annotations.json",
                 out_dir + "/holdout_features", data.holdout, data.labels);
    std::printf("wrote %zu holdout videos under %s\n", data.holdout.size(),
                out_dir.c_str());
  }
  return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::string& out_dir,
               const std::vector<std::string>& grid, bool quiet) {
  RunConfig cfg = resolve_config(opts);
  std::vector<AblationResult> results =
      run_ablation(cfg, grid, out_dir, !quiet);
  std::printf("%-10s %14s %16s\n", "toggle", "best train mAP",
              "best holdout mAP");
  for (const AblationResult& r : results)
    std::printf("%-10s %14s %16s\n", r.name.c_str(),
                fmt_double(r.best_train_map).c_str(),
                fmt_double(r.best_holdout_map).c_str());
  std::printf("summary: %s/ablation.csv\n", out_dir.c_str());
  return 0;
}

int cmd_gradcheck(const std::string& problem, const FdOptions& fd) {
  std::vector<FdResult> results;
  if (problem.empty() || problem == "all") {
    results = run_all_gradchecks(fd);
  } else {
    results.push_back(run_gradcheck(problem, fd));
  }
  bool all_ok = true;
  for (const FdResult& r : results) {
    std::printf("%-22s %s  checked %3d  max rel err %.3e%s%s\n",
                r.problem.c_str(), r.passed ? "ok  " : "FAIL", r.checked,
                r.max_rel_err, r.passed ? "" : "  worst: ",
                r.passed ? "" : r.worst.c_str());
    all_ok = all_ok && r.passed;
  }
  if (!all_ok) {
    std::printf("gradient check FAILED\n");
    return 4;
  }
  std::printf("all gradient checks passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal action detection on 1D feature sequences"};
  app.require_subcommand(1);

  CommonOpts train_opts;
  std::string train_out = "runs/train";
  bool train_quiet = false;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--out", train_out, "Output directory");
  train_cmd->add_flag("--quiet", train_quiet, "Suppress per-epoch output");

  CommonOpts eval_opts;
  std::string eval_ckpt, eval_out = "runs/eval", eval_split = "train";
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Evaluate a checkpoint against a dataset");
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")
      ->required();
  eval_cmd->add_option("--out", eval_out, "Output directory");
  eval_cmd->add_option("--split", eval_split, "train or holdout")
      ->check(CLI::IsMember({"train", "holdout"}));

  CommonOpts pred_opts;
  std::string pred_ckpt, pred_out = "runs/predict", pred_split = "train";
  CLI::App* pred_cmd =
      app.add_subcommand("predict", "Write predictions for a dataset");
  add_common(pred_cmd, pred_opts);
  pred_cmd->add_option("--checkpoint", pred_ckpt, "Model checkpoint")
      ->required();
  pred_cmd->add_option("--out", pred_out, "Output directory");
  pred_cmd->add_option("--split", pred_split, "train or holdout")
      ->check(CLI::IsMember({"train", "holdout"}));

  CommonOpts gen_opts;
  std::string gen_out = "runs/data";
  CLI::App* gen_cmd =
      app.add_subcommand("gen-data", "Write the synthetic dataset to disk");
  add_common(gen_cmd, gen_opts);
  gen_cmd->add_option("--out", gen_out, "Output directory");

  CommonOpts abl_opts;
  std::string abl_out = "runs/ablation";
  bool abl_quiet = false;
  std::vector<std::string> abl_grid = {"full", "cam_only", "lcm_only"};
  CLI::App* abl_cmd =
      app.add_subcommand("ablate", "Train once per module toggle");
  add_common(abl_cmd, abl_opts);
  abl_cmd->add_option("--out", abl_out, "Output directory");
  abl_cmd->add_option("--grid", abl_grid,
                      "Module toggles to sweep (full, cam_only, lcm_only)");
  abl_cmd->add_flag("--quiet", abl_quiet, "Suppress per-epoch output");

  std::string gc_problem;
  FdOptions fd;
  CLI::App* gc_cmd = app.add_subcommand(
      "gradcheck", "Compare analytic gradients with finite differences");
  gc_cmd->add_option("--problem", gc_problem,
                     "Single problem name (default: all)");
  gc_cmd->add_option("--step", fd.h, "Finite-difference step");
  gc_cmd->add_option("--tol", fd.tol, "Max allowed relative error");
  gc_cmd->add_option("--coords", fd.coords_per_tensor,
                     "Coordinates sampled per tensor");
  gc_cmd->add_option("--seed", fd.seed, "Sampling seed");
  gc_cmd->add_option("--corrupt-op", fd.corrupt_op,
                     "Scale the named op's adjoint by 1.01 (negative control)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return cmd_train(train_opts, train_out, train_quiet);
    if (eval_cmd->parsed())
      return cmd_eval(eval_opts, eval_ckpt, eval_out, eval_split);
    if (pred_cmd->parsed())
      return cmd_predict(pred_opts, pred_ckpt, pred_out, pred_split);
    if (gen_cmd->parsed()) return cmd_gen_data(gen_opts, gen_out);
    if (abl_cmd->parsed())
      return cmd_ablate(abl_opts, abl_out, abl_grid, abl_quiet);
    if (gc_cmd->parsed()) return cmd_gradcheck(gc_problem, fd);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
