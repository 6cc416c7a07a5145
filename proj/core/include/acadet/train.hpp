#pragma once

#include <string>
#include <vector>

#include "acadet/checkpoint.hpp"
#include "acadet/config.hpp"
#include "acadet/data.hpp"
#include "acadet/eval.hpp"
#include "acadet/io.hpp"
#include "acadet/model.hpp"

namespace acadet {

struct LoadedData {
  std::vector<VideoRecord> train, holdout;
  std::vector<std::string> labels;
};

// Resolves the configured data source (shared synthetic corpus split into
// train/holdout, or annotation+feature files).
LoadedData load_data(const RunConfig& cfg);

// Batched inference over records in order: decode + SoftNMS per video.
std::vector<VideoSegment> predict_segments(Model& model,
                                           const std::vector<VideoRecord>& records,
                                           const RunConfig& cfg);

std::vector<VideoSegment> ground_truth_segments(
    const std::vector<VideoRecord>& records);

EvalReport evaluate_records(Model& model,
                            const std::vector<VideoRecord>& records,
                            const RunConfig& cfg);

struct EpochStat {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  bool evaluated = false;
  double train_map = 0.0;
  double holdout_map = 0.0;
};

struct TrainResult {
  std::vector<EpochStat> history;
  int epochs_run = 0;
  double final_loss = 0.0;
  double final_train_map = 0.0;
  double final_holdout_map = 0.0;
  double best_train_map = 0.0;
  double best_holdout_map = 0.0;
  bool reached_targets = false;
  std::string metrics_csv, best_checkpoint, last_checkpoint;
};

// Full training loop: AdamW with warmup+cosine schedule, periodic mAP
// evaluation, best/last checkpoints, metrics.csv and SVG curves under
// out_dir. Early-stops once the configured mAP targets are met.
TrainResult train_run(const RunConfig& cfg, const std::string& out_dir,
                      bool verbose);

struct AblationResult {
  std::string name;
  double best_train_map = 0.0;
  double best_holdout_map = 0.0;
  double final_train_map = 0.0;
  double final_holdout_map = 0.0;
};

// Trains one run per module toggle (identical data and schedule), writing
// each run under out_dir/<name>/ plus a summary ablation.csv.
std::vector<AblationResult> run_ablation(const RunConfig& base,
                                         const std::vector<std::string>& toggles,
                                         const std::string& out_dir,
                                         bool verbose);

}  // namespace acadet
