#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acadet/data.hpp"
#include "acadet/detection.hpp"
#include "acadet/eval.hpp"
#include "acadet/model.hpp"
#include "acadet/param_store.hpp"

namespace acadet {

struct OptimConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

struct TrainConfig {
  int epochs = 120;
  int warmup_epochs = 5;
  int batch_size = 4;
  int eval_every = 10;
  // Early stop once both targets are met (0 disables a target).
  double target_train_map = 0.0;
  double target_holdout_map = 0.0;
};

struct EvalSettings {
  std::vector<double> tiou_thresholds = {0.3, 0.4, 0.5, 0.6, 0.7};
  double score_threshold = 0.05;
  int pre_nms_topk = 200;
};

enum class DataSource { synthetic, files };

struct DataConfig {
  DataSource source = DataSource::synthetic;
  SyntheticSpec synthetic;
  int holdout_videos = 8;  // synthetic source: taken off the end
  std::string annotations;
  std::string features_dir;
  std::string holdout_annotations;
  std::string holdout_features_dir;
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  OptimConfig optim;
  TrainConfig train;
  EvalSettings eval;
  SoftNmsConfig softnms;
  DataConfig data;
  std::uint64_t seed = 17;

  void validate() const;  // throws ConfigError
};

// Strict JSON load: unknown keys and type mismatches are ConfigErrors.
RunConfig load_run_config(const std::string& path);
RunConfig default_run_config();

// Applies "dotted.path=value" overrides (e.g. "optim.lr=0.01") on top of cfg.
RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::string>& sets);

std::string run_config_to_json_text(const RunConfig& cfg);

// Canonical (sorted-key, compact) form embedded in checkpoints.
std::string model_config_to_canonical_json(const ModelConfig& cfg);
ModelConfig model_config_from_json_text(const std::string& text);

// Linear warmup to base_lr over warmup_steps, then cosine decay to zero at
// total_steps. `step` is the 1-based index of the upcoming update.
double lr_schedule(long step, long total_steps, long warmup_steps,
                   double base_lr);

}  // namespace acadet
