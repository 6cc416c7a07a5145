#include "acadet/config.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace acadet {

namespace {

using json = nlohmann::ordered_json;

constexpr double kPi = 3.14159265358979323846;

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + (path.empty() ? "<root>" : path) + ": " +
                    what);
}

std::string join(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

json to_json(const ModelConfig& c) {
  json j;
  j["in_dim"] = c.in_dim;
  j["embed_dim"] = c.embed_dim;
  j["levels"] = c.levels;
  j["cgb_kernels"] = c.cgb_kernels;
  j["cgb_mix_kernel"] = c.cgb_mix_kernel;
  j["lcm_large_kernel_min"] = c.lcm_large_kernel_min;
  j["lcm_large_kernel_max"] = c.lcm_large_kernel_max;
  j["lcm_small_kernels"] = c.lcm_small_kernels;
  j["mlp_ratio"] = c.mlp_ratio;
  j["num_classes"] = c.num_classes;
  j["head_layers"] = c.head_layers;
  j["head_kernel"] = c.head_kernel;
  switch (c.module_toggle) {
    case ModuleToggle::full: j["module_toggle"] = "full"; break;
    case ModuleToggle::cam_only: j["module_toggle"] = "cam_only"; break;
    case ModuleToggle::lcm_only: j["module_toggle"] = "lcm_only"; break;
  }
  j["downsample"] =
      c.downsample == DownsampleKind::maxpool ? "maxpool" : "strided_conv";
  return j;
}

json to_json(const LossConfig& c) {
  json j;
  j["lambda_reg"] = c.lambda_reg;
  j["focal_gamma"] = c.focal_gamma;
  j["focal_alpha"] = c.focal_alpha;
  j["center_sampling_radius"] = c.center_sampling_radius;
  json ranges = json::array();
  for (auto [lo, hi] : c.regression_ranges)
    ranges.push_back(json::array({lo, hi}));
  j["regression_ranges"] = std::move(ranges);
  return j;
}

json to_json(const OptimConfig& c) {
  json j;
  j["lr"] = c.lr;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["weight_decay"] = c.weight_decay;
  return j;
}

json to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["warmup_epochs"] = c.warmup_epochs;
  j["batch_size"] = c.batch_size;
  j["eval_every"] = c.eval_every;
  j["target_train_map"] = c.target_train_map;
  j["target_holdout_map"] = c.target_holdout_map;
  return j;
}

json to_json(const EvalSettings& c) {
  json j;
  j["tiou_thresholds"] = c.tiou_thresholds;
  j["score_threshold"] = c.score_threshold;
  j["pre_nms_topk"] = c.pre_nms_topk;
  return j;
}

json to_json(const SoftNmsConfig& c) {
  json j;
  j["method"] = c.method == SoftNmsMethod::gaussian ? "gaussian" : "linear";
  j["sigma"] = c.sigma;
  j["iou_cut"] = c.iou_cut;
  j["score_floor"] = c.score_floor;
  j["max_keep"] = c.max_keep;
  return j;
}

json to_json(const SyntheticSpec& c) {
  json j;
  j["num_videos"] = c.num_videos;
  j["num_classes"] = c.num_classes;
  j["min_length"] = c.min_length;
  j["max_length"] = c.max_length;
  j["in_dim"] = c.in_dim;
  j["min_segments"] = c.min_segments;
  j["max_segments"] = c.max_segments;
  j["min_segment_len"] = c.min_segment_len;
  j["max_segment_len"] = c.max_segment_len;
  j["noise"] = c.noise;
  j["seed"] = c.seed;
  return j;
}

json to_json(const DataConfig& c) {
  json j;
  j["source"] = c.source == DataSource::synthetic ? "synthetic" : "files";
  j["synthetic"] = to_json(c.synthetic);
  j["holdout_videos"] = c.holdout_videos;
  j["annotations"] = c.annotations;
  j["features_dir"] = c.features_dir;
  j["holdout_annotations"] = c.holdout_annotations;
  j["holdout_features_dir"] = c.holdout_features_dir;
  return j;
}

json to_json(const RunConfig& c) {
  json j;
  j["model"] = to_json(c.model);
  j["loss"] = to_json(c.loss);
  j["optim"] = to_json(c.optim);
  j["train"] = to_json(c.train);
  j["eval"] = to_json(c.eval);
  j["softnms"] = to_json(c.softnms);
  j["data"] = to_json(c.data);
  j["seed"] = c.seed;
  return j;
}

double num(const json& j, const std::string& path) {
  if (!j.is_number()) bad(path, "expected a number");
  return j.get<double>();
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad(path, "expected an integer");
  return j.get<int>();
}

std::uint64_t uinteger(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && !j.is_number_unsigned() &&
                                 j.get<std::int64_t>() < 0))
    bad(path, "expected a nonnegative integer");
  return j.get<std::uint64_t>();
}

std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) bad(path, "expected a string");
  return j.get<std::string>();
}

std::vector<int> int_list(const json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "expected an array of integers");
  std::vector<int> out;
  for (const auto& e : j) out.push_back(integer(e, path));
  return out;
}

std::vector<double> num_list(const json& j, const std::string& path) {
  if (!j.is_array()) bad(path, "expected an array of numbers");
  std::vector<double> out;
  for (const auto& e : j) out.push_back(num(e, path));
  return out;
}

ModelConfig model_from_json(const json& j, const std::string& p) {
  ModelConfig c;
  c.in_dim = integer(j.at("in_dim"), join(p, "in_dim"));
  c.embed_dim = integer(j.at("embed_dim"), join(p, "embed_dim"));
  c.levels = integer(j.at("levels"), join(p, "levels"));
  c.cgb_kernels = int_list(j.at("cgb_kernels"), join(p, "cgb_kernels"));
  c.cgb_mix_kernel = integer(j.at("cgb_mix_kernel"), join(p, "cgb_mix_kernel"));
  c.lcm_large_kernel_min =
      integer(j.at("lcm_large_kernel_min"), join(p, "lcm_large_kernel_min"));
  c.lcm_large_kernel_max =
      integer(j.at("lcm_large_kernel_max"), join(p, "lcm_large_kernel_max"));
  c.lcm_small_kernels =
      int_list(j.at("lcm_small_kernels"), join(p, "lcm_small_kernels"));
  c.mlp_ratio = integer(j.at("mlp_ratio"), join(p, "mlp_ratio"));
  c.num_classes = integer(j.at("num_classes"), join(p, "num_classes"));
  c.head_layers = integer(j.at("head_layers"), join(p, "head_layers"));
  c.head_kernel = integer(j.at("head_kernel"), join(p, "head_kernel"));
  const std::string toggle = text(j.at("module_toggle"), join(p, "module_toggle"));
  if (toggle == "full")
    c.module_toggle = ModuleToggle::full;
  else if (toggle == "cam_only")
    c.module_toggle = ModuleToggle::cam_only;
  else if (toggle == "lcm_only")
    c.module_toggle = ModuleToggle::lcm_only;
  else
    bad(join(p, "module_toggle"), "must be full, cam_only, or lcm_only");
  const std::string ds = text(j.at("downsample"), join(p, "downsample"));
  if (ds == "maxpool")
    c.downsample = DownsampleKind::maxpool;
  else if (ds == "strided_conv")
    c.downsample = DownsampleKind::strided_conv;
  else
    bad(join(p, "downsample"), "must be maxpool or strided_conv");
  return c;
}

LossConfig loss_from_json(const json& j, const std::string& p) {
  LossConfig c;
  c.lambda_reg = num(j.at("lambda_reg"), join(p, "lambda_reg"));
  c.focal_gamma = num(j.at("focal_gamma"), join(p, "focal_gamma"));
  c.focal_alpha = num(j.at("focal_alpha"), join(p, "focal_alpha"));
  c.center_sampling_radius =
      num(j.at("center_sampling_radius"), join(p, "center_sampling_radius"));
  const json& r = j.at("regression_ranges");
  const std::string rp = join(p, "regression_ranges");
  if (!r.is_array()) bad(rp, "expected an array of [lo, hi] pairs");
  c.regression_ranges.clear();
  for (const auto& e : r) {
    if (!e.is_array() || e.size() != 2) bad(rp, "each entry must be [lo, hi]");
    c.regression_ranges.emplace_back(num(e[0], rp), num(e[1], rp));
  }
  return c;
}

OptimConfig optim_from_json(const json& j, const std::string& p) {
  OptimConfig c;
  c.lr = num(j.at("lr"), join(p, "lr"));
  c.beta1 = num(j.at("beta1"), join(p, "beta1"));
  c.beta2 = num(j.at("beta2"), join(p, "beta2"));
  c.eps = num(j.at("eps"), join(p, "eps"));
  c.weight_decay = num(j.at("weight_decay"), join(p, "weight_decay"));
  return c;
}

TrainConfig train_from_json(const json& j, const std::string& p) {
  TrainConfig c;
  c.epochs = integer(j.at("epochs"), join(p, "epochs"));
  c.warmup_epochs = integer(j.at("warmup_epochs"), join(p, "warmup_epochs"));
  c.batch_size = integer(j.at("batch_size"), join(p, "batch_size"));
  c.eval_every = integer(j.at("eval_every"), join(p, "eval_every"));
  c.target_train_map =
      num(j.at("target_train_map"), join(p, "target_train_map"));
  c.target_holdout_map =
      num(j.at("target_holdout_map"), join(p, "target_holdout_map"));
  return c;
}

EvalSettings eval_from_json(const json& j, const std::string& p) {
  EvalSettings c;
  c.tiou_thresholds =
      num_list(j.at("tiou_thresholds"), join(p, "tiou_thresholds"));
  c.score_threshold = num(j.at("score_threshold"), join(p, "score_threshold"));
  c.pre_nms_topk = integer(j.at("pre_nms_topk"), join(p, "pre_nms_topk"));
  return c;
}

SoftNmsConfig softnms_from_json(const json& j, const std::string& p) {
  SoftNmsConfig c;
  const std::string m = text(j.at("method"), join(p, "method"));
  if (m == "gaussian")
    c.method = SoftNmsMethod::gaussian;
  else if (m == "linear")
    c.method = SoftNmsMethod::linear;
  else
    bad(join(p, "method"), "must be gaussian or linear");
  c.sigma = num(j.at("sigma"), join(p, "sigma"));
  c.iou_cut = num(j.at("iou_cut"), join(p, "iou_cut"));
  c.score_floor = num(j.at("score_floor"), join(p, "score_floor"));
  c.max_keep = integer(j.at("max_keep"), join(p, "max_keep"));
  return c;
}

SyntheticSpec synthetic_from_json(const json& j, const std::string& p) {
  SyntheticSpec c;
  c.num_videos = integer(j.at("num_videos"), join(p, "num_videos"));
  c.num_classes = integer(j.at("num_classes"), join(p, "num_classes"));
  c.min_length = integer(j.at("min_length"), join(p, "min_length"));
  c.max_length = integer(j.at("max_length"), join(p, "max_length"));
  c.in_dim = integer(j.at("in_dim"), join(p, "in_dim"));
  c.min_segments = integer(j.at("min_segments"), join(p, "min_segments"));
  c.max_segments = integer(j.at("max_segments"), join(p, "max_segments"));
  c.min_segment_len =
      integer(j.at("min_segment_len"), join(p, "min_segment_len"));
  c.max_segment_len =
      integer(j.at("max_segment_len"), join(p, "max_segment_len"));
  c.noise = num(j.at("noise"), join(p, "noise"));
  c.seed = uinteger(j.at("seed"), join(p, "seed"));
  return c;
}

DataConfig data_from_json(const json& j, const std::string& p) {
  DataConfig c;
  const std::string s = text(j.at("source"), join(p, "source"));
  if (s == "synthetic")
    c.source = DataSource::synthetic;
  else if (s == "files")
    c.source = DataSource::files;
  else
    bad(join(p, "source"), "must be synthetic or files");
  c.synthetic = synthetic_from_json(j.at("synthetic"), join(p, "synthetic"));
  c.holdout_videos = integer(j.at("holdout_videos"), join(p, "holdout_videos"));
  c.annotations = text(j.at("annotations"), join(p, "annotations"));
  c.features_dir = text(j.at("features_dir"), join(p, "features_dir"));
  c.holdout_annotations =
      text(j.at("holdout_annotations"), join(p, "holdout_annotations"));
  c.holdout_features_dir =
      text(j.at("holdout_features_dir"), join(p, "holdout_features_dir"));
  return c;
}

RunConfig run_from_json(const json& j) {
  RunConfig c;
  c.model = model_from_json(j.at("model"), "model");
  c.loss = loss_from_json(j.at("loss"), "loss");
  c.optim = optim_from_json(j.at("optim"), "optim");
  c.train = train_from_json(j.at("train"), "train");
  c.eval = eval_from_json(j.at("eval"), "eval");
  c.softnms = softnms_from_json(j.at("softnms"), "softnms");
  c.data = data_from_json(j.at("data"), "data");
  c.seed = uinteger(j.at("seed"), "seed");
  return c;
}

// Every key in `given` must exist in `schema`; objects recurse.
void check_unknown(const json& given, const json& schema,
                   const std::string& prefix) {
  if (!given.is_object()) {
    if (prefix.empty()) bad(prefix, "top level must be an object");
    return;
  }
  if (!schema.is_object()) bad(prefix, "unexpected nested object");
  for (const auto& [key, val] : given.items()) {
    const std::string path = join(prefix, key);
    if (!schema.contains(key)) bad(path, "unknown key");
    if (val.is_object()) check_unknown(val, schema.at(key), path);
  }
}

void deep_merge(json& dst, const json& src) {
  if (dst.is_object() && src.is_object()) {
    for (const auto& [key, val] : src.items()) deep_merge(dst[key], val);
  } else {
    dst = src;
  }
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  loss.ranges_for(model.levels);
  if (!(loss.lambda_reg >= 0)) throw ConfigError("config: loss.lambda_reg must be >= 0");
  if (!(loss.focal_gamma >= 0)) throw ConfigError("config: loss.focal_gamma must be >= 0");
  if (!(loss.focal_alpha > 0 && loss.focal_alpha < 1))
    throw ConfigError("config: loss.focal_alpha must be in (0, 1)");
  if (!(loss.center_sampling_radius > 0))
    throw ConfigError("config: loss.center_sampling_radius must be > 0");
  if (!(optim.lr > 0)) throw ConfigError("config: optim.lr must be > 0");
  if (!(optim.beta1 >= 0 && optim.beta1 < 1) ||
      !(optim.beta2 >= 0 && optim.beta2 < 1))
    throw ConfigError("config: optim betas must be in [0, 1)");
  if (!(optim.eps > 0)) throw ConfigError("config: optim.eps must be > 0");
  if (!(optim.weight_decay >= 0))
    throw ConfigError("config: optim.weight_decay must be >= 0");
  if (train.epochs < 0) throw ConfigError("config: train.epochs must be >= 0");
  if (train.warmup_epochs < 0)
    throw ConfigError("config: train.warmup_epochs must be >= 0");
  if (train.epochs > 0 && train.warmup_epochs >= train.epochs)
    throw ConfigError("config: train.warmup_epochs must be < train.epochs");
  if (train.batch_size < 1)
    throw ConfigError("config: train.batch_size must be >= 1");
  if (train.eval_every < 1)
    throw ConfigError("config: train.eval_every must be >= 1");
  if (eval.tiou_thresholds.empty())
    throw ConfigError("config: eval.tiou_thresholds must not be empty");
  for (double t : eval.tiou_thresholds)
    if (!(t > 0 && t <= 1))
      throw ConfigError("config: eval.tiou_thresholds must lie in (0, 1]");
  if (!(eval.score_threshold >= 0 && eval.score_threshold < 1))
    throw ConfigError("config: eval.score_threshold must be in [0, 1)");
  if (eval.pre_nms_topk < 1)
    throw ConfigError("config: eval.pre_nms_topk must be >= 1");
  if (!(softnms.sigma > 0))
    throw ConfigError("config: softnms.sigma must be > 0");
  if (!(softnms.iou_cut >= 0 && softnms.iou_cut <= 1))
    throw ConfigError("config: softnms.iou_cut must be in [0, 1]");
  if (!(softnms.score_floor >= 0))
    throw ConfigError("config: softnms.score_floor must be >= 0");
  if (softnms.max_keep < 0)
    throw ConfigError("config: softnms.max_keep must be >= 0 (0 = unlimited)");
  if (data.source == DataSource::synthetic) {
    data.synthetic.validate();
    if (data.holdout_videos < 0)
      throw ConfigError("config: data.holdout_videos must be >= 0");
    if (data.synthetic.num_classes != model.num_classes)
      throw ConfigError(
          "config: data.synthetic.num_classes must match model.num_classes");
    if (data.synthetic.in_dim != model.in_dim)
      throw ConfigError(
          "config: data.synthetic.in_dim must match model.in_dim");
  } else {
    if (data.annotations.empty() || data.features_dir.empty())
      throw ConfigError(
          "config: data.annotations and data.features_dir are required for "
          "the files source");
  }
}

RunConfig default_run_config() { return RunConfig{}; }

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open file: " + path);
  json given;
  try {
    given = json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: " + path + ": " + e.what());
  }
  json merged = to_json(RunConfig{});
  check_unknown(given, merged, "");
  deep_merge(merged, given);
  RunConfig cfg = run_from_json(merged);
  cfg.validate();
  return cfg;
}

RunConfig apply_overrides(const RunConfig& cfg,
                          const std::vector<std::string>& sets) {
  json merged = to_json(cfg);
  for (const std::string& s : sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("config: override must look like key.path=value: " + s);
    const std::string dotted = s.substr(0, eq);
    const std::string raw = s.substr(eq + 1);

    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const std::size_t dot = dotted.find('.', start);
      parts.push_back(dotted.substr(start, dot - start));
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    json* node = &merged;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
      if (!node->is_object() || !node->contains(parts[i]))
        throw ConfigError("config: unknown key in override: " + dotted);
      node = &(*node)[parts[i]];
    }
    if (!node->is_object() || !node->contains(parts.back()))
      throw ConfigError("config: unknown key in override: " + dotted);
    json value;
    try {
      value = json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      value = raw;  // bare string
    }
    (*node)[parts.back()] = value;
  }
  RunConfig out = run_from_json(merged);
  out.validate();
  return out;
}

std::string run_config_to_json_text(const RunConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

std::string model_config_to_canonical_json(const ModelConfig& cfg) {
  // nlohmann::json (non-ordered) sorts keys, giving a canonical byte form.
  return nlohmann::json::parse(to_json(cfg).dump()).dump();
}

ModelConfig model_config_from_json_text(const std::string& text_in) {
  json j;
  try {
    j = json::parse(text_in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  json merged = to_json(ModelConfig{});
  check_unknown(j, merged, "model");
  deep_merge(merged, j);
  ModelConfig cfg = model_from_json(merged, "model");
  cfg.validate();
  return cfg;
}

double lr_schedule(long step, long total_steps, long warmup_steps,
                   double base_lr) {
  ACADET_CHECK(step >= 1, "lr_schedule: step must be >= 1");
  ACADET_CHECK(total_steps >= 1, "lr_schedule: total_steps must be >= 1");
  ACADET_CHECK(warmup_steps >= 0 && warmup_steps < total_steps,
               "lr_schedule: need 0 <= warmup_steps < total_steps");
  if (step <= warmup_steps)
    return base_lr * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  double progress = static_cast<double>(step - warmup_steps) /
                    static_cast<double>(total_steps - warmup_steps);
  progress = std::min(progress, 1.0);
  return base_lr * 0.5 * (1.0 + std::cos(kPi * progress));
}

}  // namespace acadet
