#include "acadet/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "acadet/detection.hpp"

namespace acadet {

namespace {

std::vector<std::string> class_labels(int num_classes) {
  std::vector<std::string> labels;
  for (int c = 0; c < num_classes; ++c) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "class%02d", c);
    labels.push_back(buf);
  }
  return labels;
}

int pad_multiple_for(const ModelConfig& cfg) { return 1 << (cfg.levels - 1); }

}  // namespace

LoadedData load_data(const RunConfig& cfg) {
  LoadedData out;
  if (cfg.data.source == DataSource::synthetic) {
    SyntheticSpec spec = cfg.data.synthetic;
    spec.num_videos += cfg.data.holdout_videos;
    std::vector<VideoRecord> all = generate_synthetic(spec);
    out.train.assign(all.begin(), all.begin() + cfg.data.synthetic.num_videos);
    out.holdout.assign(all.begin() + cfg.data.synthetic.num_videos, all.end());
    out.labels = class_labels(cfg.data.synthetic.num_classes);
    return out;
  }
  out.labels = load_annotations(cfg.data.annotations).labels;
  if (static_cast<int>(out.labels.size()) != cfg.model.num_classes)
    throw ConfigError("training data has " + std::to_string(out.labels.size()) +
                      " labels but model.num_classes is " +
                      std::to_string(cfg.model.num_classes));
  out.train = load_dataset(cfg.data.annotations, cfg.data.features_dir);
  if (!cfg.data.holdout_annotations.empty()) {
    Annotations ha = load_annotations(cfg.data.holdout_annotations);
    for (const std::string& label : ha.labels)
      if (std::find(out.labels.begin(), out.labels.end(), label) ==
          out.labels.end())
        throw ConfigError("holdout label not present in training data: " +
                          label);
    out.holdout = load_dataset(cfg.data.holdout_annotations,
                               cfg.data.holdout_features_dir);
    // Re-map holdout class ids onto the training vocabulary.
    std::vector<int> remap(ha.labels.size());
    for (std::size_t i = 0; i < ha.labels.size(); ++i)
      remap[i] = static_cast<int>(
          std::find(out.labels.begin(), out.labels.end(), ha.labels[i]) -
          out.labels.begin());
    for (VideoRecord& rec : out.holdout)
      for (ActionSegment& seg : rec.segments) seg.class_id = remap[seg.class_id];
  }
  for (const VideoRecord& rec : out.train)
    if (rec.features.channels() != cfg.model.in_dim)
      throw ConfigError("video " + rec.video_id + " has " +
                        std::to_string(rec.features.channels()) +
                        " feature channels but model.in_dim is " +
                        std::to_string(cfg.model.in_dim));
  for (const VideoRecord& rec : out.holdout)
    if (rec.features.channels() != cfg.model.in_dim)
      throw ConfigError("video " + rec.video_id + " has " +
                        std::to_string(rec.features.channels()) +
                        " feature channels but model.in_dim is " +
                        std::to_string(cfg.model.in_dim));
  return out;
}

std::vector<VideoSegment> predict_segments(
    Model& model, const std::vector<VideoRecord>& records,
    const RunConfig& cfg) {
  std::vector<VideoSegment> preds;
  Rng dummy(0);
  const std::vector<Batch> batches =
      make_batches(records, cfg.train.batch_size, pad_multiple_for(cfg.model),
                   dummy, /*shuffle=*/false);
  for (const Batch& batch : batches) {
    const HeadOutputs outs = model.infer(batch.features);
    for (int b = 0; b < batch.features.batch(); ++b) {
      std::vector<ActionSegment> cands =
          decode(outs, b, cfg.eval.score_threshold, cfg.eval.pre_nms_topk);
      std::vector<ActionSegment> kept = soft_nms(std::move(cands), cfg.softnms);
      for (const ActionSegment& seg : kept)
        preds.push_back({batch.video_ids[b], seg});
    }
  }
  return preds;
}

std::vector<VideoSegment> ground_truth_segments(
    const std::vector<VideoRecord>& records) {
  std::vector<VideoSegment> gts;
  for (const VideoRecord& rec : records)
    for (const ActionSegment& seg : rec.segments)
      gts.push_back({rec.video_id, seg});
  return gts;
}

EvalReport evaluate_records(Model& model,
                            const std::vector<VideoRecord>& records,
                            const RunConfig& cfg) {
  return evaluate(predict_segments(model, records, cfg),
                  ground_truth_segments(records), cfg.eval.tiou_thresholds);
}

namespace {

void write_metrics_csv(const std::string& path,
                       const std::vector<EpochStat>& history) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write file: " + path);
  out << "epoch,lr,train_loss,train_map,holdout_map\n";
  for (const EpochStat& s : history) {
    out << s.epoch << "," << fmt_double(s.lr) << "," << fmt_double(s.loss)
        << ",";
    if (s.evaluated)
      out << fmt_double(s.train_map) << "," << fmt_double(s.holdout_map);
    else
      out << ",";
    out << "\n";
  }
  if (!out) throw DataError("cannot write file: " + path);
}

void write_curves(const std::string& out_dir,
                  const std::vector<EpochStat>& history, bool have_holdout) {
  PlotSeries loss{"train loss", {}};
  for (const EpochStat& s : history)
    loss.points.emplace_back(s.epoch, s.loss);
  write_line_plot(out_dir + "/loss_curve.svg", "Training loss", "epoch",
                  "loss per video", {loss});

  PlotSeries tm{"train mAP", {}}, hm{"holdout mAP", {}};
  for (const EpochStat& s : history)
    if (s.evaluated) {
      tm.points.emplace_back(s.epoch, s.train_map);
      if (have_holdout) hm.points.emplace_back(s.epoch, s.holdout_map);
    }
  std::vector<PlotSeries> series{tm};
  if (have_holdout) series.push_back(hm);
  write_line_plot(out_dir + "/map_curve.svg", "Detection quality", "epoch",
                  "average mAP", series);
}

}  // namespace

TrainResult train_run(const RunConfig& cfg, const std::string& out_dir,
                      bool verbose) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);

  LoadedData data = load_data(cfg);
  if (data.train.empty()) throw ConfigError("no training videos");

  Model model(cfg.model);
  model.init_params(cfg.seed);
  AdamW optim(model.params(), AdamWConfig{cfg.optim.beta1, cfg.optim.beta2,
                                          cfg.optim.eps,
                                          cfg.optim.weight_decay});

  TrainResult res;
  res.metrics_csv = out_dir + "/metrics.csv";
  res.best_checkpoint = out_dir + "/model_best.ckpt";
  res.last_checkpoint = out_dir + "/model_last.ckpt";

  const long spe = (static_cast<long>(data.train.size()) +
                    cfg.train.batch_size - 1) /
                   cfg.train.batch_size;
  const long total_steps = std::max<long>(1, cfg.train.epochs * spe);
  const long warmup_steps = cfg.train.warmup_epochs * spe;
  const int pad = pad_multiple_for(cfg.model);

  Rng shuffle_root = Rng(cfg.seed).fork(0x5f5f);
  const bool have_holdout = !data.holdout.empty();
  const bool targets_enabled =
      cfg.train.target_train_map > 0.0 ||
      (have_holdout && cfg.train.target_holdout_map > 0.0);
  double best_metric = -1.0;
  long step = 0;

  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    Rng epoch_rng = shuffle_root.fork(static_cast<std::uint64_t>(epoch));
    std::vector<Batch> batches = make_batches(
        data.train, cfg.train.batch_size, pad, epoch_rng, /*shuffle=*/true);

    EpochStat stat;
    stat.epoch = epoch;
    double loss_sum = 0.0;
    for (const Batch& batch : batches) {
      ++step;
      const double lr =
          lr_schedule(step, total_steps, warmup_steps, cfg.optim.lr);
      stat.lr = lr;

      model.params().zero_grads();
      Graph g;
      HeadGraph hg = model.forward(g, batch.features);
      AssignmentTargets targets =
          assign_targets(batch.segments, level_shapes(hg), cfg.loss);
      Value loss = total_loss(g, hg, targets, cfg.loss);
      loss_sum += loss.tensor().at(0, 0, 0);
      g.backward(loss);
      optim.step(lr);
    }
    stat.loss = loss_sum / static_cast<double>(data.train.size());

    const bool last_epoch = epoch == cfg.train.epochs;
    if (epoch % cfg.train.eval_every == 0 || last_epoch) {
      stat.evaluated = true;
      stat.train_map = evaluate_records(model, data.train, cfg).average_map;
      stat.holdout_map =
          have_holdout ? evaluate_records(model, data.holdout, cfg).average_map
                       : 0.0;
      res.best_train_map = std::max(res.best_train_map, stat.train_map);
      res.best_holdout_map = std::max(res.best_holdout_map, stat.holdout_map);
      res.final_train_map = stat.train_map;
      res.final_holdout_map = stat.holdout_map;

      const double metric = have_holdout ? stat.holdout_map : stat.train_map;
      if (metric > best_metric) {
        best_metric = metric;
        save_checkpoint(res.best_checkpoint, cfg.model, model.params());
      }
    }
    res.history.push_back(stat);
    res.final_loss = stat.loss;
    res.epochs_run = epoch;
    if (verbose) {
      std::printf("epoch %3d  lr %.6f  loss %.5f", epoch, stat.lr, stat.loss);
      if (stat.evaluated) {
        std::printf("  train mAP %.4f", stat.train_map);
        if (have_holdout) std::printf("  holdout mAP %.4f", stat.holdout_map);
      }
      std::printf("\n");
      std::fflush(stdout);
    }

    if (targets_enabled && stat.evaluated) {
      const bool train_ok = cfg.train.target_train_map <= 0.0 ||
                            stat.train_map >= cfg.train.target_train_map;
      const bool holdout_ok =
          !have_holdout || cfg.train.target_holdout_map <= 0.0 ||
          stat.holdout_map >= cfg.train.target_holdout_map;
      if (train_ok && holdout_ok) {
        res.reached_targets = true;
        break;
      }
    }
  }

  save_checkpoint(res.last_checkpoint, cfg.model, model.params());
  if (best_metric < 0.0)
    save_checkpoint(res.best_checkpoint, cfg.model, model.params());
  write_metrics_csv(res.metrics_csv, res.history);
  if (!res.history.empty()) write_curves(out_dir, res.history, have_holdout);
  return res;
}

std::vector<AblationResult> run_ablation(const RunConfig& base,
                                         const std::vector<std::string>& toggles,
                                         const std::string& out_dir,
                                         bool verbose) {
  ACADET_CHECK(!toggles.empty(), "ablation: no toggles given");
  std::vector<std::pair<std::string, ModuleToggle>> plan;
  for (const std::string& t : toggles) {
    if (t == "full")
      plan.emplace_back(t, ModuleToggle::full);
    else if (t == "cam_only")
      plan.emplace_back(t, ModuleToggle::cam_only);
    else if (t == "lcm_only")
      plan.emplace_back(t, ModuleToggle::lcm_only);
    else
      throw ConfigError("unknown ablation toggle: " + t);
  }
  std::filesystem::create_directories(out_dir);

  std::vector<AblationResult> results;
  for (const auto& [name, toggle] : plan) {
    RunConfig cfg = base;
    cfg.model.module_toggle = toggle;
    if (verbose) std::printf("== ablation %s ==\n", name.c_str());
    TrainResult r = train_run(cfg, out_dir + "/" + name, verbose);
    results.push_back({name, r.best_train_map, r.best_holdout_map,
                       r.final_train_map, r.final_holdout_map});
  }

  const std::string csv = out_dir + "/ablation.csv";
  std::ofstream out(csv);
  if (!out) throw DataError("cannot write file: " + csv);
  out << "toggle,best_train_map,best_holdout_map,final_train_map,"
         "final_holdout_map\n";
  for (const AblationResult& r : results)
    out << r.name << "," << fmt_double(r.best_train_map) << ","
        << fmt_double(r.best_holdout_map) << ","
        << fmt_double(r.final_train_map) << ","
        << fmt_double(r.final_holdout_map) << "\n";
  return results;
}

}  // namespace acadet
