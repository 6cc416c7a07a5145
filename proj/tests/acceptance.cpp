// Acceptance suite: each criterion prints exactly one [PASS]/[FAIL] line.
// Runs everything even after a failure; exits nonzero if any line failed.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "acadet/config.hpp"
#include "acadet/data.hpp"
#include "acadet/detection.hpp"
#include "acadet/eval.hpp"
#include "acadet/gradcheck.hpp"
#include "acadet/graph.hpp"
#include "acadet/model.hpp"
#include "acadet/train.hpp"
#include "reference.hpp"

using namespace acadet;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool ok = true;
  std::string detail;
};

// First failing condition wins the detail slot.
void expect(Outcome& out, bool cond, const std::string& what) {
  if (!cond && out.ok) {
    out.ok = false;
    out.detail = what;
  }
  out.ok = out.ok && cond;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::path("acceptance_tmp") / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

SeqTensor random_tensor(Rng& rng, int b, int c, int t) {
  SeqTensor x(b, c, t);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

ModelConfig small_model(int levels) {
  ModelConfig m;
  m.in_dim = 4;
  m.embed_dim = 8;
  m.levels = levels;
  m.cgb_kernels = {1, 3};
  m.cgb_mix_kernel = 3;
  m.lcm_large_kernel_min = 3;
  m.lcm_large_kernel_max = 5;
  m.lcm_small_kernels = {1};
  m.mlp_ratio = 2;
  m.num_classes = 3;
  m.head_layers = 1;
  m.head_kernel = 3;
  return m;
}

// The shared training benchmark: default synthetic corpus (32 train plus 8
// holdout videos, 3 classes, lengths 64..128, 16 input channels), embed 64,
// 4 pyramid levels, evaluated at tIoU 0.5.
RunConfig benchmark_config() {
  RunConfig cfg;
  cfg.model.embed_dim = 64;
  cfg.model.levels = 4;
  cfg.eval.tiou_thresholds = {0.5};
  cfg.train.epochs = 300;
  cfg.train.warmup_epochs = 2;
  cfg.train.eval_every = 5;
  cfg.train.target_train_map = 0.90;
  cfg.train.target_holdout_map = 0.70;
  return cfg;
}

bool segments_identical(const std::vector<ActionSegment>& a,
                        const std::vector<ActionSegment>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i].start != b[i].start || a[i].end != b[i].end ||
        a[i].class_id != b[i].class_id || a[i].score != b[i].score)
      return false;
  return true;
}

// ---------------------------------------------------------------------------
// 1. Analytic gradients vs central finite differences, every op plus the
//    full network, within 1e-4 relative error and a two-minute budget.

Outcome criterion1() {
  Outcome out;
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<FdResult> results = run_all_gradchecks(FdOptions{});
  const double elapsed = seconds_since(t0);

  expect(out, !results.empty(), "no gradient problems ran");
  double worst = 0.0;
  for (const FdResult& r : results) {
    worst = std::max(worst, r.max_rel_err);
    expect(out, r.passed && r.max_rel_err < 1e-4,
           "problem " + r.problem + " rel err " + fmt(r.max_rel_err));
    expect(out, r.checked > 0, "problem " + r.problem + " checked nothing");
  }
  std::set<std::string> names;
  for (const FdResult& r : results) names.insert(r.problem);
  for (const char* need :
       {"conv1d", "conv1d_strided", "conv1d_depthwise", "linear", "layer_norm",
        "relu", "gelu", "sigmoid", "channel_max", "channel_avg",
        "temporal_max_pool", "broadcast_mul", "focal_loss", "giou_loss",
        "projection", "pyramid_full", "heads", "total_loss"})
    expect(out, names.count(need) == 1, std::string("missing problem ") + need);
  expect(out, elapsed < 120.0, "took " + fmt(elapsed) + "s");
  if (out.ok)
    out.detail = std::to_string(results.size()) + " problems, max rel err " +
                 fmt(worst) + ", " + fmt(elapsed) + "s";
  return out;
}

// ---------------------------------------------------------------------------
// 2. Pyramid lengths follow T1 = T0, Ti = ceil(T(i-1)/2); planting the
//    assigned target offsets into the heads decodes back to the ground-truth
//    segments within 1e-12.

Outcome criterion2() {
  Outcome out;
  Model model(small_model(6));
  model.init_params(11);
  Rng rng(301);

  for (int t0 : {31, 32, 100, 128}) {
    const HeadOutputs outs = model.infer(random_tensor(rng, 1, 4, t0));
    expect(out, static_cast<int>(outs.class_logits.size()) == 6,
           "wrong level count");
    int expected = t0;
    for (int li = 0; li < 6; ++li) {
      if (li > 0) expected = (expected + 1) / 2;
      expect(out, outs.class_logits[li].length() == expected,
             "T0=" + std::to_string(t0) + " level " + std::to_string(li + 1) +
                 " length " + std::to_string(outs.class_logits[li].length()) +
                 " want " + std::to_string(expected));
      expect(out, outs.class_logits[li].valid_len(0) == expected,
             "valid length drifted from the padded length");
      expect(out, outs.strides[li] == (1 << li), "stride law broken");
      expect(out, outs.offsets[li].length() == expected,
             "offset length mismatch");
    }
  }

  // Round trip: assignment offsets -> synthetic head outputs -> decode.
  const HeadOutputs live = model.infer(random_tensor(rng, 1, 4, 100));
  const std::vector<LevelShape> shapes = level_shapes(live);
  const std::vector<ActionSegment> gt = {
      {1, 5, 0, 1.0},           // short, lands on the stride-1 level
      {2, 26, 1, 1.0},          // medium, stride-2 level
      {2, 62, 2, 1.0},          // long, stride-4 level
      {10.25, 14.25, 0, 1.0},   // fractional endpoints
  };
  const AssignmentTargets targets = assign_targets({gt}, shapes, LossConfig{});
  expect(out, targets.n_pos[0] == 11,
         "expected 11 positives, got " + std::to_string(targets.n_pos[0]));

  HeadOutputs synth;
  synth.strides = live.strides;
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    SeqTensor logits(1, 3, shapes[li].length);
    logits.fill(-20.0);
    SeqTensor offs(1, 2, shapes[li].length);
    const LevelTargets& lt = targets.levels[li];
    for (int t = 0; t < lt.length; ++t) {
      const std::size_t idx = lt.at(0, t);
      if (!lt.positive[idx]) continue;
      logits.at(0, lt.class_id[idx], t) = 20.0;
      offs.at(0, 0, t) = lt.off_start[idx];
      offs.at(0, 1, t) = lt.off_end[idx];
    }
    synth.class_logits.push_back(std::move(logits));
    synth.offsets.push_back(std::move(offs));
  }

  const std::vector<ActionSegment> cands = decode(synth, 0, 0.5, -1);
  expect(out, cands.size() == 11,
         "decoded " + std::to_string(cands.size()) + " candidates, want 11");
  std::vector<bool> covered(gt.size(), false);
  for (const ActionSegment& c : cands) {
    bool matched = false;
    for (std::size_t gi = 0; gi < gt.size(); ++gi)
      if (c.class_id == gt[gi].class_id &&
          std::abs(c.start - gt[gi].start) <= 1e-12 &&
          std::abs(c.end - gt[gi].end) <= 1e-12) {
        matched = true;
        covered[gi] = true;
      }
    expect(out, matched,
           "candidate [" + fmt(c.start) + ", " + fmt(c.end) +
               "] does not reconstruct any ground-truth segment");
  }
  for (std::size_t gi = 0; gi < gt.size(); ++gi)
    expect(out, covered[gi],
           "segment " + std::to_string(gi) + " never reconstructed");
  if (out.ok) out.detail = "4 sequence lengths, 11 positions round-tripped";
  return out;
}

// ---------------------------------------------------------------------------
// 3. Mixed-kernel schedule: 17 down to 5 over 6 levels gives
//    (17, 15, 13, 9, 7, 5); every size odd and non-increasing.

Outcome criterion3() {
  Outcome out;
  ModelConfig cfg;
  cfg.lcm_large_kernel_max = 17;
  cfg.lcm_large_kernel_min = 5;
  cfg.levels = 6;
  const std::vector<int> want = {17, 15, 13, 9, 7, 5};
  std::vector<int> got;
  for (int level = 1; level <= 6; ++level)
    got.push_back(lcm_schedule(level, cfg));
  expect(out, got == want, "schedule mismatch");
  for (std::size_t i = 0; i < got.size(); ++i) {
    expect(out, got[i] % 2 == 1,
           "level " + std::to_string(i + 1) + " kernel is even");
    if (i > 0) expect(out, got[i] <= got[i - 1], "schedule not non-increasing");
  }
  if (out.ok) {
    std::ostringstream s;
    for (std::size_t i = 0; i < got.size(); ++i)
      s << (i ? ", " : "(") << got[i];
    out.detail = s.str() + ")";
  }
  return out;
}

// ---------------------------------------------------------------------------
// 4. Brute-force oracle agreement on randomized small instances: tIoU and
//    SoftNMS exact, AP/mAP to 1e-9, label assignment exact.

std::vector<ActionSegment> random_segments(Rng& rng, int max_n) {
  const int n = static_cast<int>(rng.uniform_int(0, max_n));
  std::vector<ActionSegment> segs;
  for (int i = 0; i < n; ++i) {
    ActionSegment s;
    s.start = rng.uniform(0.0, 30.0);
    s.end = s.start + rng.uniform(0.1, 10.0);
    s.class_id = static_cast<int>(rng.uniform_int(0, 2));
    s.score = rng.uniform(0.001, 1.0);
    segs.push_back(s);
  }
  return segs;
}

Outcome criterion4() {
  Outcome out;
  Rng rng(805);

  // tIoU: 150 random pairs, bit-for-bit.
  for (int i = 0; i < 150 && out.ok; ++i) {
    const double s1 = rng.uniform(0.0, 20.0), e1 = s1 + rng.uniform(0.1, 8.0);
    const double s2 = rng.uniform(0.0, 20.0), e2 = s2 + rng.uniform(0.1, 8.0);
    expect(out, tiou(s1, e1, s2, e2) == testref::tiou(s1, e1, s2, e2),
           "tIoU mismatch on instance " + std::to_string(i));
  }

  // SoftNMS: 120 random instances, exact output lists.
  for (int i = 0; i < 120 && out.ok; ++i) {
    SoftNmsConfig cfg;
    cfg.method = rng.uniform() < 0.5 ? SoftNmsMethod::gaussian
                                     : SoftNmsMethod::linear;
    cfg.sigma = rng.uniform(0.1, 1.0);
    cfg.iou_cut = rng.uniform(0.0, 1.0);
    cfg.score_floor = rng.uniform(0.0, 0.1);
    cfg.max_keep = static_cast<int>(rng.uniform_int(0, 8));
    const std::vector<ActionSegment> segs = random_segments(rng, 20);
    expect(out, segments_identical(soft_nms(segs, cfg),
                                   testref::soft_nms(segs, cfg)),
           "SoftNMS mismatch on instance " + std::to_string(i));
  }

  // AP and mAP: 120 random instances to 1e-9.
  const char* vids[] = {"a", "b", "c"};
  for (int i = 0; i < 120 && out.ok; ++i) {
    std::vector<VideoSegment> preds, gts;
    const int n_gt = static_cast<int>(rng.uniform_int(1, 8));
    for (int k = 0; k < n_gt; ++k) {
      ActionSegment s;
      s.start = rng.uniform(0.0, 25.0);
      s.end = s.start + rng.uniform(0.5, 8.0);
      s.class_id = static_cast<int>(rng.uniform_int(0, 2));
      gts.push_back({vids[rng.uniform_int(0, 2)], s});
    }
    const int n_pred = static_cast<int>(rng.uniform_int(0, 15));
    for (int k = 0; k < n_pred; ++k) {
      ActionSegment s;
      s.start = rng.uniform(0.0, 25.0);
      s.end = s.start + rng.uniform(0.5, 8.0);
      s.class_id = static_cast<int>(rng.uniform_int(0, 2));
      s.score = rng.uniform(0.001, 1.0);
      preds.push_back({vids[rng.uniform_int(0, 2)], s});
    }
    const double thr = rng.uniform(0.1, 0.7);
    for (int cls = 0; cls < 3; ++cls) {
      std::vector<VideoSegment> pc, gc;
      for (const auto& p : preds)
        if (p.seg.class_id == cls) pc.push_back(p);
      for (const auto& g : gts)
        if (g.seg.class_id == cls) gc.push_back(g);
      expect(out,
             std::abs(average_precision(pc, gc, thr) -
                      testref::average_precision(pc, gc, thr)) <= 1e-9,
             "AP mismatch on instance " + std::to_string(i));
    }
    expect(out,
           std::abs(evaluate(preds, gts, {thr}).map_at[0] -
                    testref::mean_ap(preds, gts, thr)) <= 1e-9,
           "mAP mismatch on instance " + std::to_string(i));
  }

  // Label assignment: 120 random instances, exact flags and offsets.
  for (int i = 0; i < 120 && out.ok; ++i) {
    const int levels = static_cast<int>(rng.uniform_int(2, 3));
    const int batch = static_cast<int>(rng.uniform_int(1, 2));
    std::vector<LevelShape> shapes;
    int stride = 1;
    for (int li = 0; li < levels; ++li) {
      LevelShape sh;
      sh.stride = stride;
      sh.length = static_cast<int>(rng.uniform_int(6, 12));
      for (int b = 0; b < batch; ++b)
        sh.valid.push_back(
            static_cast<int>(rng.uniform_int(0, sh.length)));
      shapes.push_back(sh);
      stride *= 2;
    }
    LossConfig lc;
    lc.center_sampling_radius = rng.uniform(0.5, 3.0);
    const double c1 = rng.uniform(1.0, 6.0);
    const double c2 = c1 + rng.uniform(1.0, 6.0);
    lc.regression_ranges.clear();
    lc.regression_ranges.emplace_back(0.0, c1);
    if (levels == 2) {
      lc.regression_ranges.emplace_back(c1, -1.0);
    } else {
      lc.regression_ranges.emplace_back(c1, c2);
      lc.regression_ranges.emplace_back(c2, -1.0);
    }
    std::vector<std::vector<ActionSegment>> gt(batch);
    for (int b = 0; b < batch; ++b) {
      const int n = static_cast<int>(rng.uniform_int(0, 5));
      for (int k = 0; k < n; ++k) {
        ActionSegment s;
        s.start = rng.uniform(0.0, 30.0);
        s.end = s.start + rng.uniform(0.5, 20.0);
        s.class_id = static_cast<int>(rng.uniform_int(0, 2));
        gt[b].push_back(s);
      }
    }
    const AssignmentTargets impl = assign_targets(gt, shapes, lc);
    const auto ref = testref::assign(gt, shapes, lc);
    for (int li = 0; li < levels && out.ok; ++li) {
      const LevelTargets& lt = impl.levels[li];
      for (int b = 0; b < batch; ++b)
        for (int t = 0; t < lt.length; ++t) {
          const std::size_t idx = lt.at(b, t);
          const testref::AssignedPos& rp = ref[li][idx];
          expect(out, (lt.positive[idx] != 0) == rp.positive,
                 "assignment positivity mismatch on instance " +
                     std::to_string(i));
          if (lt.positive[idx] && rp.positive) {
            expect(out,
                   lt.class_id[idx] == rp.class_id &&
                       lt.off_start[idx] == rp.off_start &&
                       lt.off_end[idx] == rp.off_end,
                   "assignment payload mismatch on instance " +
                       std::to_string(i));
          }
        }
    }
  }
  if (out.ok)
    out.detail = "150 tIoU, 120 SoftNMS, 120 AP/mAP, 120 assignment instances";
  return out;
}

// ---------------------------------------------------------------------------
// 5. On 1000 random inputs every gating coefficient lies strictly inside
//    (0, 1); forcing the gate to one reproduces the context branch (the
//    k-projection of the normalized input) bit for bit.

Outcome criterion5() {
  Outcome out;
  Model model(small_model(3));
  model.init_params(5);
  Rng rng(906);

  long checked = 0;
  for (int i = 0; i < 1000 && out.ok; ++i) {
    const int B = static_cast<int>(rng.uniform_int(1, 2));
    const int T = static_cast<int>(rng.uniform_int(8, 24));
    SeqTensor x = random_tensor(rng, B, 4, T);
    for (int b = 0; b < B; ++b)
      x.set_valid_len(b, static_cast<int>(rng.uniform_int(1, T)));
    x.zero_padding();

    ForwardProbe probe;
    ForwardOptions opt;
    opt.probe = &probe;
    model.infer(x, opt);
    expect(out, probe.gate_maps.size() == 3, "missing gate captures");
    for (const SeqTensor& g : probe.gate_maps)
      for (int b = 0; b < g.batch(); ++b)
        for (int c = 0; c < g.channels(); ++c)
          for (int t = 0; t < g.valid_len(b); ++t) {
            const double v = g.at(b, c, t);
            ++checked;
            expect(out, v > 0.0 && v < 1.0,
                   "gate " + fmt(v) + " outside (0,1) on input " +
                       std::to_string(i));
          }
  }
  expect(out, checked > 0, "no gate values checked");

  // Unit gate: the aggregation output must equal the plain k-projection.
  for (int i = 0; i < 10 && out.ok; ++i) {
    const int B = static_cast<int>(rng.uniform_int(1, 2));
    const int T = static_cast<int>(rng.uniform_int(9, 21));
    SeqTensor x = random_tensor(rng, B, 4, T);
    if (B == 2) {
      x.set_valid_len(1, static_cast<int>(rng.uniform_int(1, T)));
      x.zero_padding();
    }
    ForwardProbe probe;
    ForwardOptions opt;
    opt.probe = &probe;
    opt.force_gate_one = true;
    model.infer(x, opt);
    expect(out, probe.cam_out.size() == 3 && probe.norm1_out.size() == 3,
           "missing probe captures");
    if (!out.ok) break;
    for (int li = 0; li < 3; ++li) {
      char wname[40], bname[40];
      std::snprintf(wname, sizeof(wname), "level%02d.cam.k.w", li + 1);
      std::snprintf(bname, sizeof(bname), "level%02d.cam.k.b", li + 1);
      Graph g;
      Value k = g.linear(g.constant(probe.norm1_out[li]),
                         g.constant(model.params().get(wname)),
                         g.constant(model.params().get(bname)));
      expect(out, bits_equal(probe.cam_out[li], k.tensor()),
             "unit-gate output differs from the k-projection at level " +
                 std::to_string(li + 1));
    }
  }
  if (out.ok)
    out.detail = std::to_string(checked) + " gate values over 1000 inputs";
  return out;
}

// ---------------------------------------------------------------------------
// 6. Synthetic benchmark trains to average mAP >= 0.90 (train) and >= 0.70
//    (holdout) at tIoU 0.5 within 300 epochs and 15 CPU-minutes.

Outcome criterion6() {
  Outcome out;
  const RunConfig cfg = benchmark_config();
  const auto t0 = std::chrono::steady_clock::now();
  const TrainResult res =
      train_run(cfg, fresh_dir("overfit").string(), false);
  const double elapsed = seconds_since(t0);

  expect(out, res.epochs_run <= 300, "epoch budget exceeded");
  expect(out, res.reached_targets && res.best_train_map >= 0.90,
         "train mAP " + fmt(res.best_train_map) + " below 0.90");
  expect(out, res.best_holdout_map >= 0.70,
         "holdout mAP " + fmt(res.best_holdout_map) + " below 0.70");
  expect(out, elapsed < 900.0, "took " + fmt(elapsed) + "s");
  if (out.ok)
    out.detail = "train " + fmt(res.best_train_map) + ", holdout " +
                 fmt(res.best_holdout_map) + " after " +
                 std::to_string(res.epochs_run) + " epochs in " +
                 fmt(elapsed) + "s";
  return out;
}

// ---------------------------------------------------------------------------
// 7. On the same benchmark, the full model stays within 0.02 average mAP of
//    the better of the two single-branch variants.

Outcome criterion7() {
  Outcome out;
  RunConfig cfg = benchmark_config();
  cfg.train.epochs = 120;
  const auto results = run_ablation(cfg, {"full", "cam_only", "lcm_only"},
                                    fresh_dir("ablation").string(), false);
  expect(out, results.size() == 3, "expected three ablation runs");
  const double full = results[0].best_holdout_map;
  const double cam = results[1].best_holdout_map;
  const double lcm = results[2].best_holdout_map;
  expect(out, full >= std::max(cam, lcm) - 0.02,
         "full " + fmt(full) + " vs cam_only " + fmt(cam) + ", lcm_only " +
             fmt(lcm));
  if (out.ok)
    out.detail = "full " + fmt(full) + ", cam_only " + fmt(cam) +
                 ", lcm_only " + fmt(lcm);
  return out;
}

// ---------------------------------------------------------------------------
// 8. A padded batch reproduces the per-video losses (sum, to 1e-9) and the
//    decoded + suppressed predictions (exactly).

Outcome criterion8() {
  Outcome out;
  ModelConfig mc;
  mc.in_dim = 8;
  mc.embed_dim = 16;
  mc.levels = 3;
  mc.cgb_kernels = {1, 3};
  mc.cgb_mix_kernel = 3;
  mc.lcm_large_kernel_min = 3;
  mc.lcm_large_kernel_max = 7;
  mc.lcm_small_kernels = {1, 3};
  mc.mlp_ratio = 2;
  mc.num_classes = 3;
  mc.head_layers = 1;
  Model model(mc);
  model.init_params(21);
  Rng rng(402);

  const std::vector<int> lens = {21, 14, 9};
  const int t_pad = 24;
  std::vector<SeqTensor> solo;
  for (int len : lens) solo.push_back(random_tensor(rng, 1, 8, len));
  SeqTensor batch(3, 8, t_pad);
  for (int b = 0; b < 3; ++b) {
    batch.set_valid_len(b, lens[b]);
    for (int c = 0; c < 8; ++c)
      for (int t = 0; t < lens[b]; ++t)
        batch.at(b, c, t) = solo[b].at(0, c, t);
  }

  const std::vector<std::vector<ActionSegment>> gt = {
      {{2, 9, 0, 1.0}},
      {{3, 10, 1, 1.0}},
      {{1, 5, 2, 1.0}},
  };

  // Loss: batched vs the sum of per-video losses.
  const LossConfig lc;
  double batched_loss = 0.0;
  {
    Graph g;
    HeadGraph hg = model.forward(g, batch);
    AssignmentTargets targets = assign_targets(gt, level_shapes(hg), lc);
    for (int b = 0; b < 3; ++b)
      expect(out, targets.n_pos[b] > 0,
             "video " + std::to_string(b) + " has no positives");
    batched_loss = total_loss(g, hg, targets, lc).tensor().at(0, 0, 0);
  }
  double solo_sum = 0.0;
  for (int b = 0; b < 3; ++b) {
    Graph g;
    HeadGraph hg = model.forward(g, solo[b]);
    AssignmentTargets targets = assign_targets({gt[b]}, level_shapes(hg), lc);
    solo_sum += total_loss(g, hg, targets, lc).tensor().at(0, 0, 0);
  }
  expect(out, std::abs(batched_loss - solo_sum) <= 1e-9,
         "batched loss " + fmt(batched_loss) + " vs per-video sum " +
             fmt(solo_sum));

  // Predictions: decode + SoftNMS on the padded batch row must equal the
  // single-video pipeline exactly.
  const SoftNmsConfig nms;
  const HeadOutputs outs_batch = model.infer(batch);
  std::size_t total_kept = 0;
  for (int b = 0; b < 3; ++b) {
    const HeadOutputs outs_solo = model.infer(solo[b]);
    const auto kept_batch =
        soft_nms(decode(outs_batch, b, 1e-4, -1), nms);
    const auto kept_solo = soft_nms(decode(outs_solo, 0, 1e-4, -1), nms);
    expect(out, !kept_solo.empty(),
           "no candidates survived for video " + std::to_string(b));
    expect(out, segments_identical(kept_batch, kept_solo),
           "batched predictions differ for video " + std::to_string(b));
    total_kept += kept_solo.size();
  }
  if (out.ok)
    out.detail = "loss gap " + fmt(std::abs(batched_loss - solo_sum)) + ", " +
                 std::to_string(total_kept) + " predictions identical";
  return out;
}

// ---------------------------------------------------------------------------
// 9. Re-running the same configuration produces byte-identical metrics files.

Outcome criterion9() {
  Outcome out;
  RunConfig cfg;
  cfg.model.in_dim = 8;
  cfg.model.embed_dim = 16;
  cfg.model.levels = 3;
  cfg.model.cgb_kernels = {1, 3};
  cfg.model.cgb_mix_kernel = 3;
  cfg.model.lcm_large_kernel_min = 3;
  cfg.model.lcm_large_kernel_max = 7;
  cfg.model.lcm_small_kernels = {1, 3};
  cfg.model.mlp_ratio = 2;
  cfg.model.num_classes = 2;
  cfg.model.head_layers = 1;
  cfg.data.synthetic.num_videos = 6;
  cfg.data.synthetic.num_classes = 2;
  cfg.data.synthetic.min_length = 32;
  cfg.data.synthetic.max_length = 48;
  cfg.data.synthetic.in_dim = 8;
  cfg.data.synthetic.min_segment_len = 8;
  cfg.data.synthetic.max_segment_len = 12;
  cfg.data.holdout_videos = 2;
  cfg.train.epochs = 5;
  cfg.train.warmup_epochs = 1;
  cfg.train.batch_size = 2;
  cfg.train.eval_every = 2;
  cfg.eval.tiou_thresholds = {0.5};

  const TrainResult r1 = train_run(cfg, fresh_dir("repro_a").string(), false);
  const TrainResult r2 = train_run(cfg, fresh_dir("repro_b").string(), false);
  const std::string m1 = slurp(r1.metrics_csv);
  const std::string m2 = slurp(r2.metrics_csv);
  expect(out, !m1.empty(), "metrics file empty");
  expect(out, m1 == m2, "metrics files differ between runs");
  if (out.ok)
    out.detail = std::to_string(m1.size()) + " bytes identical across runs";
  return out;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* what;
    std::function<Outcome()> fn;
  };
  const std::vector<Entry> entries = {
      {1, "analytic gradients match finite differences", criterion1},
      {2, "pyramid shape law holds and target offsets decode exactly",
       criterion2},
      {3, "mixed-kernel schedule is (17, 15, 13, 9, 7, 5), odd and "
          "non-increasing",
       criterion3},
      {4, "SoftNMS, tIoU, AP and assignment match brute-force references",
       criterion4},
      {5, "gates stay strictly inside (0,1); unit gate passes the context "
          "branch through bit-exactly",
       criterion5},
      {6, "synthetic benchmark reaches 0.90 train / 0.70 holdout mAP in "
          "budget",
       criterion6},
      {7, "full model keeps pace with the single-branch variants", criterion7},
      {8, "padded batches reproduce per-video losses and predictions",
       criterion8},
      {9, "identical configurations give byte-identical metrics", criterion9},
  };

  int failed = 0;
  for (const Entry& e : entries) {
    Outcome out;
    try {
      out = e.fn();
    } catch (const std::exception& ex) {
      out.ok = false;
      out.detail = std::string("exception: ") + ex.what();
    }
    std::printf("[%s] criterion %d: %s%s%s%s\n", out.ok ? "PASS" : "FAIL",
                e.id, e.what, out.detail.empty() ? "" : " (",
                out.detail.c_str(), out.detail.empty() ? "" : ")");
    std::fflush(stdout);
    if (!out.ok) ++failed;
  }
  if (failed) std::printf("%d criterion(s) failed\n", failed);
  return failed ? 1 : 0;
}
