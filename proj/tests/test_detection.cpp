#include <cmath>

#include "acadet/detection.hpp"
#include "doctest.h"
#include "reference.hpp"

using acadet::ActionSegment;
using acadet::AssignmentTargets;
using acadet::Graph;
using acadet::HeadGraph;
using acadet::HeadOutputs;
using acadet::LevelShape;
using acadet::LossConfig;
using acadet::Model;
using acadet::ModelConfig;
using acadet::Rng;
using acadet::SeqTensor;
using acadet::Value;

TEST_CASE("default regression ranges are contiguous powers of two") {
  const auto r = LossConfig::default_ranges(4);
  REQUIRE(r.size() == 4);
  CHECK(r[0] == std::pair<double, double>{0.0, 4.0});
  CHECK(r[1] == std::pair<double, double>{4.0, 8.0});
  CHECK(r[2] == std::pair<double, double>{8.0, 16.0});
  CHECK(r[3].first == 16.0);
  CHECK(r[3].second < 0.0);
}

TEST_CASE("ranges_for validates custom ranges") {
  LossConfig cfg;
  cfg.regression_ranges = {{0, 4}, {4, -1}};
  CHECK_NOTHROW(cfg.ranges_for(2));
  CHECK_THROWS_AS(cfg.ranges_for(3), acadet::ConfigError);
  cfg.regression_ranges = {{0, 4}, {5, -1}};  // gap
  CHECK_THROWS_AS(cfg.ranges_for(2), acadet::ConfigError);
  cfg.regression_ranges = {{1, 4}, {4, -1}};  // must start at zero
  CHECK_THROWS_AS(cfg.ranges_for(2), acadet::ConfigError);
  cfg.regression_ranges = {{0, 4}, {4, 8}};  // last must be open-ended
  CHECK_THROWS_AS(cfg.ranges_for(2), acadet::ConfigError);
}

TEST_CASE("assignment frozen example") {
  // One segment [1, 5] on a two-level pyramid; radius 1.5 strides.
  std::vector<LevelShape> shapes;
  shapes.push_back({1, 8, {8}});
  shapes.push_back({2, 4, {4}});
  LossConfig cfg;
  cfg.regression_ranges = {{0, 4}, {4, -1}};
  std::vector<std::vector<ActionSegment>> gt(1);
  gt[0].push_back({1.0, 5.0, 2, 1.0});

  AssignmentTargets at = assign_targets(gt, shapes, cfg);
  REQUIRE(at.levels.size() == 2);
  const auto& l1 = at.levels[0];
  // center 3, radius 1.5: positions 2, 3, 4 qualify; offsets within (0, 4]
  for (int t = 0; t < 8; ++t) {
    const bool expect = t >= 2 && t <= 4;
    CHECK(static_cast<bool>(l1.positive[l1.at(0, t)]) == expect);
  }
  CHECK(l1.class_id[l1.at(0, 3)] == 2);
  CHECK(l1.off_start[l1.at(0, 2)] == 1.0);
  CHECK(l1.off_end[l1.at(0, 2)] == 3.0);
  // level 2: x in {2, 4} lies inside, but the max offset (1.5 or 2 in stride
  // units) is below the level's lower bound of 4
  const auto& l2 = at.levels[1];
  for (int t = 0; t < 4; ++t) CHECK(l2.positive[l2.at(0, t)] == 0);
  CHECK(at.n_pos[0] == 3);
  CHECK(at.n_neg[0] == 8 + 4 - 3);
}

TEST_CASE("assignment tie-breaks: shortest, then earliest, then lowest class") {
  std::vector<LevelShape> shapes;
  shapes.push_back({1, 12, {12}});
  LossConfig cfg;
  cfg.center_sampling_radius = 100.0;  // disable the center constraint
  cfg.regression_ranges = {{0, -1.0}};

  std::vector<std::vector<ActionSegment>> gt(1);
  gt[0].push_back({0.0, 10.0, 1, 1.0});
  gt[0].push_back({2.0, 8.0, 2, 1.0});  // shorter, wins where both cover
  AssignmentTargets at = assign_targets(gt, shapes, cfg);
  const auto& l = at.levels[0];
  CHECK(l.class_id[l.at(0, 5)] == 2);
  CHECK(l.class_id[l.at(0, 1)] == 1);

  gt[0].clear();
  gt[0].push_back({4.0, 8.0, 1, 1.0});
  gt[0].push_back({2.0, 6.0, 2, 1.0});  // same length, earlier start wins
  at = assign_targets(gt, shapes, cfg);
  CHECK(at.levels[0].class_id[at.levels[0].at(0, 5)] == 2);

  gt[0].clear();
  gt[0].push_back({2.0, 6.0, 3, 1.0});
  gt[0].push_back({2.0, 6.0, 0, 1.0});  // identical interval, lower class wins
  at = assign_targets(gt, shapes, cfg);
  CHECK(at.levels[0].class_id[at.levels[0].at(0, 4)] == 0);
}

TEST_CASE("assignment matches the brute-force reference on random instances") {
  Rng rng(101);
  for (int it = 0; it < 150; ++it) {
    const int levels = 1 + static_cast<int>(rng.uniform_int(0, 2));
    std::vector<LevelShape> shapes;
    int stride = 1;
    const int batch = 1 + static_cast<int>(rng.uniform_int(0, 1));
    for (int li = 0; li < levels; ++li) {
      LevelShape sh;
      sh.stride = stride;
      sh.length = 4 + static_cast<int>(rng.uniform_int(0, 8));
      for (int b = 0; b < batch; ++b)
        sh.valid.push_back(static_cast<int>(rng.uniform_int(0, sh.length)));
      shapes.push_back(sh);
      stride *= 2;
    }
    LossConfig cfg;
    cfg.center_sampling_radius = rng.uniform(0.5, 3.0);
    cfg.regression_ranges.clear();
    double lo = 0.0;
    for (int li = 0; li < levels; ++li) {
      const double hi =
          li == levels - 1 ? -1.0 : lo + rng.uniform(1.0, 6.0);
      cfg.regression_ranges.emplace_back(lo, hi);
      lo = hi;
    }
    std::vector<std::vector<ActionSegment>> gt(batch);
    for (int b = 0; b < batch; ++b) {
      const int n = static_cast<int>(rng.uniform_int(0, 5));
      for (int u = 0; u < n; ++u) {
        const double s = rng.uniform(0.0, 20.0);
        const double e = s + rng.uniform(0.5, 15.0);
        gt[b].push_back({s, e, static_cast<int>(rng.uniform_int(0, 2)), 1.0});
      }
    }

    AssignmentTargets got = assign_targets(gt, shapes, cfg);
    auto want = testref::assign(gt, shapes, cfg);
    for (int li = 0; li < levels; ++li) {
      const auto& gl = got.levels[li];
      for (int b = 0; b < batch; ++b) {
        for (int t = 0; t < shapes[li].length; ++t) {
          const std::size_t idx = gl.at(b, t);
          const auto& w = want[li][idx];
          CAPTURE(it);
          CAPTURE(li);
          CAPTURE(t);
          REQUIRE(static_cast<bool>(gl.positive[idx]) == w.positive);
          if (w.positive) {
            REQUIRE(gl.class_id[idx] == w.class_id);
            REQUIRE(gl.off_start[idx] == w.off_start);
            REQUIRE(gl.off_end[idx] == w.off_end);
          }
        }
      }
    }
  }
}

TEST_CASE("giou and quality frozen values") {
  CHECK(acadet::giou_loss_value(1, 1, 1, 1) == 0.0);
  CHECK(acadet::giou_loss_value(0, 1, 1, 0) == 1.0);  // touching intervals
  CHECK(acadet::giou_loss_value(2, 2, 1, 1) == doctest::Approx(0.5));
  CHECK(acadet::anchored_quality(1, 1, 1, 1) == 1.0);
  CHECK(acadet::anchored_quality(2, 2, 1, 1) == 0.5);
  CHECK(acadet::anchored_quality(0, 0, 0, 0) == 0.0);
  CHECK_THROWS_AS(acadet::giou_loss_value(-1, 1, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(acadet::giou_loss_value(1, 1, 0, 0), std::invalid_argument);
}

TEST_CASE("decode reads offsets back into clamped intervals") {
  HeadOutputs outs;
  outs.strides = {1, 2};
  SeqTensor l1(1, 2, 6), o1(1, 2, 6);
  SeqTensor l2(1, 2, 3), o2(1, 2, 3);
  l1.fill(-20.0);
  l2.fill(-20.0);
  // position 3, class 1: interval [3-1.5, 3+2.5]
  l1.at(0, 1, 3) = 4.0;
  o1.at(0, 0, 3) = 1.5;
  o1.at(0, 1, 3) = 2.5;
  // level 2, position 1 (input coord 2), class 0: [2-4, 2+10] clamped to [0, 6]
  l2.at(0, 0, 1) = 2.0;
  o2.at(0, 0, 1) = 2.0;
  o2.at(0, 1, 1) = 5.0;
  outs.class_logits = {l1, l2};
  outs.offsets = {o1, o2};

  auto segs = acadet::decode(outs, 0, 0.05, 100);
  REQUIRE(segs.size() == 2);
  // sorted by score: sigmoid(4) first
  CHECK(segs[0].class_id == 1);
  CHECK(segs[0].start == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(segs[0].end == doctest::Approx(5.5).epsilon(1e-15));
  CHECK(segs[0].score == doctest::Approx(1.0 / (1.0 + std::exp(-4.0))));
  CHECK(segs[1].class_id == 0);
  CHECK(segs[1].start == 0.0);
  CHECK(segs[1].end == 6.0);
}

TEST_CASE("decode respects the score threshold and top-k cap") {
  HeadOutputs outs;
  outs.strides = {1};
  SeqTensor l(1, 1, 5);
  SeqTensor off(1, 2, 5);
  for (int t = 0; t < 5; ++t) {
    l.at(0, 0, t) = t - 2.0;  // scores rise with t
    off.at(0, 0, t) = 0.5;
    off.at(0, 1, t) = 0.5;
  }
  outs.class_logits = {l};
  outs.offsets = {off};
  auto all = acadet::decode(outs, 0, 0.0, -1);
  CHECK(all.size() == 5);
  auto top2 = acadet::decode(outs, 0, 0.0, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].score >= top2[1].score);
  CHECK(top2[0].score == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  auto thresholded = acadet::decode(outs, 0, 0.5, -1);
  CHECK(thresholded.size() == 3);  // sigmoid >= 0.5 iff logit >= 0
}

TEST_CASE("decode skips degenerate and padded positions") {
  HeadOutputs outs;
  outs.strides = {1};
  SeqTensor l(1, 1, 6);
  SeqTensor off(1, 2, 6);
  l.fill(3.0);
  l.set_valid_len(0, 4);
  off.set_valid_len(0, 4);
  // zero offsets everywhere: zero-length intervals are dropped, except give
  // position 2 a real extent
  off.at(0, 0, 2) = 1.0;
  off.at(0, 1, 2) = 1.0;
  outs.class_logits = {l};
  outs.offsets = {off};
  auto segs = acadet::decode(outs, 0, 0.05, -1);
  REQUIRE(segs.size() == 1);
  CHECK(segs[0].start == 1.0);
  CHECK(segs[0].end == 3.0);
}

TEST_CASE("total_loss equals a straight-line scalar recomputation") {
  ModelConfig mc;
  mc.in_dim = 4;
  mc.embed_dim = 8;
  mc.levels = 3;
  mc.cgb_kernels = {1, 3};
  mc.cgb_mix_kernel = 3;
  mc.lcm_large_kernel_min = 3;
  mc.lcm_large_kernel_max = 5;
  mc.lcm_small_kernels = {1, 3};
  mc.mlp_ratio = 2;
  mc.num_classes = 2;
  mc.head_layers = 1;
  Model model(mc);
  model.init_params(77);

  Rng rng(107);
  SeqTensor x(2, 4, 24);
  x.set_valid_lens({24, 17});
  for (int b = 0; b < 2; ++b)
    for (int c = 0; c < 4; ++c)
      for (int t = 0; t < x.valid_len(b); ++t) x.at(b, c, t) = rng.normal();

  // Lengths placed so levels 1 and 2 both collect positives under the
  // default ranges: short segments land on level 1, the length-20 one on
  // level 2.
  std::vector<std::vector<ActionSegment>> gt(2);
  gt[0].push_back({2.0, 9.0, 0, 1.0});
  gt[0].push_back({4.0, 24.0, 1, 1.0});
  gt[1].push_back({3.0, 10.0, 1, 1.0});

  LossConfig lc;
  Graph g;
  HeadGraph hg = model.forward(g, x);
  AssignmentTargets at = assign_targets(gt, level_shapes(hg), lc);
  Value loss = total_loss(g, hg, at, lc);
  const double got = loss.tensor().at(0, 0, 0);

  double want = 0.0;
  for (std::size_t li = 0; li < at.levels.size(); ++li) {
    const auto& lt = at.levels[li];
    const SeqTensor& logits = hg.class_logits[li].tensor();
    const SeqTensor& offs = hg.offsets[li].tensor();
    for (int b = 0; b < 2; ++b) {
      const double wpos = at.n_pos[b] > 0 ? 1.0 / at.n_pos[b] : 0.0;
      const double wneg = at.n_neg[b] > 0 ? 1.0 / at.n_neg[b] : 0.0;
      for (int t = 0; t < logits.valid_len(b); ++t) {
        const std::size_t idx = lt.at(b, t);
        if (lt.positive[idx]) {
          const double quality = acadet::anchored_quality(
              offs.at(b, 0, t), offs.at(b, 1, t), lt.off_start[idx],
              lt.off_end[idx]);
          for (int u = 0; u < 2; ++u)
            want += quality * wpos *
                    testref::focal_scalar(logits.at(b, u, t),
                                          u == lt.class_id[idx] ? 1.0 : 0.0,
                                          lc.focal_alpha, lc.focal_gamma);
          want += lc.lambda_reg * wpos *
                  testref::giou_scalar(offs.at(b, 0, t), offs.at(b, 1, t),
                                       lt.off_start[idx], lt.off_end[idx]);
        } else {
          for (int u = 0; u < 2; ++u)
            want += wneg * testref::focal_scalar(logits.at(b, u, t), 0.0,
                                                 lc.focal_alpha,
                                                 lc.focal_gamma);
        }
      }
    }
  }
  REQUIRE(at.n_pos[0] > 0);
  REQUIRE(at.n_pos[1] > 0);
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("quality override replaces the live tIoU weight") {
  std::vector<LevelShape> shapes;
  shapes.push_back({1, 6, {6}});
  LossConfig lc;
  lc.regression_ranges = {{0, -1.0}};
  std::vector<std::vector<ActionSegment>> gt(1);
  gt[0].push_back({1.0, 4.0, 0, 1.0});
  AssignmentTargets at = assign_targets(gt, shapes, lc);

  SeqTensor logits(1, 1, 6), offs(1, 2, 6);
  logits.fill(0.3);
  offs.fill(1.0);

  auto loss_with = [&](const AssignmentTargets& targets) {
    Graph g;
    HeadGraph hg;
    hg.class_logits = {g.input(logits)};
    hg.offsets = {g.input(offs)};
    hg.strides = {1};
    return total_loss(g, hg, targets, lc).tensor().at(0, 0, 0);
  };

  const double live = loss_with(at);
  AssignmentTargets frozen = at;
  frozen.quality_override.assign(1, std::vector<double>(6, 1.0));
  const double forced = loss_with(frozen);
  // forcing quality to 1 must increase the positive classification term
  CHECK(forced > live);
}
