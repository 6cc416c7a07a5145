#include "acadet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace acadet {

double tiou(double a_start, double a_end, double b_start, double b_end) {
  ACADET_CHECK(a_start < a_end && b_start < b_end,
               "tiou: degenerate interval");
  const double inter =
      std::max(0.0, std::min(a_end, b_end) - std::max(a_start, b_start));
  const double uni = (a_end - a_start) + (b_end - b_start) - inter;
  return inter / uni;
}

std::vector<ActionSegment> soft_nms(std::vector<ActionSegment> segments,
                                    const SoftNmsConfig& cfg) {
  ACADET_CHECK(cfg.sigma > 0, "soft_nms: sigma must be positive");
  const std::size_t limit = cfg.max_keep <= 0
                                ? segments.size()
                                : static_cast<std::size_t>(cfg.max_keep);
  std::vector<ActionSegment> kept;
  std::vector<char> alive(segments.size(), 1);
  while (kept.size() < limit) {
    int best = -1;
    for (std::size_t i = 0; i < segments.size(); ++i)
      if (alive[i] && (best < 0 || segments[i].score > segments[best].score))
        best = static_cast<int>(i);
    if (best < 0) break;
    alive[best] = 0;
    kept.push_back(segments[best]);
    const ActionSegment& sel = segments[best];
    for (std::size_t j = 0; j < segments.size(); ++j) {
      if (!alive[j] || segments[j].class_id != sel.class_id) continue;
      const double ti = tiou(sel.start, sel.end, segments[j].start,
                             segments[j].end);
      double w = 1.0;
      if (cfg.method == SoftNmsMethod::gaussian)
        w = std::exp(-(ti * ti) / cfg.sigma);
      else if (ti >= cfg.iou_cut)
        w = 1.0 - ti;
      segments[j].score *= w;
      if (segments[j].score < cfg.score_floor) alive[j] = 0;
    }
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const ActionSegment& a, const ActionSegment& b) {
                     return a.score > b.score;
                   });
  return kept;
}

double average_precision(std::vector<VideoSegment> preds,
                         const std::vector<VideoSegment>& gts,
                         double threshold) {
  if (gts.empty()) return 0.0;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const VideoSegment& a, const VideoSegment& b) {
                     return a.seg.score > b.seg.score;
                   });
  std::vector<char> matched(gts.size(), 0);
  std::vector<double> prec, rec;
  prec.reserve(preds.size());
  rec.reserve(preds.size());
  long tp = 0, fp = 0;
  for (const VideoSegment& p : preds) {
    int best = -1;
    double best_ti = 0.0;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (matched[gi] || gts[gi].video_id != p.video_id) continue;
      const double ti = tiou(p.seg.start, p.seg.end, gts[gi].seg.start,
                             gts[gi].seg.end);
      if (ti >= threshold && ti > best_ti) {
        best_ti = ti;
        best = static_cast<int>(gi);
      }
    }
    if (best >= 0) {
      matched[best] = 1;
      ++tp;
    } else {
      ++fp;
    }
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    rec.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }
  for (int i = static_cast<int>(prec.size()) - 2; i >= 0; --i)
    prec[i] = std::max(prec[i], prec[i + 1]);
  double ap = 0.0, prev = 0.0;
  for (std::size_t i = 0; i < prec.size(); ++i) {
    ap += (rec[i] - prev) * prec[i];
    prev = rec[i];
  }
  return ap;
}

namespace {

ErrorCounts count_errors(std::vector<VideoSegment> preds,
                         const std::vector<VideoSegment>& gts) {
  ErrorCounts ec;
  ec.bin_size = static_cast<int>(gts.size());
  if (gts.empty()) return ec;
  std::stable_sort(preds.begin(), preds.end(),
                   [](const VideoSegment& a, const VideoSegment& b) {
                     return a.seg.score > b.seg.score;
                   });
  const std::size_t considered =
      std::min(preds.size(), static_cast<std::size_t>(10) * gts.size());
  const std::size_t bins = (considered + gts.size() - 1) / gts.size();
  auto resize_all = [&](std::size_t n) {
    ec.true_positive.assign(n, 0);
    ec.double_detection.assign(n, 0);
    ec.wrong_label.assign(n, 0);
    ec.localization.assign(n, 0);
    ec.background.assign(n, 0);
  };
  resize_all(bins);
  std::vector<char> matched(gts.size(), 0);
  constexpr double kThr = 0.5;
  constexpr double kBackground = 0.01;
  for (std::size_t k = 0; k < considered; ++k) {
    const VideoSegment& p = preds[k];
    const std::size_t bin = k / gts.size();
    double best_any = 0.0;
    int best_same_unmatched = -1;
    double best_same_unmatched_ti = 0.0;
    bool same_class_over = false;
    bool any_over = false;
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gts[gi].video_id != p.video_id) continue;
      const double ti = tiou(p.seg.start, p.seg.end, gts[gi].seg.start,
                             gts[gi].seg.end);
      best_any = std::max(best_any, ti);
      if (ti >= kThr) {
        any_over = true;
        if (gts[gi].seg.class_id == p.seg.class_id) {
          same_class_over = true;
          if (!matched[gi] && ti > best_same_unmatched_ti) {
            best_same_unmatched_ti = ti;
            best_same_unmatched = static_cast<int>(gi);
          }
        }
      }
    }
    if (best_same_unmatched >= 0) {
      matched[best_same_unmatched] = 1;
      ++ec.true_positive[bin];
    } else if (same_class_over) {
      ++ec.double_detection[bin];
    } else if (any_over) {
      ++ec.wrong_label[bin];
    } else if (best_any >= kBackground) {
      ++ec.localization[bin];
    } else {
      ++ec.background[bin];
    }
  }
  return ec;
}

}  // namespace

EvalReport evaluate(const std::vector<VideoSegment>& preds,
                    const std::vector<VideoSegment>& gts,
                    const std::vector<double>& thresholds) {
  ACADET_CHECK(!thresholds.empty(), "evaluate: no tIoU thresholds");
  EvalReport rep;
  rep.thresholds = thresholds;
  std::set<int> classes;
  for (const VideoSegment& g : gts) classes.insert(g.seg.class_id);
  rep.classes.assign(classes.begin(), classes.end());

  for (double thr : thresholds) {
    std::vector<double> aps;
    aps.reserve(rep.classes.size());
    for (int cls : rep.classes) {
      std::vector<VideoSegment> p, g;
      for (const VideoSegment& v : preds)
        if (v.seg.class_id == cls) p.push_back(v);
      for (const VideoSegment& v : gts)
        if (v.seg.class_id == cls) g.push_back(v);
      aps.push_back(average_precision(std::move(p), g, thr));
    }
    double m = 0.0;
    for (double a : aps) m += a;
    rep.per_class_ap.push_back(std::move(aps));
    rep.map_at.push_back(rep.classes.empty()
                             ? 0.0
                             : m / static_cast<double>(rep.classes.size()));
  }
  double avg = 0.0;
  for (double m : rep.map_at) avg += m;
  rep.average_map = avg / static_cast<double>(rep.map_at.size());
  rep.errors = count_errors(preds, gts);
  return rep;
}

}  // namespace acadet
