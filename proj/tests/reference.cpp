#include "reference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

namespace testref {

using acadet::ActionSegment;
using acadet::LevelShape;
using acadet::LossConfig;
using acadet::SeqTensor;
using acadet::SoftNmsConfig;
using acadet::SoftNmsMethod;
using acadet::VideoSegment;

double tiou(double a_start, double a_end, double b_start, double b_end) {
  const double lo = std::max(a_start, b_start);
  const double hi = std::min(a_end, b_end);
  double inter = 0.0;
  if (hi > lo) inter = hi - lo;
  const double uni = (a_end - a_start) + (b_end - b_start) - inter;
  return inter / uni;
}

std::vector<ActionSegment> soft_nms(const std::vector<ActionSegment>& in,
                                    const SoftNmsConfig& cfg) {
  std::vector<ActionSegment> pool = in;
  std::vector<ActionSegment> picked;
  const std::size_t want =
      cfg.max_keep <= 0 ? in.size() : static_cast<std::size_t>(cfg.max_keep);
  while (!pool.empty() && picked.size() < want) {
    std::size_t m = 0;
    for (std::size_t i = 1; i < pool.size(); ++i)
      if (pool[i].score > pool[m].score) m = i;
    const ActionSegment sel = pool[m];
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(m));
    picked.push_back(sel);
    std::vector<ActionSegment> next;
    next.reserve(pool.size());
    for (ActionSegment c : pool) {
      bool keep = true;
      if (c.class_id == sel.class_id) {
        const double ov = tiou(sel.start, sel.end, c.start, c.end);
        double f = 1.0;
        if (cfg.method == SoftNmsMethod::gaussian)
          f = std::exp(-(ov * ov) / cfg.sigma);
        else if (ov >= cfg.iou_cut)
          f = 1.0 - ov;
        c.score *= f;
        if (c.score < cfg.score_floor) keep = false;
      }
      if (keep) next.push_back(c);
    }
    pool.swap(next);
  }
  std::stable_sort(picked.begin(), picked.end(),
                   [](const ActionSegment& a, const ActionSegment& b) {
                     return a.score > b.score;
                   });
  return picked;
}

double average_precision(const std::vector<VideoSegment>& preds,
                         const std::vector<VideoSegment>& gts,
                         double threshold) {
  const std::size_t n_gt = gts.size();
  if (n_gt == 0) return 0.0;
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&preds](std::size_t a, std::size_t b) {
                     return preds[a].seg.score > preds[b].seg.score;
                   });

  std::vector<char> used(n_gt, 0);
  std::vector<char> is_tp(order.size(), 0);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const VideoSegment& p = preds[order[r]];
    int pick = -1;
    double best = -1.0;
    for (std::size_t gi = 0; gi < n_gt; ++gi) {
      if (used[gi] || gts[gi].video_id != p.video_id) continue;
      const double ov =
          tiou(p.seg.start, p.seg.end, gts[gi].seg.start, gts[gi].seg.end);
      if (ov < threshold) continue;
      if (ov > best) {
        best = ov;
        pick = static_cast<int>(gi);
      }
    }
    if (pick >= 0) {
      used[static_cast<std::size_t>(pick)] = 1;
      is_tp[r] = 1;
    }
  }

  std::vector<double> precision(order.size(), 0.0);
  long tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (is_tp[r]) ++tp;
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
  }

  // All-point interpolation: each true positive contributes 1/n_gt times the
  // best precision achieved at or after its rank.
  double ap = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!is_tp[r]) continue;
    double peak = 0.0;
    for (std::size_t j = r; j < order.size(); ++j)
      peak = std::max(peak, precision[j]);
    ap += peak / static_cast<double>(n_gt);
  }
  return ap;
}

double mean_ap(const std::vector<VideoSegment>& preds,
               const std::vector<VideoSegment>& gts, double threshold) {
  std::set<int> classes;
  for (const VideoSegment& g : gts) classes.insert(g.seg.class_id);
  if (classes.empty()) return 0.0;
  double sum = 0.0;
  for (int cls : classes) {
    std::vector<VideoSegment> p, g;
    for (const VideoSegment& v : preds)
      if (v.seg.class_id == cls) p.push_back(v);
    for (const VideoSegment& v : gts)
      if (v.seg.class_id == cls) g.push_back(v);
    sum += testref::average_precision(p, g, threshold);
  }
  return sum / static_cast<double>(classes.size());
}

std::vector<std::vector<AssignedPos>> assign(
    const std::vector<std::vector<ActionSegment>>& gt,
    const std::vector<LevelShape>& shapes, const LossConfig& cfg) {
  const auto ranges = cfg.ranges_for(static_cast<int>(shapes.size()));
  std::vector<std::vector<AssignedPos>> out(shapes.size());
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const LevelShape& sh = shapes[li];
    const int batch = static_cast<int>(sh.valid.size());
    out[li].assign(static_cast<std::size_t>(batch) * sh.length, AssignedPos{});
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < sh.valid[b]; ++t) {
        const double x = static_cast<double>(sh.stride) * t;
        // Gather every admissible segment, then take the lexicographic
        // minimum of (length, start, class id, index).
        std::vector<std::tuple<double, double, int, std::size_t>> cands;
        for (std::size_t u = 0; u < gt[b].size(); ++u) {
          const ActionSegment& s = gt[b][u];
          if (x < s.start) continue;
          if (x > s.end) continue;
          const double center = (s.start + s.end) / 2.0;
          if (std::abs(x - center) > cfg.center_sampling_radius * sh.stride)
            continue;
          const double ds = (x - s.start) / sh.stride;
          const double de = (s.end - x) / sh.stride;
          const double m = std::max(ds, de);
          const double lo = ranges[li].first, hi = ranges[li].second;
          if (!(m > lo)) continue;
          if (hi >= 0.0 && m > hi) continue;
          cands.emplace_back(s.end - s.start, s.start, s.class_id, u);
        }
        if (cands.empty()) continue;
        const auto it = std::min_element(cands.begin(), cands.end());
        const ActionSegment& s = gt[b][std::get<3>(*it)];
        AssignedPos& ap = out[li][static_cast<std::size_t>(b) * sh.length + t];
        ap.positive = true;
        ap.class_id = s.class_id;
        ap.off_start = (x - s.start) / sh.stride;
        ap.off_end = (s.end - x) / sh.stride;
      }
    }
  }
  return out;
}

SeqTensor conv1d(const SeqTensor& x, const SeqTensor& w,
                 const std::vector<double>& bias, int stride, int padding,
                 int groups) {
  const int cin = x.channels(), cout = w.batch(), k = w.length();
  const int cing = cin / groups, coutg = cout / groups;
  const int t_out = (x.length() + 2 * padding - k) / stride + 1;
  SeqTensor y(x.batch(), cout, t_out);
  for (int b = 0; b < x.batch(); ++b) {
    for (int oc = 0; oc < cout; ++oc) {
      const int icbase = (oc / coutg) * cing;
      for (int j = 0; j < t_out; ++j) {
        double acc = bias.empty() ? 0.0 : bias[oc];
        for (int ic = 0; ic < cing; ++ic) {
          for (int kk = 0; kk < k; ++kk) {
            const int pos = j * stride + kk - padding;
            if (pos < 0 || pos >= x.length()) continue;
            acc += w.at(oc, ic, kk) * x.at(b, icbase + ic, pos);
          }
        }
        y.at(b, oc, j) = acc;
      }
    }
  }
  return y;
}

double sigmoid_scalar(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

double focal_scalar(double logit, double target, double alpha, double gamma) {
  const double p = sigmoid_scalar(logit);
  if (target > 0.5) return -alpha * std::pow(1.0 - p, gamma) * std::log(p);
  return -(1.0 - alpha) * std::pow(p, gamma) * std::log(1.0 - p);
}

double giou_scalar(double ps, double pe, double qs, double qe) {
  const double inter = std::max(0.0, std::min(pe, qe) + std::min(ps, qs));
  const double uni = (ps + pe) + (qs + qe) - inter;
  const double hull = std::max(pe, qe) + std::max(ps, qs);
  return 1.0 - inter / uni + (hull - uni) / hull;
}

}  // namespace testref
