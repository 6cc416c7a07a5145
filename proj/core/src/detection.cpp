#include "acadet/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace acadet {

std::vector<std::pair<double, double>> LossConfig::default_ranges(int levels) {
  std::vector<std::pair<double, double>> r;
  r.reserve(levels);
  for (int i = 1; i <= levels; ++i) {
    const double lo = i == 1 ? 0.0 : static_cast<double>(1 << i);
    const double hi = i == levels ? -1.0 : static_cast<double>(1 << (i + 1));
    r.emplace_back(lo, hi);
  }
  return r;
}

std::vector<std::pair<double, double>> LossConfig::ranges_for(int levels) const {
  std::vector<std::pair<double, double>> r =
      regression_ranges.empty() ? default_ranges(levels) : regression_ranges;
  if (static_cast<int>(r.size()) != levels)
    throw ConfigError("loss.regression_ranges has " +
                      std::to_string(r.size()) + " entries for " +
                      std::to_string(levels) + " pyramid levels");
  for (int i = 0; i < levels; ++i) {
    const bool last = i == levels - 1;
    if (i == 0 && r[0].first != 0.0)
      throw ConfigError("loss.regression_ranges must start at 0");
    if (i > 0 && r[i].first != r[i - 1].second)
      throw ConfigError("loss.regression_ranges must be contiguous");
    if (last) {
      if (r[i].second >= 0.0)
        throw ConfigError("loss.regression_ranges: last range must be unbounded (max < 0)");
    } else if (r[i].second <= r[i].first) {
      throw ConfigError("loss.regression_ranges entries must be increasing");
    }
  }
  return r;
}

std::vector<LevelShape> level_shapes(const HeadOutputs& outs) {
  std::vector<LevelShape> shapes;
  shapes.reserve(outs.class_logits.size());
  for (std::size_t i = 0; i < outs.class_logits.size(); ++i) {
    const SeqTensor& t = outs.class_logits[i];
    shapes.push_back({outs.strides[i], t.length(), t.valid_lens()});
  }
  return shapes;
}

std::vector<LevelShape> level_shapes(const HeadGraph& hg) {
  std::vector<LevelShape> shapes;
  shapes.reserve(hg.class_logits.size());
  for (std::size_t i = 0; i < hg.class_logits.size(); ++i) {
    const SeqTensor& t = hg.class_logits[i].tensor();
    shapes.push_back({hg.strides[i], t.length(), t.valid_lens()});
  }
  return shapes;
}

AssignmentTargets assign_targets(
    const std::vector<std::vector<ActionSegment>>& gt,
    const std::vector<LevelShape>& shapes, const LossConfig& cfg) {
  const int batch = shapes.empty() ? 0 : static_cast<int>(shapes[0].valid.size());
  ACADET_CHECK(static_cast<int>(gt.size()) == batch,
               "assign_targets: ground-truth batch size mismatch");
  const auto ranges = cfg.ranges_for(static_cast<int>(shapes.size()));

  AssignmentTargets out;
  out.batch = batch;
  out.n_pos.assign(batch, 0);
  out.n_neg.assign(batch, 0);
  for (std::size_t li = 0; li < shapes.size(); ++li) {
    const LevelShape& sh = shapes[li];
    LevelTargets lt;
    lt.stride = sh.stride;
    lt.length = sh.length;
    const std::size_t total = static_cast<std::size_t>(batch) * sh.length;
    lt.is_valid.assign(total, 0);
    lt.positive.assign(total, 0);
    lt.class_id.assign(total, -1);
    lt.off_start.assign(total, 0.0);
    lt.off_end.assign(total, 0.0);

    const double lo = ranges[li].first;
    const double hi = ranges[li].second;
    for (int b = 0; b < batch; ++b) {
      for (int t = 0; t < sh.valid[b]; ++t) {
        const std::size_t idx = lt.at(b, t);
        lt.is_valid[idx] = 1;
        const double x = static_cast<double>(sh.stride) * t;
        int best = -1;
        for (std::size_t u = 0; u < gt[b].size(); ++u) {
          const ActionSegment& seg = gt[b][u];
          if (x < seg.start || x > seg.end) continue;
          const double center = 0.5 * (seg.start + seg.end);
          if (std::abs(x - center) > cfg.center_sampling_radius * sh.stride)
            continue;
          const double ds = (x - seg.start) / sh.stride;
          const double de = (seg.end - x) / sh.stride;
          const double m = std::max(ds, de);
          if (m <= lo || (hi >= 0.0 && m > hi)) continue;
          if (best < 0) {
            best = static_cast<int>(u);
            continue;
          }
          const ActionSegment& cur = gt[b][best];
          const double len_u = seg.end - seg.start;
          const double len_c = cur.end - cur.start;
          if (len_u < len_c ||
              (len_u == len_c &&
               (seg.start < cur.start ||
                (seg.start == cur.start && seg.class_id < cur.class_id))))
            best = static_cast<int>(u);
        }
        if (best >= 0) {
          const ActionSegment& seg = gt[b][best];
          lt.positive[idx] = 1;
          lt.class_id[idx] = seg.class_id;
          lt.off_start[idx] = (x - seg.start) / sh.stride;
          lt.off_end[idx] = (seg.end - x) / sh.stride;
          ++out.n_pos[b];
        } else {
          ++out.n_neg[b];
        }
      }
    }
    out.levels.push_back(std::move(lt));
  }
  return out;
}

double giou_loss_value(double ps, double pe, double qs, double qe) {
  ACADET_CHECK(ps >= 0 && pe >= 0 && qs >= 0 && qe >= 0,
               "giou_loss_value: offsets must be nonnegative");
  ACADET_CHECK(qs + qe > 0, "giou_loss_value: degenerate target interval");
  const double inter = std::max(0.0, std::min(pe, qe) + std::min(ps, qs));
  const double uni = (ps + pe) + (qs + qe) - inter;
  const double hull = std::max(pe, qe) + std::max(ps, qs);
  return 1.0 - inter / uni + (hull - uni) / hull;
}

double anchored_quality(double ps, double pe, double qs, double qe) {
  const double inter = std::max(0.0, std::min(pe, qe) + std::min(ps, qs));
  const double uni = (ps + pe) + (qs + qe) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

Value total_loss(Graph& g, const HeadGraph& heads,
                 const AssignmentTargets& targets, const LossConfig& cfg) {
  ACADET_CHECK(heads.class_logits.size() == targets.levels.size(),
               "total_loss: level count mismatch");
  const int batch = targets.batch;
  Value acc;
  for (std::size_t li = 0; li < targets.levels.size(); ++li) {
    const LevelTargets& lt = targets.levels[li];
    const SeqTensor& logits = heads.class_logits[li].tensor();
    const SeqTensor& offs = heads.offsets[li].tensor();
    const int U = logits.channels(), T = logits.length();

    SeqTensor y(batch, U, T);
    y.set_valid_lens(logits.valid_lens());
    SeqTensor wc(batch, U, T);
    wc.set_valid_lens(logits.valid_lens());
    SeqTensor q(batch, 2, T);
    q.set_valid_lens(offs.valid_lens());
    SeqTensor pos(batch, 1, T);
    pos.set_valid_lens(logits.valid_lens());
    SeqTensor wr(batch, 1, T);
    wr.set_valid_lens(logits.valid_lens());

    bool any_pos = false;
    for (int b = 0; b < batch; ++b) {
      const double wneg =
          targets.n_neg[b] > 0 ? 1.0 / static_cast<double>(targets.n_neg[b]) : 0.0;
      const double wpos_base =
          targets.n_pos[b] > 0 ? 1.0 / static_cast<double>(targets.n_pos[b]) : 0.0;
      for (int t = 0; t < logits.valid_len(b); ++t) {
        const std::size_t idx = lt.at(b, t);
        if (lt.positive[idx]) {
          any_pos = true;
          y.at(b, lt.class_id[idx], t) = 1.0;
          q.at(b, 0, t) = lt.off_start[idx];
          q.at(b, 1, t) = lt.off_end[idx];
          pos.at(b, 0, t) = 1.0;
          const double quality =
              targets.quality_override.empty()
                  ? anchored_quality(offs.at(b, 0, t), offs.at(b, 1, t),
                                     lt.off_start[idx], lt.off_end[idx])
                  : targets.quality_override[li][idx];
          const double w = quality * wpos_base;
          for (int u = 0; u < U; ++u) wc.at(b, u, t) = w;
          wr.at(b, 0, t) = cfg.lambda_reg * wpos_base;
        } else {
          for (int u = 0; u < U; ++u) wc.at(b, u, t) = wneg;
        }
      }
    }

    Value cls_elems = g.focal_loss(heads.class_logits[li], y, cfg.focal_alpha,
                                   cfg.focal_gamma);
    Value term = g.weighted_sum(cls_elems, wc);
    acc = acc.defined() ? g.add(acc, term) : term;
    if (any_pos && cfg.lambda_reg != 0.0) {
      Value reg_elems = g.giou_loss(heads.offsets[li], q, pos);
      Value reg_term = g.weighted_sum(reg_elems, wr);
      acc = g.add(acc, reg_term);
    }
  }
  if (!acc.defined()) {
    SeqTensor z(1, 1, 1);
    return g.constant(std::move(z));
  }
  return acc;
}

std::vector<ActionSegment> decode(const HeadOutputs& outs, int batch_index,
                                  double score_threshold, int pre_nms_topk) {
  ACADET_CHECK(!outs.class_logits.empty(), "decode: empty outputs");
  const int b = batch_index;
  const double bound = outs.class_logits[0].valid_len(b);
  std::vector<ActionSegment> cands;
  for (std::size_t li = 0; li < outs.class_logits.size(); ++li) {
    const SeqTensor& logits = outs.class_logits[li];
    const SeqTensor& offs = outs.offsets[li];
    const double stride = outs.strides[li];
    const int U = logits.channels();
    for (int t = 0; t < logits.valid_len(b); ++t) {
      const double ps = offs.at(b, 0, t);
      const double pe = offs.at(b, 1, t);
      const double start =
          std::clamp(stride * (t - ps), 0.0, bound);
      const double end = std::clamp(stride * (t + pe), 0.0, bound);
      if (!(end > start)) continue;
      for (int u = 0; u < U; ++u) {
        const double score = 1.0 / (1.0 + std::exp(-logits.at(b, u, t)));
        if (score >= score_threshold)
          cands.push_back({start, end, u, score});
      }
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const ActionSegment& a, const ActionSegment& s) {
                     return a.score > s.score;
                   });
  if (pre_nms_topk >= 0 && static_cast<int>(cands.size()) > pre_nms_topk)
    cands.resize(pre_nms_topk);
  return cands;
}

}  // namespace acadet
