#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acadet/model.hpp"

namespace acadet {

// Ground truth (score 1.0) and predictions share this type. Times are in
// stride-1 feature steps.
struct ActionSegment {
  double start = 0;
  double end = 0;
  int class_id = 0;
  double score = 1.0;
};

struct LossConfig {
  double lambda_reg = 1.0;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double center_sampling_radius = 1.5;  // in strides
  // Per-level (min, max] bounds on the normalized max offset, in stride
  // units; max < 0 means unbounded. Empty = derive defaults for the level
  // count: (0,4], (4,8], (8,16], ..., (2^L, inf).
  std::vector<std::pair<double, double>> regression_ranges;

  static std::vector<std::pair<double, double>> default_ranges(int levels);
  // Returns ranges to use for `levels` levels, validating coverage/order.
  std::vector<std::pair<double, double>> ranges_for(int levels) const;
};

struct LevelShape {
  int stride = 1;
  int length = 0;
  std::vector<int> valid;  // per batch element
};

std::vector<LevelShape> level_shapes(const HeadOutputs& outs);
std::vector<LevelShape> level_shapes(const HeadGraph& hg);

// Flattened (batch, length) per-level assignment results.
struct LevelTargets {
  int stride = 1;
  int length = 0;
  std::vector<std::uint8_t> is_valid;  // inside the sequence mask
  std::vector<std::uint8_t> positive;
  std::vector<int> class_id;          // -1 at non-positives
  std::vector<double> off_start, off_end;  // stride units, at positives

  std::size_t at(int b, int t) const {
    return static_cast<std::size_t>(b) * length + t;
  }
};

struct AssignmentTargets {
  std::vector<LevelTargets> levels;
  int batch = 0;
  std::vector<std::int64_t> n_pos, n_neg;  // per batch element
  // When nonempty (one flat (batch * length) vector per level), these values
  // replace the IoU quality weights that total_loss otherwise computes from
  // the live predictions. Lets tests treat the loss as a fixed function of
  // the parameters; training never sets it.
  std::vector<std::vector<double>> quality_override;
};

// FCOS-style assignment: position t of level i (input coordinate 2^(i-1)*t)
// is positive for segment u iff it lies inside [s_u, e_u] and within
// radius*stride of the segment center, and the larger normalized offset
// falls inside the level's regression range. Ties resolve to the shortest
// segment, then the earlier start, then the lower class id.
AssignmentTargets assign_targets(
    const std::vector<std::vector<ActionSegment>>& gt,
    const std::vector<LevelShape>& shapes, const LossConfig& cfg);

// 1D GIoU loss for offset pairs anchored at the same step: 1 - IoU +
// (|hull| - |union|)/|hull|.
double giou_loss_value(double pred_start, double pred_end, double target_start,
                       double target_end);

// tIoU of two intervals expressed as nonnegative (start, end) offsets from a
// shared anchor step; 0 when both are empty.
double anchored_quality(double pred_start, double pred_end,
                        double target_start, double target_end);

// Combined objective: per batch element, (1/N_pos) sum over positives of
// (quality * L_cls + lambda * L_reg) plus (1/N_neg) sum over negatives of
// L_cls, then summed over the batch. quality is the tIoU between the
// currently predicted and target intervals, used as a constant weight.
Value total_loss(Graph& g, const HeadGraph& heads,
                 const AssignmentTargets& targets, const LossConfig& cfg);

// Candidate segments for one batch element: every (level, valid position,
// class) with sigmoid score >= score_threshold, start/end from the offsets
// at that position, clamped to the sequence bounds; top pre_nms_topk by
// score.
std::vector<ActionSegment> decode(const HeadOutputs& outs, int batch_index,
                                  double score_threshold, int pre_nms_topk);

}  // namespace acadet
