#pragma once

// Independent straight-line reference implementations used as oracles by the
// unit and acceptance tests. Deliberately brute force: different data layout,
// different accumulation structure, no sharing with the library code paths.

#include <string>
#include <vector>

#include "acadet/detection.hpp"
#include "acadet/eval.hpp"
#include "acadet/tensor.hpp"

namespace testref {

double tiou(double a_start, double a_end, double b_start, double b_end);

std::vector<acadet::ActionSegment> soft_nms(
    const std::vector<acadet::ActionSegment>& in,
    const acadet::SoftNmsConfig& cfg);

double average_precision(const std::vector<acadet::VideoSegment>& preds,
                         const std::vector<acadet::VideoSegment>& gts,
                         double threshold);

// Mean over class ids present in gts (sorted) of per-class AP.
double mean_ap(const std::vector<acadet::VideoSegment>& preds,
               const std::vector<acadet::VideoSegment>& gts, double threshold);

struct AssignedPos {
  bool positive = false;
  int class_id = -1;
  double off_start = 0.0;
  double off_end = 0.0;
};

// One vector per level, indexed b * length + t. Entries outside the valid
// prefix stay default.
std::vector<std::vector<AssignedPos>> assign(
    const std::vector<std::vector<acadet::ActionSegment>>& gt,
    const std::vector<acadet::LevelShape>& shapes,
    const acadet::LossConfig& cfg);

// Dense conv1d on a fully valid input, position-major accumulation.
acadet::SeqTensor conv1d(const acadet::SeqTensor& x, const acadet::SeqTensor& w,
                         const std::vector<double>& bias, int stride,
                         int padding, int groups);

double sigmoid_scalar(double z);
double gelu_scalar(double x);
double focal_scalar(double logit, double target, double alpha, double gamma);
double giou_scalar(double ps, double pe, double qs, double qe);

}  // namespace testref
