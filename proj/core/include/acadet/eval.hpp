#pragma once

#include <string>
#include <vector>

#include "acadet/detection.hpp"

namespace acadet {

// Temporal IoU between [a_start, a_end] and [b_start, b_end].
double tiou(double a_start, double a_end, double b_start, double b_end);

enum class SoftNmsMethod { gaussian, linear };

struct SoftNmsConfig {
  SoftNmsMethod method = SoftNmsMethod::gaussian;
  double sigma = 0.5;
  double iou_cut = 0.5;  // linear method only
  double score_floor = 0.001;
  int max_keep = 200;
};

// One video's candidates, any mix of classes; segments of different classes
// never decay each other. Output sorted by final score descending.
std::vector<ActionSegment> soft_nms(std::vector<ActionSegment> segments,
                                    const SoftNmsConfig& cfg);

struct VideoSegment {
  std::string video_id;
  ActionSegment seg;
};

// AP for one class. Predictions are ranked by score descending (ties by the
// given order); each greedily matches the unmatched same-video ground truth
// with highest tIoU >= threshold. All-point interpolated area under PR.
double average_precision(std::vector<VideoSegment> preds,
                         const std::vector<VideoSegment>& gts,
                         double threshold);

// DETAD-style false-positive taxonomy at tIoU 0.5, counted over the top
// G-sized bins of the score ranking (G = number of ground-truth segments).
struct ErrorCounts {
  int bin_size = 0;                  // G
  std::vector<long> true_positive;   // per bin
  std::vector<long> double_detection;
  std::vector<long> wrong_label;
  std::vector<long> localization;
  std::vector<long> background;
};

struct EvalReport {
  std::vector<double> thresholds;
  std::vector<int> classes;  // class ids present in ground truth, sorted
  std::vector<std::vector<double>> per_class_ap;  // [threshold][class index]
  std::vector<double> map_at;                     // [threshold]
  double average_map = 0.0;
  ErrorCounts errors;
};

EvalReport evaluate(const std::vector<VideoSegment>& preds,
                    const std::vector<VideoSegment>& gts,
                    const std::vector<double>& thresholds);

}  // namespace acadet
