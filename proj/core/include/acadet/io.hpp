#pragma once

#include <string>
#include <utility>
#include <vector>

#include "acadet/data.hpp"
#include "acadet/eval.hpp"

namespace acadet {

// Shortest-ish decimal form that round-trips a double; all text outputs use
// this so repeated runs produce byte-identical files.
std::string fmt_double(double v);

// Binary feature file: "CDTF" magic, u32 version, u32 dim, u64 length,
// then length*dim float32 little-endian values, time-major.
void save_features(const std::string& path, const SeqTensor& features);
SeqTensor load_features(const std::string& path);

struct Annotations {
  std::vector<VideoRecord> videos;  // features left empty
  std::vector<std::string> labels;  // sorted vocabulary; class_id indexes it
};

void save_annotations(const std::string& path,
                      const std::vector<VideoRecord>& videos,
                      const std::vector<std::string>& labels);
Annotations load_annotations(const std::string& path);

// Annotations plus one feature file per video under features_dir/<id>.cdtf.
std::vector<VideoRecord> load_dataset(const std::string& annotations_path,
                                      const std::string& features_dir);
void save_dataset(const std::string& annotations_path,
                  const std::string& features_dir,
                  const std::vector<VideoRecord>& videos,
                  const std::vector<std::string>& labels);

void save_predictions(const std::string& path,
                      const std::vector<std::string>& video_ids,
                      const std::vector<VideoSegment>& preds,
                      const std::vector<std::string>& labels);

void save_eval_report(const std::string& path, const EvalReport& report,
                      const std::vector<std::string>& labels);

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

// Minimal standalone SVG line chart.
void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series);

}  // namespace acadet
