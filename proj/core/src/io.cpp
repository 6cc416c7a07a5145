#include "acadet/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"

namespace acadet {

using ordered_json = nlohmann::ordered_json;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.15g", v);
  if (std::strtod(buf, nullptr) != v)
    std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

constexpr char kFeatureMagic[4] = {'C', 'D', 'T', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n,
                const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (in.gcount() != static_cast<std::streamsize>(n))
    throw DataError("feature file truncated: " + path);
}

std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw DataError("cannot write file: " + path);
  return out;
}

void dump_json(const std::string& path, const ordered_json& j) {
  std::ofstream out = open_out(path, false);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("cannot write file: " + path);
}

ordered_json parse_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace

void save_features(const std::string& path, const SeqTensor& features) {
  ACADET_CHECK(features.batch() == 1 && features.fully_valid(),
               "save_features: expected a single fully valid sequence");
  std::ofstream out = open_out(path, true);
  write_bytes(out, kFeatureMagic, 4);
  const std::uint32_t version = kFeatureVersion;
  const std::uint32_t dim = static_cast<std::uint32_t>(features.channels());
  const std::uint64_t length = static_cast<std::uint64_t>(features.length());
  write_bytes(out, &version, 4);
  write_bytes(out, &dim, 4);
  write_bytes(out, &length, 8);
  for (int t = 0; t < features.length(); ++t)
    for (int c = 0; c < features.channels(); ++c) {
      const float f = static_cast<float>(features.at(0, c, t));
      write_bytes(out, &f, 4);
    }
  if (!out) throw DataError("cannot write file: " + path);
}

SeqTensor load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  char magic[4];
  read_bytes(in, magic, 4, path);
  if (std::memcmp(magic, kFeatureMagic, 4) != 0)
    throw DataError("not a feature file: " + path);
  std::uint32_t version = 0, dim = 0;
  std::uint64_t length = 0;
  read_bytes(in, &version, 4, path);
  if (version != kFeatureVersion)
    throw DataError("unsupported feature file version in " + path);
  read_bytes(in, &dim, 4, path);
  read_bytes(in, &length, 8, path);
  if (dim == 0 || length == 0 || dim > (1u << 20) || length > (1ull << 32))
    throw DataError("implausible feature file header in " + path);
  SeqTensor out(1, static_cast<int>(dim), static_cast<int>(length));
  std::vector<float> row(dim);
  for (std::uint64_t t = 0; t < length; ++t) {
    read_bytes(in, row.data(), 4 * dim, path);
    for (std::uint32_t c = 0; c < dim; ++c)
      out.at(0, static_cast<int>(c), static_cast<int>(t)) = row[c];
  }
  return out;
}

void save_annotations(const std::string& path,
                      const std::vector<VideoRecord>& videos,
                      const std::vector<std::string>& labels) {
  ordered_json root;
  root["videos"] = ordered_json::array();
  for (const VideoRecord& v : videos) {
    ordered_json jv;
    jv["id"] = v.video_id;
    jv["duration"] = v.duration;
    jv["feature_rate"] = v.feature_rate;
    jv["segments"] = ordered_json::array();
    for (const ActionSegment& s : v.segments) {
      ACADET_CHECK(s.class_id >= 0 &&
                       s.class_id < static_cast<int>(labels.size()),
                   "save_annotations: class_id outside label vocabulary");
      ordered_json js;
      js["start"] = s.start;
      js["end"] = s.end;
      js["label"] = labels[s.class_id];
      jv["segments"].push_back(std::move(js));
    }
    root["videos"].push_back(std::move(jv));
  }
  dump_json(path, root);
}

Annotations load_annotations(const std::string& path) {
  const ordered_json root = parse_json(path);
  if (!root.is_object() || !root.contains("videos") ||
      !root["videos"].is_array())
    throw DataError(path + ": expected an object with a \"videos\" array");

  std::set<std::string> label_set;
  for (const auto& jv : root["videos"]) {
    if (!jv.is_object() || !jv.contains("id") || !jv["id"].is_string())
      throw DataError(path + ": video entry without a string \"id\"");
    if (jv.contains("segments"))
      for (const auto& js : jv["segments"]) {
        if (!js.is_object() || !js.contains("label") ||
            !js["label"].is_string() || js["label"].get<std::string>().empty())
          throw DataError(path + ": video " + jv["id"].get<std::string>() +
                          ": segment without a label");
        label_set.insert(js["label"].get<std::string>());
      }
  }

  Annotations out;
  out.labels.assign(label_set.begin(), label_set.end());
  std::map<std::string, int> label_id;
  for (std::size_t i = 0; i < out.labels.size(); ++i)
    label_id[out.labels[i]] = static_cast<int>(i);

  std::set<std::string> seen_ids;
  for (const auto& jv : root["videos"]) {
    VideoRecord rec;
    rec.video_id = jv["id"].get<std::string>();
    const std::string where = path + ": video " + rec.video_id;
    if (!seen_ids.insert(rec.video_id).second)
      throw DataError(where + ": duplicate id");
    if (!jv.contains("duration") || !jv["duration"].is_number() ||
        !(jv["duration"].get<double>() > 0))
      throw DataError(where + ": duration must be a positive number");
    rec.duration = jv["duration"].get<double>();
    rec.feature_rate = 1.0;
    if (jv.contains("feature_rate")) {
      if (!jv["feature_rate"].is_number() ||
          !(jv["feature_rate"].get<double>() > 0))
        throw DataError(where + ": feature_rate must be a positive number");
      rec.feature_rate = jv["feature_rate"].get<double>();
    }
    if (jv.contains("segments")) {
      if (!jv["segments"].is_array())
        throw DataError(where + ": segments must be an array");
      for (const auto& js : jv["segments"]) {
        if (!js.contains("start") || !js["start"].is_number() ||
            !js.contains("end") || !js["end"].is_number())
          throw DataError(where + ": segment needs numeric start and end");
        ActionSegment seg;
        seg.start = js["start"].get<double>();
        seg.end = js["end"].get<double>();
        seg.class_id = label_id.at(js["label"].get<std::string>());
        if (!(seg.start >= 0) || !(seg.end > seg.start) ||
            seg.end > rec.duration + 1e-6)
          throw DataError(where + ": segment outside [0, duration]");
        rec.segments.push_back(seg);
      }
    }
    out.videos.push_back(std::move(rec));
  }
  return out;
}

std::vector<VideoRecord> load_dataset(const std::string& annotations_path,
                                      const std::string& features_dir) {
  Annotations anns = load_annotations(annotations_path);
  for (VideoRecord& rec : anns.videos) {
    const std::string fpath = features_dir + "/" + rec.video_id + ".cdtf";
    rec.features = load_features(fpath);
    const int T = rec.features.length();
    for (const ActionSegment& seg : rec.segments)
      if (seg.end > static_cast<double>(T) + 1e-6)
        throw DataError(fpath + ": segment ends past the feature sequence");
  }
  return std::move(anns.videos);
}

void save_dataset(const std::string& annotations_path,
                  const std::string& features_dir,
                  const std::vector<VideoRecord>& videos,
                  const std::vector<std::string>& labels) {
  std::filesystem::create_directories(features_dir);
  save_annotations(annotations_path, videos, labels);
  for (const VideoRecord& v : videos)
    save_features(features_dir + "/" + v.video_id + ".cdtf", v.features);
}

void save_predictions(const std::string& path,
                      const std::vector<std::string>& video_ids,
                      const std::vector<VideoSegment>& preds,
                      const std::vector<std::string>& labels) {
  ordered_json root;
  root["videos"] = ordered_json::array();
  for (const std::string& id : video_ids) {
    std::vector<const VideoSegment*> mine;
    for (const VideoSegment& p : preds)
      if (p.video_id == id) mine.push_back(&p);
    std::stable_sort(mine.begin(), mine.end(),
                     [](const VideoSegment* a, const VideoSegment* b) {
                       return a->seg.score > b->seg.score;
                     });
    ordered_json jv;
    jv["id"] = id;
    jv["segments"] = ordered_json::array();
    for (const VideoSegment* p : mine) {
      ordered_json js;
      js["start"] = p->seg.start;
      js["end"] = p->seg.end;
      js["label"] = labels.at(static_cast<std::size_t>(p->seg.class_id));
      js["score"] = p->seg.score;
      jv["segments"].push_back(std::move(js));
    }
    root["videos"].push_back(std::move(jv));
  }
  dump_json(path, root);
}

void save_eval_report(const std::string& path, const EvalReport& report,
                      const std::vector<std::string>& labels) {
  ordered_json root;
  root["thresholds"] = report.thresholds;
  root["classes"] = ordered_json::array();
  for (int cls : report.classes)
    root["classes"].push_back(labels.at(static_cast<std::size_t>(cls)));
  root["map"] = ordered_json::object();
  for (std::size_t i = 0; i < report.thresholds.size(); ++i)
    root["map"][fmt_double(report.thresholds[i])] = report.map_at[i];
  root["average_map"] = report.average_map;
  root["per_class_ap"] = ordered_json::object();
  for (std::size_t i = 0; i < report.thresholds.size(); ++i) {
    ordered_json row;
    for (std::size_t c = 0; c < report.classes.size(); ++c)
      row[labels.at(static_cast<std::size_t>(report.classes[c]))] =
          report.per_class_ap[i][c];
    root["per_class_ap"][fmt_double(report.thresholds[i])] = std::move(row);
  }
  ordered_json err;
  err["bin_size"] = report.errors.bin_size;
  err["true_positive"] = report.errors.true_positive;
  err["double_detection"] = report.errors.double_detection;
  err["wrong_label"] = report.errors.wrong_label;
  err["localization"] = report.errors.localization;
  err["background"] = report.errors.background;
  root["errors"] = std::move(err);
  dump_json(path, root);
}

namespace {

std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void write_line_plot(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series) {
  const double W = 860, H = 500;
  const double ml = 70, mr = 24, mt = 44, mb = 54;
  const double pw = W - ml - mr, ph = H - mt - mb;

  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const PlotSeries& s : series)
    for (auto [x, y] : s.points) {
      if (first) {
        xmin = xmax = x;
        ymin = ymax = y;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  if (ymax - ymin < 1e-12) ymax = ymin + 1;
  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) { return mt + ph - (y - ymin) / (ymax - ymin) * ph; };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                  "#9467bd", "#ff7f0e", "#8c564b"};
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W
      << "\" height=\"" << H << "\" viewBox=\"0 0 " << W << " " << H
      << "\">\n";
  svg << "<rect width=\"" << W << "\" height=\"" << H
      << "\" fill=\"white\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"26\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << svg_escape(title) << "</text>\n";

  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / ticks;
    const double fy = ymin + (ymax - ymin) * i / ticks;
    svg << "<line x1=\"" << svg_num(px(fx)) << "\" y1=\"" << svg_num(mt)
        << "\" x2=\"" << svg_num(px(fx)) << "\" y2=\"" << svg_num(mt + ph)
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<line x1=\"" << svg_num(ml) << "\" y1=\"" << svg_num(py(fy))
        << "\" x2=\"" << svg_num(ml + pw) << "\" y2=\"" << svg_num(py(fy))
        << "\" stroke=\"#dddddd\"/>\n";
    svg << "<text x=\"" << svg_num(px(fx)) << "\" y=\"" << svg_num(mt + ph + 18)
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << tick_label(fx) << "</text>\n";
    svg << "<text x=\"" << svg_num(ml - 8) << "\" y=\"" << svg_num(py(fy) + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << tick_label(fy) << "</text>\n";
  }
  svg << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw
      << "\" height=\"" << ph << "\" fill=\"none\" stroke=\"#333333\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">"
      << svg_escape(x_label) << "</text>\n";
  svg << "<text x=\"20\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 20 "
      << mt + ph / 2 << ")\">" << svg_escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const char* color = palette[si % 6];
    if (!series[si].points.empty()) {
      svg << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.6\" points=\"";
      for (auto [x, y] : series[si].points)
        svg << svg_num(px(x)) << "," << svg_num(py(y)) << " ";
      svg << "\"/>\n";
    }
    const double ly = mt + 16 + 16 * static_cast<double>(si);
    svg << "<line x1=\"" << ml + pw - 150 << "\" y1=\"" << ly << "\" x2=\""
        << ml + pw - 126 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << ml + pw - 120 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"12\">"
        << svg_escape(series[si].name) << "</text>\n";
  }
  svg << "</svg>\n";

  std::ofstream out = open_out(path, false);
  out << svg.str();
  if (!out) throw DataError("cannot write file: " + path);
}

}  // namespace acadet
