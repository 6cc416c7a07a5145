#include "acadet/data.hpp"

#include <algorithm>
#include <cstdio>

namespace acadet {

void SyntheticSpec::validate() const {
  if (num_videos < 1) throw ConfigError("synthetic: num_videos must be >= 1");
  if (num_classes < 1) throw ConfigError("synthetic: num_classes must be >= 1");
  if (in_dim < 1) throw ConfigError("synthetic: in_dim must be >= 1");
  if (min_length < 1 || max_length < min_length)
    throw ConfigError("synthetic: need 1 <= min_length <= max_length");
  if (min_segment_len < 1 || max_segment_len < min_segment_len)
    throw ConfigError("synthetic: need 1 <= min_segment_len <= max_segment_len");
  if (min_segments < 0 || max_segments < min_segments)
    throw ConfigError("synthetic: need 0 <= min_segments <= max_segments");
  if (!(noise >= 0.0)) throw ConfigError("synthetic: noise must be >= 0");
  // Worst case: min_segments segments all at max_segment_len, separated by a
  // two-step gap, inside the shortest video.
  const int cap = (min_length + 2) / (max_segment_len + 2);
  if (min_segments > cap)
    throw ConfigError("synthetic: min_segments does not fit in min_length");
}

std::vector<VideoRecord> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng root(spec.seed);

  Rng sig_rng = root.fork(0);
  std::vector<std::vector<double>> signature(spec.num_classes);
  for (int c = 0; c < spec.num_classes; ++c) {
    signature[c].resize(spec.in_dim);
    for (int d = 0; d < spec.in_dim; ++d) signature[c][d] = sig_rng.normal();
  }

  std::vector<VideoRecord> out;
  out.reserve(spec.num_videos);
  for (int v = 0; v < spec.num_videos; ++v) {
    Rng vr = root.fork(1 + static_cast<std::uint64_t>(v));
    const int T = vr.uniform_int(spec.min_length, spec.max_length);
    const int cap = (T + 2) / (spec.max_segment_len + 2);
    const int k =
        vr.uniform_int(spec.min_segments, std::min(spec.max_segments, cap));

    std::vector<int> lens(k);
    int used = k > 0 ? 2 * (k - 1) : 0;
    for (int i = 0; i < k; ++i) {
      lens[i] = vr.uniform_int(spec.min_segment_len, spec.max_segment_len);
      used += lens[i];
    }
    const int slack = T - used;

    // Spread the slack over the k+1 gaps via sorted cut points.
    std::vector<int> cuts(k);
    for (int i = 0; i < k; ++i) cuts[i] = vr.uniform_int(0, slack);
    std::sort(cuts.begin(), cuts.end());

    VideoRecord rec;
    char name[32];
    std::snprintf(name, sizeof(name), "synth%04d", v);
    rec.video_id = name;
    rec.duration = static_cast<double>(T);
    rec.feature_rate = 1.0;
    rec.features = SeqTensor(1, spec.in_dim, T);

    int pos = 0, prev_cut = 0;
    for (int i = 0; i < k; ++i) {
      pos += cuts[i] - prev_cut;
      prev_cut = cuts[i];
      ActionSegment seg;
      seg.start = static_cast<double>(pos);
      seg.end = static_cast<double>(pos + lens[i]);
      seg.class_id = vr.uniform_int(0, spec.num_classes - 1);
      rec.segments.push_back(seg);
      pos += lens[i] + 2;
    }

    for (int d = 0; d < spec.in_dim; ++d)
      for (int t = 0; t < T; ++t)
        rec.features.at(0, d, t) = spec.noise * vr.normal();
    for (const ActionSegment& seg : rec.segments)
      for (int t = static_cast<int>(seg.start); t < static_cast<int>(seg.end);
           ++t)
        for (int d = 0; d < spec.in_dim; ++d)
          rec.features.at(0, d, t) += signature[seg.class_id][d];
    for (double& x : rec.features.data()) x = static_cast<float>(x);

    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<Batch> make_batches(const std::vector<VideoRecord>& records,
                                int batch_size, int pad_multiple, Rng& rng,
                                bool shuffle) {
  ACADET_CHECK(batch_size >= 1, "make_batches: batch_size must be >= 1");
  ACADET_CHECK(pad_multiple >= 1, "make_batches: pad_multiple must be >= 1");
  std::vector<int> order(records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  if (shuffle) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const int j = rng.uniform_int(0, static_cast<int>(i) - 1);
      std::swap(order[i - 1], order[j]);
    }
  }

  std::vector<Batch> batches;
  for (std::size_t off = 0; off < order.size();
       off += static_cast<std::size_t>(batch_size)) {
    const std::size_t n =
        std::min<std::size_t>(batch_size, order.size() - off);
    int dim = records[order[off]].features.channels();
    int t_max = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const VideoRecord& r = records[order[off + i]];
      ACADET_CHECK(r.features.channels() == dim,
                   "make_batches: inconsistent feature dims");
      t_max = std::max(t_max, r.features.length());
    }
    const int t_pad = ((t_max + pad_multiple - 1) / pad_multiple) * pad_multiple;

    Batch batch;
    batch.features = SeqTensor(static_cast<int>(n), dim, t_pad);
    for (std::size_t i = 0; i < n; ++i) {
      const VideoRecord& r = records[order[off + i]];
      const int b = static_cast<int>(i);
      batch.features.set_valid_len(b, r.features.length());
      for (int c = 0; c < dim; ++c) {
        const double* src = r.features.row(0, c);
        double* dst = batch.features.row(b, c);
        std::copy(src, src + r.features.length(), dst);
      }
      batch.segments.push_back(r.segments);
      batch.video_ids.push_back(r.video_id);
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

}  // namespace acadet
