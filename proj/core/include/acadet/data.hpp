#pragma once

#include <string>
#include <vector>

#include "acadet/common.hpp"
#include "acadet/detection.hpp"
#include "acadet/tensor.hpp"

namespace acadet {

// One annotated video: features are (1, in_dim, T), fully valid, and all
// times (segment boundaries, duration) are measured in feature steps at the
// base temporal rate.
struct VideoRecord {
  std::string video_id;
  SeqTensor features{1, 1, 1};
  std::vector<ActionSegment> segments;
  double duration = 0.0;
  double feature_rate = 1.0;
};

struct SyntheticSpec {
  int num_videos = 32;
  int num_classes = 3;
  int min_length = 64;
  int max_length = 128;
  int in_dim = 16;
  int min_segments = 1;
  int max_segments = 3;
  int min_segment_len = 20;
  int max_segment_len = 28;
  double noise = 0.3;
  std::uint64_t seed = 7;

  void validate() const;
};

// Deterministic synthetic corpus: each class has a fixed channel signature
// drawn once from the seed, segments add that signature on top of Gaussian
// noise, and everything is quantized to float32 so that round-tripping
// through the on-disk feature format is lossless.
std::vector<VideoRecord> generate_synthetic(const SyntheticSpec& spec);

struct Batch {
  SeqTensor features{1, 1, 1};
  std::vector<std::vector<ActionSegment>> segments;
  std::vector<std::string> video_ids;
};

// Groups records into padded batches. Order is shuffled with the given rng;
// pass shuffle=false to keep the input order (inference). Padded lengths are
// rounded up to a multiple of pad_multiple so every pyramid level downsamples
// evenly.
std::vector<Batch> make_batches(const std::vector<VideoRecord>& records,
                                int batch_size, int pad_multiple, Rng& rng,
                                bool shuffle = true);

}  // namespace acadet
