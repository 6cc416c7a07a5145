#pragma once

#include <map>
#include <string>

#include "acadet/model.hpp"

namespace acadet {

// Binary checkpoint: "ACAD" magic, u32 version, u64 config length + canonical
// model-config JSON, then name-sorted parameter blobs (u32 name length, name
// bytes, u32 batch/channels/length, u64 count, float64 little-endian data).
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ParamStore& params);

struct Checkpoint {
  ModelConfig config;
  std::map<std::string, SeqTensor> params;
};

Checkpoint load_checkpoint(const std::string& path);

// Convenience: load + construct the model + install parameters.
Model load_model(const std::string& path);

}  // namespace acadet
