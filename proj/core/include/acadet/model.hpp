#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acadet/graph.hpp"
#include "acadet/param_store.hpp"

namespace acadet {

enum class ModuleToggle { full, cam_only, lcm_only };
enum class DownsampleKind { maxpool, strided_conv };

struct ModelConfig {
  int in_dim = 16;
  int embed_dim = 256;
  int levels = 6;
  std::vector<int> cgb_kernels = {1, 3, 5};
  int cgb_mix_kernel = 7;
  int lcm_large_kernel_min = 5;
  int lcm_large_kernel_max = 17;
  std::vector<int> lcm_small_kernels = {1, 1, 3};
  int mlp_ratio = 4;
  int num_classes = 3;
  int head_layers = 3;
  int head_kernel = 3;
  ModuleToggle module_toggle = ModuleToggle::full;
  DownsampleKind downsample = DownsampleKind::maxpool;

  void validate() const;  // throws ConfigError
};

// Large-kernel size for 1-based pyramid level i: linear interpolation from
// lcm_large_kernel_max down to lcm_large_kernel_min, rounded to the nearest
// odd (halfway rounds toward the larger odd).
int lcm_schedule(int level, const ModelConfig& cfg);

struct PyramidFeatures {
  std::vector<SeqTensor> levels;
  std::vector<int> strides;  // 2^(i-1)
};

// Per-level head results as live graph values (training path).
struct HeadGraph {
  std::vector<Value> class_logits;  // (B, U, T_i)
  std::vector<Value> offsets;       // (B, 2, T_i), nonnegative
  std::vector<int> strides;
};

// Same results detached from any graph (decode / eval path).
struct HeadOutputs {
  std::vector<SeqTensor> class_logits;
  std::vector<SeqTensor> offsets;
  std::vector<int> strides;
};

// Captures per-level internals of a forward pass when attached.
struct ForwardProbe {
  std::vector<SeqTensor> gate_maps;  // CGB gating coefficients (B, M, T_i)
  std::vector<SeqTensor> norm1_out;  // pre-branch normalized input (B, D, T_i)
  std::vector<SeqTensor> cam_out;    // (B, D, T_i)
  std::vector<SeqTensor> lcm_out;    // (B, D, T_i)
};

struct ForwardOptions {
  // Test hooks: replace a branch output with an exact constant, keeping the
  // rest of the graph identical.
  bool force_cam_zero = false;
  bool force_lcm_zero = false;
  bool force_gate_one = false;
  ForwardProbe* probe = nullptr;
};

class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  void init_params(std::uint64_t seed);
  // Replaces parameter values from a name -> tensor map (checkpoint load).
  void load_params(const std::map<std::string, SeqTensor>& values);

  Value project(Graph& g, Value features);
  std::vector<Value> forward_pyramid(Graph& g, Value projected,
                                     const ForwardOptions& opt = {});
  HeadGraph head_forward(Graph& g, const std::vector<Value>& pyramid);
  // project + pyramid + heads on a raw (B, D_in, T) batch.
  HeadGraph forward(Graph& g, const SeqTensor& features,
                    const ForwardOptions& opt = {});
  HeadOutputs infer(const SeqTensor& features, const ForwardOptions& opt = {});

  static HeadOutputs detach(const HeadGraph& hg);
  static PyramidFeatures detach_pyramid(const std::vector<Value>& levels);

  int level_stride(int level) const;  // 1-based
  std::vector<int> strides() const;

 private:
  Value aca_level(Graph& g, Value prev, int level, const ForwardOptions& opt);
  Value cam_forward(Graph& g, Value x_norm, int level,
                    const ForwardOptions& opt);
  Value cgb_forward(Graph& g, Value q, int level, const ForwardOptions& opt);
  Value lcm_forward(Graph& g, Value x_norm, int level);
  Value head_tower(Graph& g, Value x, const std::string& prefix);
  Value p(Graph& g, const std::string& name);

  ModelConfig cfg_;
  ParamStore params_;
};

}  // namespace acadet
