#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "acadet/tensor.hpp"

namespace acadet {

// Named trainable tensors. std::map keeps iteration (and thus serialization
// and optimizer update order) sorted by name.
class ParamStore {
 public:
  SeqTensor& add(const std::string& name, SeqTensor init);
  SeqTensor& get(const std::string& name);
  const SeqTensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, SeqTensor>& all() { return params_; }
  const std::map<std::string, SeqTensor>& all() const { return params_; }

  void zero_grads();
  std::size_t count() const { return params_.size(); }
  std::int64_t total_scalars() const;

 private:
  std::map<std::string, SeqTensor> params_;
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay variant; moments keyed by parameter name.
class AdamW {
 public:
  explicit AdamW(ParamStore& store, AdamWConfig cfg = {});
  // One update with the given learning rate; requires grads populated.
  void step(double lr);
  long steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  ParamStore* store_;
  AdamWConfig cfg_;
  long t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace acadet
