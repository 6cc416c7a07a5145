#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "acadet/tensor.hpp"

namespace acadet {

namespace detail {
struct Node;
}

// Lightweight handle to a node owned by a Graph.
class Value {
 public:
  Value() = default;
  bool defined() const { return n_ != nullptr; }
  const SeqTensor& tensor() const;
  // Gradient of a leaf created with requires_grad (after backward()).
  const std::vector<double>& grad() const;

 private:
  friend class Graph;
  explicit Value(detail::Node* n) : n_(n) {}
  detail::Node* n_ = nullptr;
};

struct Conv1dSpec {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// Padding for a stride-1 convolution that keeps the length unchanged.
// Throws for even kernels, which have no symmetric same-padding.
int same_padding(int kernel);

// Append-only reverse-mode tape over SeqTensor values.
//
// Masking contract, maintained by every op: a padding position never
// influences a valid output, outputs are zero at padding positions, and
// backward never writes gradient into padding positions. Ops that change the
// time length map each row's valid length through the same formula as the
// full length, so a padded batch behaves exactly like the per-sequence runs.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  ~Graph();

  // Leaves. `param` aliases external storage (gradients accumulate into
  // p.grad across graphs); repeated calls with the same tensor return the
  // same node.
  Value input(SeqTensor x, bool requires_grad = false);
  Value constant(SeqTensor x);
  Value param(SeqTensor& p);
  Value zeros(int batch, int channels, int length,
              const std::vector<int>& valid_lens);

  Value apply_mask(Value x);
  Value conv1d(Value x, Value w, Value b, const Conv1dSpec& spec);
  Value linear(Value x, Value w, Value b);
  Value layer_norm(Value x, Value gamma, Value beta, double eps = 1e-5);
  Value relu(Value x);
  Value gelu(Value x);
  Value sigmoid(Value x);
  Value channel_max(Value x);
  Value channel_avg(Value x);
  Value temporal_max_pool(Value x, int kernel, int stride, int padding);
  Value add(Value a, Value b);
  Value mul(Value a, Value b);
  // x is (B, C, T), gate is (B, 1, T); multiplies the gate across channels.
  Value broadcast_mul(Value x, Value gate);
  Value concat_channels(const std::vector<Value>& xs);
  Value slice_channels(Value x, int first, int count);
  Value scale(Value x, double factor);

  // Per-element binary focal loss. targets must be 0/1 and is not
  // differentiated through.
  Value focal_loss(Value logits, const SeqTensor& targets, double alpha,
                   double gamma);
  // Per-position generalized-IoU loss between predicted and target
  // (start, end) offsets, both anchored at the same step and nonnegative.
  // Output is (B, 1, T), zero where positive == 0.
  Value giou_loss(Value offsets, const SeqTensor& target_offsets,
                  const SeqTensor& positive);
  // Sum of x * weights over valid positions, as a (1, 1, 1) scalar.
  Value weighted_sum(Value x, const SeqTensor& weights);

  // Reverse pass from a scalar root, once per graph; a second call is a
  // state error. Every requires_grad leaf ends up with a gradient buffer,
  // zero-filled if the root does not depend on it.
  void backward(Value root);

  std::size_t node_count() const { return nodes_.size(); }

  // Test hook: scales the named op's output adjoint by 1.01 during backward.
  std::string corrupt_backward_op;

 private:
  detail::Node* make(std::string op, SeqTensor value,
                     std::vector<detail::Node*> inputs,
                     std::function<void(detail::Node&)> back);
  detail::Node* leaf(SeqTensor x, bool requires_grad);
  static detail::Node* unwrap(Value v, const char* op);

  std::vector<std::unique_ptr<detail::Node>> nodes_;
  std::map<const SeqTensor*, detail::Node*> params_;
  bool ran_backward_ = false;
};

}  // namespace acadet
