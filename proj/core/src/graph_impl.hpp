#pragma once

#include "acadet/graph.hpp"

namespace acadet::detail {

struct Node {
  std::string op;
  SeqTensor own;
  SeqTensor* ext = nullptr;
  bool leaf = false;
  bool needs_grad = false;
  std::vector<Node*> inputs;
  std::function<void(Node&)> back;

  const SeqTensor& val() const { return ext ? *ext : own; }
  SeqTensor& mut() { return ext ? *ext : own; }
};

// Accumulation target for one input's gradient; null when the input does not
// require grad, so op backwards can skip the work.
inline double* grad_of(Node* in) {
  if (!in->needs_grad) return nullptr;
  in->mut().ensure_grad();
  return in->mut().grad.data();
}

inline int down_len(int n, int kernel, int stride, int padding) {
  if (n <= 0) return 0;
  const int num = n + 2 * padding - kernel;
  if (num < 0) return 0;
  return num / stride + 1;
}

}  // namespace acadet::detail
