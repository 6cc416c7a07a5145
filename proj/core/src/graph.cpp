#include "acadet/graph.hpp"

#include <stdexcept>

#include "graph_impl.hpp"

namespace acadet {

Graph::Graph() = default;
Graph::~Graph() = default;

const SeqTensor& Value::tensor() const {
  if (!n_) throw std::logic_error("Value::tensor: undefined value");
  return n_->val();
}

const std::vector<double>& Value::grad() const {
  if (!n_) throw std::logic_error("Value::grad: undefined value");
  return n_->val().grad;
}

detail::Node* Graph::unwrap(Value v, const char* op) {
  ACADET_CHECK(v.defined(), std::string(op) + ": undefined input value");
  return v.n_;
}

detail::Node* Graph::make(std::string op, SeqTensor value,
                          std::vector<detail::Node*> inputs,
                          std::function<void(detail::Node&)> back) {
  auto node = std::make_unique<detail::Node>();
  node->op = std::move(op);
  node->own = std::move(value);
  node->inputs = std::move(inputs);
  for (detail::Node* in : node->inputs)
    if (in->needs_grad) node->needs_grad = true;
  if (node->needs_grad) node->back = std::move(back);
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

detail::Node* Graph::leaf(SeqTensor x, bool requires_grad) {
  auto node = std::make_unique<detail::Node>();
  node->op = "leaf";
  node->own = std::move(x);
  node->own.requires_grad = requires_grad;
  node->leaf = true;
  node->needs_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return nodes_.back().get();
}

Value Graph::input(SeqTensor x, bool requires_grad) {
  return Value(leaf(std::move(x), requires_grad));
}

Value Graph::constant(SeqTensor x) { return Value(leaf(std::move(x), false)); }

Value Graph::param(SeqTensor& p) {
  auto it = params_.find(&p);
  if (it != params_.end()) return Value(it->second);
  auto node = std::make_unique<detail::Node>();
  node->op = "param";
  node->ext = &p;
  node->leaf = true;
  node->needs_grad = p.requires_grad;
  nodes_.push_back(std::move(node));
  params_[&p] = nodes_.back().get();
  return Value(nodes_.back().get());
}

Value Graph::zeros(int batch, int channels, int length,
                   const std::vector<int>& valid_lens) {
  SeqTensor z(batch, channels, length);
  z.set_valid_lens(valid_lens);
  return constant(std::move(z));
}

void Graph::backward(Value root) {
  if (ran_backward_)
    throw std::logic_error("Graph::backward: already ran on this graph");
  detail::Node* r = unwrap(root, "backward");
  ACADET_CHECK(r->val().numel() == 1, "backward: root must be a scalar");
  ran_backward_ = true;

  for (auto& n : nodes_)
    if (n->leaf && n->needs_grad) n->mut().ensure_grad();

  r->mut().ensure_grad();
  r->mut().grad[0] = 1.0;

  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.leaf || !n.needs_grad) continue;
    if (n.mut().grad.empty()) continue;  // not reachable from the root
    if (!corrupt_backward_op.empty() && n.op == corrupt_backward_op)
      for (double& g : n.mut().grad) g *= 1.01;
    n.back(n);
  }
}

}  // namespace acadet
