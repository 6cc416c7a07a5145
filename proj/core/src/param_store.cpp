#include "acadet/param_store.hpp"

#include <cmath>
#include <stdexcept>

namespace acadet {

SeqTensor& ParamStore::add(const std::string& name, SeqTensor init) {
  ACADET_CHECK(!name.empty(), "ParamStore::add: empty name");
  ACADET_CHECK(params_.count(name) == 0,
               "ParamStore::add: duplicate parameter '" + name + "'");
  init.requires_grad = true;
  auto [it, ok] = params_.emplace(name, std::move(init));
  (void)ok;
  return it->second;
}

SeqTensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("ParamStore::get: no parameter '" + name + "'");
  return it->second;
}

const SeqTensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end())
    throw std::invalid_argument("ParamStore::get: no parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) {
    p.ensure_grad();
    p.zero_grad();
  }
}

std::int64_t ParamStore::total_scalars() const {
  std::int64_t n = 0;
  for (const auto& [name, p] : params_) n += p.numel();
  return n;
}

AdamW::AdamW(ParamStore& store, AdamWConfig cfg) : store_(&store), cfg_(cfg) {
  ACADET_CHECK(cfg.beta1 >= 0 && cfg.beta1 < 1 && cfg.beta2 >= 0 &&
                   cfg.beta2 < 1 && cfg.eps > 0 && cfg.weight_decay >= 0,
               "AdamW: bad hyperparameters");
}

void AdamW::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : store_->all()) {
    if (p.grad.empty())
      throw std::logic_error("AdamW::step: parameter '" + name +
                             "' has no gradient; run backward first");
    Moments& mo = state_[name];
    if (mo.m.empty()) {
      mo.m.assign(p.data().size(), 0.0);
      mo.v.assign(p.data().size(), 0.0);
    }
    double* w = p.data().data();
    const double* g = p.grad.data();
    for (std::size_t i = 0; i < p.data().size(); ++i) {
      mo.m[i] = cfg_.beta1 * mo.m[i] + (1.0 - cfg_.beta1) * g[i];
      mo.v[i] = cfg_.beta2 * mo.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                    cfg_.weight_decay * w[i]);
    }
  }
}

}  // namespace acadet
