#include <cmath>
#include <cstring>
#include <map>

#include "acadet/param_store.hpp"
#include "doctest.h"

using acadet::AdamW;
using acadet::AdamWConfig;
using acadet::ParamStore;
using acadet::Rng;
using acadet::SeqTensor;

namespace {

// Fills grads with d/dw of sum((w - c)^2) for every parameter.
void quadratic_grads(ParamStore& store,
                     const std::map<std::string, std::vector<double>>& targets) {
  for (auto& [name, p] : store.all()) {
    p.ensure_grad();
    const auto& c = targets.at(name);
    for (std::size_t i = 0; i < p.data().size(); ++i)
      p.grad[i] = 2.0 * (p.data()[i] - c[i]);
  }
}

}  // namespace

TEST_CASE("parameter store bookkeeping") {
  ParamStore store;
  SeqTensor a(1, 2, 3);
  store.add("b", a);
  store.add("a", a);
  CHECK_THROWS_AS(store.add("a", a), std::invalid_argument);
  CHECK_THROWS_AS(store.get("missing"), std::invalid_argument);
  CHECK(store.count() == 2);
  CHECK(store.total_scalars() == 12);
  CHECK(store.get("a").requires_grad);

  // map iteration is name-sorted
  std::vector<std::string> names;
  for (const auto& [n, t] : store.all()) names.push_back(n);
  CHECK(names == std::vector<std::string>{"a", "b"});

  CHECK(store.get("a").grad.empty());
  store.zero_grads();
  CHECK(store.get("a").grad.size() == 6);
  store.get("a").grad[2] = 5.0;
  store.zero_grads();
  CHECK(store.get("a").grad[2] == 0.0);
}

TEST_CASE("AdamW drives a quadratic to its minimum") {
  ParamStore store;
  store.add("w", SeqTensor(1, 2, 3));
  std::map<std::string, std::vector<double>> targets;
  targets["w"] = {1.5, -0.7, 0.3, 0.0, -1.2, 0.9};

  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(store, cfg);
  for (int s = 1; s <= 600; ++s) {
    quadratic_grads(store, targets);
    opt.step(0.1 * std::pow(0.98, s));
  }
  CHECK(opt.steps_taken() == 600);
  for (std::size_t i = 0; i < 6; ++i)
    CHECK(std::abs(store.get("w").data()[i] - targets["w"][i]) < 1e-3);
}

TEST_CASE("first update magnitude is roughly the learning rate") {
  ParamStore store;
  store.add("w", SeqTensor(1, 1, 2));
  store.get("w").data() = {5.0, -5.0};
  store.zero_grads();
  store.get("w").grad = {0.04, -3000.0};  // scale should not matter

  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(store, cfg);
  opt.step(0.01);
  CHECK(store.get("w").data()[0] == doctest::Approx(5.0 - 0.01).epsilon(1e-4));
  CHECK(store.get("w").data()[1] == doctest::Approx(-5.0 + 0.01).epsilon(1e-4));
}

TEST_CASE("zero gradients without decay leave weights untouched") {
  ParamStore store;
  store.add("w", SeqTensor(1, 1, 4));
  store.get("w").data() = {1.0, -2.5, 0.0, 3e-7};
  const std::vector<double> before = store.get("w").data();
  store.zero_grads();

  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  AdamW opt(store, cfg);
  for (int s = 0; s < 10; ++s) opt.step(0.5);
  const std::vector<double>& after = store.get("w").data();
  CHECK(std::memcmp(before.data(), after.data(), 4 * sizeof(double)) == 0);
}

TEST_CASE("decoupled weight decay shrinks weights even with zero gradients") {
  ParamStore store;
  store.add("w", SeqTensor(1, 1, 2));
  store.get("w").data() = {2.0, -2.0};
  store.zero_grads();

  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt(store, cfg);
  opt.step(0.5);
  // w <- w - lr * wd * w
  CHECK(store.get("w").data()[0] == doctest::Approx(2.0 * 0.95));
  CHECK(store.get("w").data()[1] == doctest::Approx(-2.0 * 0.95));
  for (int s = 0; s < 200; ++s) opt.step(0.5);
  CHECK(std::abs(store.get("w").data()[0]) < 2e-4);
  CHECK(store.get("w").data()[0] > 0.0);  // decay never crosses zero
}

TEST_CASE("missing gradients and bad hyperparameters are rejected") {
  ParamStore store;
  store.add("w", SeqTensor(1, 1, 2));
  AdamW opt(store);
  CHECK_THROWS_AS(opt.step(0.1), std::logic_error);

  AdamWConfig bad;
  bad.beta1 = 1.0;
  CHECK_THROWS_AS(AdamW(store, bad), std::invalid_argument);
  bad = AdamWConfig{};
  bad.eps = 0.0;
  CHECK_THROWS_AS(AdamW(store, bad), std::invalid_argument);
}

TEST_CASE("identical runs produce bit-identical weights") {
  auto run = [](std::uint64_t seed) {
    ParamStore store;
    store.add("a", SeqTensor(1, 2, 2));
    store.add("b", SeqTensor(1, 1, 3));
    Rng rng(seed);
    for (auto& [n, p] : store.all())
      for (double& v : p.data()) v = rng.normal();
    std::map<std::string, std::vector<double>> targets;
    for (auto& [n, p] : store.all())
      targets[n] = std::vector<double>(p.data().size(), 0.25);
    AdamW opt(store);
    for (int s = 0; s < 25; ++s) {
      quadratic_grads(store, targets);
      opt.step(0.01);
    }
    std::vector<double> flat;
    for (auto& [n, p] : store.all())
      flat.insert(flat.end(), p.data().begin(), p.data().end());
    return flat;
  };
  const auto a = run(3), b = run(3), c = run(4);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.data(), c.data(), a.size() * sizeof(double)) != 0);
}
