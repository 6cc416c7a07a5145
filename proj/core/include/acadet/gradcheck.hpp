#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace acadet {

struct FdOptions {
  double h = 1e-5;
  double tol = 1e-4;
  int coords_per_tensor = 10;
  std::uint64_t seed = 99;
  // Forwarded to Graph::corrupt_backward_op; a nonempty value should make the
  // affected problems fail (negative control).
  std::string corrupt_op;
};

struct FdResult {
  std::string problem;
  int checked = 0;
  double max_rel_err = 0.0;
  bool passed = true;
  std::string worst;  // coordinate of the largest error
};

// Central-difference comparison of analytic gradients, per problem. Each
// problem builds a scalar from randomized inputs; the relative error at a
// coordinate is |a - fd| / max(|a|, |fd|, 1).
std::vector<std::string> gradcheck_problem_names();
FdResult run_gradcheck(const std::string& problem, const FdOptions& opt = {});
std::vector<FdResult> run_all_gradchecks(const FdOptions& opt = {});

}  // namespace acadet
