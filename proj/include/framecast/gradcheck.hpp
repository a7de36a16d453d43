#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace framecast {

struct GradCheckOptions {
  int instances = 20;       // random instances per operation
  double tolerance = 1e-4;  // max relative error allowed
  uint64_t seed = 12345;
  std::string inject_fault;  // test hook: name of an op given a sign-flipped gradient
};

struct GradCheckResult {
  std::string op;
  int instances = 0;
  double max_rel_err = 0.0;
  bool pass = false;
};

/// Central finite differences (64-bit, step 1e-5 scaled by |x|+1) against the
/// taped gradients, for every differentiable operation and the stage losses.
std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& opts = {});

/// Names covered by the suite, one entry per differentiable operation.
std::vector<std::string> gradcheck_coverage();

bool all_passed(const std::vector<GradCheckResult>& results);

std::string gradcheck_report(const std::vector<GradCheckResult>& results);

}  // namespace framecast
