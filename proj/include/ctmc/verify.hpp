#pragma once

// The invariant battery behind `ctmc_lab verify`, and the contraction suite.
// Every check is named "<module>.<invariant>" and reports the measured
// quantity next to the threshold it was held to. Failures are rows, never
// exceptions.

#include "ctmc/results.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ctmc {

struct CheckResult {
  std::string module;
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  /// Fewer seeds and chains for the sampling-based checks.
  bool fast = false;
  int threads = 1;
  std::uint64_t seed = 1;
};

struct NamedCheck {
  std::string module;
  std::string name;
  std::function<CheckResult(const VerifyOptions&)> run;
};

/// Every check, in module order.
const std::vector<NamedCheck>& verify_checks();

/// Runs the checks whose "<module>.<name>" starts with `prefix` (all when empty).
std::vector<CheckResult> run_verify(const VerifyOptions& options, const std::string& prefix = "");

/// One row per check: sampler = module, metric = name, flags "pass;threshold=..".
ResultTable verify_table(const std::vector<CheckResult>& results, std::uint64_t seed);

/// Contraction checks over S in {2, 8, 15} and D in {1, 2, 3}. Metric rows carry
/// "pass" or "fail" in their flags next to S, D and r.
ResultTable run_contraction_suite(std::uint64_t seed = 1, bool fast = false);

}  // namespace ctmc
