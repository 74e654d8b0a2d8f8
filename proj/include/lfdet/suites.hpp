#pragma once

// Finite-difference gradient suites shared by the command line and tests.

#include <cstdint>
#include <string>
#include <vector>

#include "lfdet/gradcheck.hpp"

namespace lfdet {

struct SuiteOptions {
  double eps = 1e-5;
  std::uint64_t seed = 0;
  /// Added to the first element of every analytic gradient. Test hook for
  /// confirming that a wrong gradient is reported.
  double perturb = 0.0;
};

struct SuiteReport {
  std::string scope;
  double tolerance = 0.0;
  std::vector<GroupError> groups;

  double max_error() const;
  bool passed() const;
};

/// Every differentiable tape op on small random inputs; tolerance 1e-6.
SuiteReport primitive_suite(const SuiteOptions& opt = {});
/// One LFSa layer, C=4, H=W=8, input plus every parameter group; tolerance 1e-6.
SuiteReport lfsa_suite(const SuiteOptions& opt = {});
/// Miniature toy detector loss under a fixed assignment; tolerance 1e-5.
SuiteReport end2end_suite(const SuiteOptions& opt = {});

}  // namespace lfdet
