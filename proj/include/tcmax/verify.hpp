#pragma once

// Executable property suite behind `tcmax verify`: exact identities,
// inequalities, loss-form equivalences and gradient checks.

#include <functional>
#include <string>
#include <vector>

#include "tcmax/losses.hpp"
#include "tcmax/model.hpp"

namespace tcmax {

struct CheckResult {
  int id = 0;
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  double seconds = 0.0;
  double time_limit = 0.0;  // 0 = none
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  /// Added to every log-sum-exp while the suite runs (fault injection).
  double lse_fault = 0.0;
};

/// Runs checks 1-10 in order, reporting each as it completes.
std::vector<CheckResult> run_verification(const VerifyOptions& options,
                                          const std::function<void(const CheckResult&)>& on_result = {});

/// "[PASS] 1 tc_dual_form residual=... tol=... time=...s"
std::string format_check(const CheckResult& result);

// Building blocks shared with the tests.

/// Max over components of |a - f| / max(|a|, |f|, floor) between the
/// analytic gradient and central differences with step `h`.
double gradient_check(MultimodalModel& model, const std::function<LossResult(const MultimodalModel&)>& loss,
                      double h = 1e-5, double floor = 1e-5);

/// |a - b| / max(|a|, |b|, 1).
double relative_difference(double a, double b);

/// Max relative difference over gradient components (same floor as above).
double gradient_difference(const GradientSet& a, const GradientSet& b);

}  // namespace tcmax
