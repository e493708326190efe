#include <doctest.h>

#include <stdexcept>
#include <vector>

#include "marginlab/sweeps.hpp"

using namespace marginlab;

TEST_CASE("equivalence sweep under the shared scaling convention") {
  const EquivalenceReport report = run_equivalence_sweep(2000, 42);
  CHECK(report.trials == 2000);
  CHECK(report.scale_all_logits);
  CHECK(report.max_ldam_gap <= kFormGapBound);
  CHECK(report.max_elm_gap <= kFormGapBound);
  CHECK(report.max_lmsce_gap <= kDecomposeGapBound);
  CHECK(report.passes());
}

TEST_CASE("equivalence sweep is deterministic across execution modes") {
  const EquivalenceReport serial =
      run_equivalence_sweep(500, 7, true, ExecMode::kSerial);
  const EquivalenceReport parallel =
      run_equivalence_sweep(500, 7, true, ExecMode::kParallel);
  CHECK(serial.max_ldam_gap == parallel.max_ldam_gap);
  CHECK(serial.max_elm_gap == parallel.max_elm_gap);
  CHECK(serial.max_lmsce_gap == parallel.max_lmsce_gap);
}

TEST_CASE("the raw-logit convention genuinely diverges") {
  // with non-target logits left unscaled the two forms are different
  // functions, so the sweep should observe a visible gap
  const EquivalenceReport report = run_equivalence_sweep(2000, 42, false);
  CHECK_FALSE(report.scale_all_logits);
  CHECK(report.max_ldam_gap > 1e-3);
  CHECK(report.max_elm_gap > 1e-3);
  // plain cross entropy ignores s, so its decomposition still agrees
  CHECK(report.max_lmsce_gap <= kDecomposeGapBound);
}

TEST_CASE("equivalence sweep rejects negative trial counts") {
  CHECK_THROWS_AS(run_equivalence_sweep(-1, 42), std::invalid_argument);
}

TEST_CASE("gradient audit stays within the finite-difference bound") {
  const std::vector<LossVariant> variants{
      LossVariant::kCrossEntropy, LossVariant::kLdam, LossVariant::kElm};
  const GradientAuditReport report =
      run_gradient_audit(500, 42, 1e-5, variants);
  CHECK(report.trials == 500);
  CHECK(report.worst_rel_error <= kGradientRelBound);
  CHECK(report.passes());
  CHECK_FALSE(report.worst_variant.empty());
}

TEST_CASE("gradient audit is deterministic across execution modes") {
  const std::vector<LossVariant> variants{LossVariant::kElm};
  const GradientAuditReport serial =
      run_gradient_audit(200, 9, 1e-5, variants, ExecMode::kSerial);
  const GradientAuditReport parallel =
      run_gradient_audit(200, 9, 1e-5, variants, ExecMode::kParallel);
  CHECK(serial.worst_rel_error == parallel.worst_rel_error);
  CHECK(serial.redraws == parallel.redraws);
}

TEST_CASE("gradient audit validates its arguments") {
  const std::vector<LossVariant> variants{LossVariant::kCrossEntropy};
  CHECK_THROWS_AS(run_gradient_audit(-1, 42, 1e-5, variants),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_gradient_audit(10, 42, 0.0, variants),
                  std::invalid_argument);
  CHECK_THROWS_AS(run_gradient_audit(10, 42, 1e-5, {}),
                  std::invalid_argument);
}

TEST_CASE("end-to-end model gradients match finite differences") {
  CHECK(model_gradient_audit(42, 1e-5) <= 1e-3);
}

TEST_CASE("model gradient audit rejects a nonpositive step") {
  CHECK_THROWS_AS(model_gradient_audit(42, 0.0), std::invalid_argument);
}
