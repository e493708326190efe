#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "marginlab/losses.hpp"
#include "marginlab/parallel.hpp"

namespace marginlab {

/// Bounds the randomized suites assert against: the two algebraic forms of
/// each margin loss must agree to kFormGapBound, the softplus rewrite of
/// plain cross entropy to kDecomposeGapBound, and analytic gradients must
/// match central finite differences to kGradientRelBound.
inline constexpr double kFormGapBound = 1e-9;
inline constexpr double kDecomposeGapBound = 1e-10;
inline constexpr double kGradientRelBound = 1e-4;

/// Worst absolute disagreement between the cross-entropy and softplus forms
/// over randomized draws: C in {2..100}, logits ~ N(0, 3^2), s in
/// {1, 10, 30}, lambda in {0, 0.1, 0.5, 1.0, 1.2}, margins from random
/// counts in both margin modes.
struct EquivalenceReport {
  int trials = 0;
  bool scale_all_logits = true;
  double max_ldam_gap = 0.0;   // |ldam_loss - ldam_softplus|
  double max_elm_gap = 0.0;    // |elm_loss - elm_softplus|
  double max_lmsce_gap = 0.0;  // |lmsce_decompose - ce_loss|

  bool passes() const {
    return max_ldam_gap <= kFormGapBound && max_elm_gap <= kFormGapBound &&
           max_lmsce_gap <= kDecomposeGapBound;
  }
};

/// Deterministic in `seed` regardless of mode or thread count. With
/// scale_all_logits = false the report quantifies how far the two
/// conventions drift apart rather than certifying a bound.
EquivalenceReport run_equivalence_sweep(int trials, std::uint64_t seed,
                                        bool scale_all_logits = true,
                                        ExecMode mode = ExecMode::kParallel);

/// Central finite-difference audit of the analytic logit gradients. Inputs
/// whose top two incorrect logits sit within 1e-3 of each other are
/// redrawn (the c* selection is discontinuous there); `redraws` counts the
/// replacements.
struct GradientAuditReport {
  int trials = 0;
  int redraws = 0;
  double worst_rel_error = 0.0;
  std::string worst_variant;

  bool passes() const { return worst_rel_error <= kGradientRelBound; }
};

GradientAuditReport run_gradient_audit(int trials, std::uint64_t seed,
                                       double h,
                                       const std::vector<LossVariant>& variants,
                                       ExecMode mode = ExecMode::kParallel);

/// Perturbs every parameter of two tiny models (a cosine classifier with a
/// hidden layer, and a plain linear one with bias) and compares the batch
/// loss differences against the backpropagated gradients. Returns the worst
/// relative error; the full training path is healthy when it stays at or
/// below 1e-3 for h = 1e-5.
double model_gradient_audit(std::uint64_t seed, double h);

}  // namespace marginlab
