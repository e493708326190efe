#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "marginlab/parallel.hpp"

namespace marginlab {

/// Per-class training-sample counts n_j. At least two classes, every
/// count >= 1.
class ClassCounts {
 public:
  explicit ClassCounts(std::vector<std::int64_t> counts);

  const std::vector<std::int64_t>& values() const { return counts_; }
  int num_classes() const { return static_cast<int>(counts_.size()); }
  std::int64_t at(int c) const { return counts_[static_cast<std::size_t>(c)]; }
  std::int64_t min_count() const;
  std::int64_t max_count() const;

 private:
  std::vector<std::int64_t> counts_;
};

enum class MarginMode {
  kLiteral,     // delta_j = M / n_j^(1/4)
  kNormalized,  // delta_j = M * (min_k n_k / n_j)^(1/4); rarest class gets M
};

/// Per-class margins, larger for rarer classes.
struct MarginTable {
  std::vector<double> deltas;
  MarginMode mode = MarginMode::kNormalized;
  double max_margin = 0.0;  // the tuning constant M

  bool empty() const { return deltas.empty(); }
  int num_classes() const { return static_cast<int>(deltas.size()); }
};

MarginTable compute_margin_table(const ClassCounts& counts, double max_margin,
                                 MarginMode mode);

enum class LossVariant { kCrossEntropy, kLdam, kElm };

/// Variant selector plus hyperparameters. `margins` may stay empty for
/// plain cross entropy; the margin variants require it.
///
/// scale_all_logits picks the scaling convention: true applies s to every
/// logit (u_k = s*z_k for k != y), which makes the cross-entropy and
/// softplus forms algebraically identical and is the default everywhere.
/// false leaves non-target logits unscaled for side-by-side comparison of
/// the two conventions; the forms then genuinely disagree for s != 1.
struct LossConfig {
  LossVariant variant = LossVariant::kCrossEntropy;
  double scale = 30.0;            // s
  double lambda = 0.5;            // ELM only
  bool use_target_margin = true;  // false drops delta_y from ELM
  bool scale_all_logits = true;
  MarginTable margins;
};

/// Loss value, analytic gradient w.r.t. the logits, and the decomposition
/// diagnostics. c_star is the largest incorrect-class logit (ties broken
/// toward the smallest index), rho_hat the log-sum-exp of the non-target
/// logits relative to z_{c*}, effective_margin the total shift applied to
/// the target logit (s*delta_y - s*lambda*delta_{c*} for ELM). Under the
/// all-logits-scaled convention the gradient components sum to zero.
struct LossOutput {
  double loss = 0.0;
  std::vector<double> grad;
  int c_star = -1;
  double rho_hat = 0.0;
  double effective_margin = 0.0;
};

/// Softmax cross entropy: log[1 + sum_{c != y} e^(z_c - z_y)].
LossOutput ce_loss(std::span<const double> logits, int label);

/// Cross entropy rewritten as softplus(z_{c*} - z_y + rho_hat). Equals
/// ce_loss to within rounding; exposes the margin-view diagnostics.
/// Needs at least two classes.
LossOutput lmsce_decompose(std::span<const double> logits, int label);

/// Margin loss with the target logit shifted by -delta_y, in cross-entropy
/// form. cfg.margins must cover every class.
LossOutput ldam_loss(std::span<const double> logits, int label,
                     const LossConfig& cfg);

/// Same loss evaluated through the softplus decomposition:
/// softplus(s(z_{c*} - z_y) + s*delta_y + rho_hat).
LossOutput ldam_softplus(std::span<const double> logits, int label,
                         const LossConfig& cfg);

/// Enlarged-margin loss: the target logit is shifted by
/// -delta_y + lambda*delta_{c*}, so the demanded gap to the hardest
/// competitor grows with that competitor's own margin. Cross-entropy form.
/// The c* selection is treated as piecewise constant in the gradient.
LossOutput elm_loss(std::span<const double> logits, int label,
                    const LossConfig& cfg);

/// ELM through the softplus decomposition:
/// softplus(s(z_{c*} - z_y) + s*delta_y - s*lambda*delta_{c*} + rho_hat).
LossOutput elm_softplus(std::span<const double> logits, int label,
                        const LossConfig& cfg);

/// Dispatch on cfg.variant (cross-entropy forms).
LossOutput evaluate_loss(std::span<const double> logits, int label,
                         const LossConfig& cfg);

/// Weighted batch reduction: loss = sum(w_i * L_i) / sum(w_i). Per-sample
/// outputs carry the raw loss L_i but their gradients are scaled by
/// w_i / sum(w_i), so summing them gives the gradient of `loss`.
struct BatchLossResult {
  double loss = 0.0;
  std::vector<LossOutput> per_sample;
};

BatchLossResult batch_loss(const std::vector<std::vector<double>>& logits,
                           std::span<const int> labels,
                           std::span<const double> weights,
                           const LossConfig& cfg,
                           ExecMode mode = ExecMode::kParallel);

}  // namespace marginlab
