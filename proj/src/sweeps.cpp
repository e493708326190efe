#include "marginlab/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "marginlab/dataset.hpp"
#include "marginlab/numerics.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

namespace {

constexpr double kScaleChoices[] = {1.0, 10.0, 30.0};
constexpr double kLambdaChoices[] = {0.0, 0.1, 0.5, 1.0, 1.2};
constexpr double kTieGap = 1e-3;

struct TrialInput {
  std::vector<double> logits;
  int label = 0;
  LossConfig cfg;
};

// Shared draw recipe for both suites. Consumes a fixed number of counter
// positions per call only through `rng`, so per-trial derived seeds keep
// every trial independent of scheduling.
TrialInput draw_trial(RandomSource& rng, bool scale_all_logits) {
  TrialInput t;
  const int c = 2 + static_cast<int>(rng.next_index(99));
  t.label = static_cast<int>(rng.next_index(static_cast<std::uint64_t>(c)));
  std::vector<std::int64_t> counts(static_cast<std::size_t>(c));
  for (auto& n : counts) {
    n = 1 + static_cast<std::int64_t>(rng.next_index(9999));
  }
  const MarginMode mode =
      rng.next_index(2) == 0 ? MarginMode::kLiteral : MarginMode::kNormalized;
  t.cfg.margins = compute_margin_table(ClassCounts(std::move(counts)), 0.5, mode);
  t.cfg.scale = kScaleChoices[rng.next_index(3)];
  t.cfg.lambda = kLambdaChoices[rng.next_index(5)];
  t.cfg.scale_all_logits = scale_all_logits;
  t.logits.resize(static_cast<std::size_t>(c));
  for (auto& z : t.logits) z = rng.next_normal(0.0, 3.0);
  return t;
}

// Gap between the two largest incorrect logits; infinite when only one
// incorrect class exists.
double incorrect_runner_up_gap(std::span<const double> logits, int label) {
  double best = -std::numeric_limits<double>::infinity();
  double second = best;
  for (int c = 0; c < static_cast<int>(logits.size()); ++c) {
    if (c == label) continue;
    const double z = logits[static_cast<std::size_t>(c)];
    if (z > best) {
      second = best;
      best = z;
    } else if (z > second) {
      second = z;
    }
  }
  return std::isinf(second) ? std::numeric_limits<double>::infinity()
                            : best - second;
}

struct EquivalenceSlot {
  double ldam_gap = 0.0;
  double elm_gap = 0.0;
  double lmsce_gap = 0.0;
};

EquivalenceSlot equivalence_trial(std::uint64_t seed, int trial,
                                  bool scale_all_logits) {
  RandomSource rng(
      RandomSource::derive_seed(seed, static_cast<std::uint64_t>(trial)));
  TrialInput t = draw_trial(rng, scale_all_logits);
  EquivalenceSlot slot;
  slot.lmsce_gap = std::abs(lmsce_decompose(t.logits, t.label).loss -
                            ce_loss(t.logits, t.label).loss);
  slot.ldam_gap = std::abs(ldam_loss(t.logits, t.label, t.cfg).loss -
                           ldam_softplus(t.logits, t.label, t.cfg).loss);
  slot.elm_gap = std::abs(elm_loss(t.logits, t.label, t.cfg).loss -
                          elm_softplus(t.logits, t.label, t.cfg).loss);
  return slot;
}

}  // namespace

EquivalenceReport run_equivalence_sweep(int trials, std::uint64_t seed,
                                        bool scale_all_logits, ExecMode mode) {
  if (trials < 0) throw std::invalid_argument("equivalence sweep: trials < 0");
  std::vector<EquivalenceSlot> slots(static_cast<std::size_t>(trials));
  if (mode == ExecMode::kParallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < trials; ++i) {
      slots[static_cast<std::size_t>(i)] =
          equivalence_trial(seed, i, scale_all_logits);
    }
  } else {
    for (int i = 0; i < trials; ++i) {
      slots[static_cast<std::size_t>(i)] =
          equivalence_trial(seed, i, scale_all_logits);
    }
  }

  EquivalenceReport report;
  report.trials = trials;
  report.scale_all_logits = scale_all_logits;
  for (const EquivalenceSlot& s : slots) {
    report.max_ldam_gap = std::max(report.max_ldam_gap, s.ldam_gap);
    report.max_elm_gap = std::max(report.max_elm_gap, s.elm_gap);
    report.max_lmsce_gap = std::max(report.max_lmsce_gap, s.lmsce_gap);
  }
  return report;
}

namespace {

const char* variant_name(LossVariant v) {
  switch (v) {
    case LossVariant::kCrossEntropy:
      return "ce";
    case LossVariant::kLdam:
      return "ldam";
    case LossVariant::kElm:
      return "elm";
  }
  return "?";
}

struct AuditSlot {
  std::vector<double> worst;  // per variant
  int redraws = 0;
};

AuditSlot gradient_trial(std::uint64_t seed, int trial,
                         const std::vector<LossVariant>& variants, double h) {
  RandomSource rng(
      RandomSource::derive_seed(seed, static_cast<std::uint64_t>(trial)));
  TrialInput t = draw_trial(rng, true);
  AuditSlot slot;
  slot.worst.assign(variants.size(), 0.0);
  while (incorrect_runner_up_gap(t.logits, t.label) <= kTieGap &&
         slot.redraws < 1000) {
    for (auto& z : t.logits) z = rng.next_normal(0.0, 3.0);
    ++slot.redraws;
  }

  const std::size_t c = t.logits.size();
  std::vector<double> probe(c);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    t.cfg.variant = variants[v];
    const LossOutput analytic = evaluate_loss(t.logits, t.label, t.cfg);
    for (std::size_t j = 0; j < c; ++j) {
      probe = t.logits;
      probe[j] = t.logits[j] + h;
      const double up = evaluate_loss(probe, t.label, t.cfg).loss;
      probe[j] = t.logits[j] - h;
      const double down = evaluate_loss(probe, t.label, t.cfg).loss;
      const double fd = (up - down) / (2.0 * h);
      const double rel = std::abs(analytic.grad[j] - fd) /
                         std::max({1.0, std::abs(analytic.grad[j]), std::abs(fd)});
      slot.worst[v] = std::max(slot.worst[v], rel);
    }
  }
  return slot;
}

}  // namespace

GradientAuditReport run_gradient_audit(int trials, std::uint64_t seed, double h,
                                       const std::vector<LossVariant>& variants,
                                       ExecMode mode) {
  if (trials < 0) throw std::invalid_argument("gradient audit: trials < 0");
  if (!(h > 0.0)) throw std::invalid_argument("gradient audit: h must be > 0");
  if (variants.empty()) {
    throw std::invalid_argument("gradient audit: no variants");
  }

  std::vector<AuditSlot> slots(static_cast<std::size_t>(trials));
  if (mode == ExecMode::kParallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < trials; ++i) {
      slots[static_cast<std::size_t>(i)] =
          gradient_trial(seed, i, variants, h);
    }
  } else {
    for (int i = 0; i < trials; ++i) {
      slots[static_cast<std::size_t>(i)] =
          gradient_trial(seed, i, variants, h);
    }
  }

  GradientAuditReport report;
  report.trials = trials;
  report.worst_variant = variant_name(variants.front());
  for (const AuditSlot& s : slots) {
    report.redraws += s.redraws;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      if (s.worst[v] > report.worst_rel_error) {
        report.worst_rel_error = s.worst[v];
        report.worst_variant = variant_name(variants[v]);
      }
    }
  }
  return report;
}

double model_gradient_audit(std::uint64_t seed, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("model audit: h must be > 0");
  double worst = 0.0;

  for (int setup = 0; setup < 2; ++setup) {
    const bool cosine = setup == 0;
    const int hidden = cosine ? 4 : 0;
    const int dims = 3;
    const int classes = 3;
    const std::vector<int> labels = {0, 0, 0, 0, 1, 1, 1, 2, 2};
    const std::size_t n = labels.size();

    RandomSource data_rng(
        RandomSource::derive_seed(seed, 100 + static_cast<std::uint64_t>(setup)));
    Dataset data = make_dataset(
        dims, draw_normal(data_rng, n * dims, 0.0, 1.0), labels);

    RandomSource init_rng(
        RandomSource::derive_seed(seed, 200 + static_cast<std::uint64_t>(setup)));
    ModelParams model =
        init_model(dims, classes, hidden, cosine, init_rng);

    LossConfig loss;
    loss.variant = LossVariant::kElm;
    loss.scale = cosine ? 30.0 : 1.0;
    loss.lambda = 0.5;
    loss.margins =
        compute_margin_table(data.counts, 0.5, MarginMode::kNormalized);

    std::vector<std::size_t> indices(n);
    std::iota(indices.begin(), indices.end(), 0);
    std::vector<double> weights(n);
    for (std::size_t i = 0; i < n; ++i) {
      weights[i] = 0.5 + 0.5 * static_cast<double>(i % 4);
    }

    const BatchEval base =
        evaluate_batch(model, data, indices, weights, loss, ExecMode::kSerial);
    const auto probe = [&](std::vector<double>& param,
                           const std::vector<double>& grad) {
      for (std::size_t i = 0; i < param.size(); ++i) {
        const double orig = param[i];
        param[i] = orig + h;
        const double up =
            evaluate_batch(model, data, indices, weights, loss,
                           ExecMode::kSerial)
                .loss;
        param[i] = orig - h;
        const double down =
            evaluate_batch(model, data, indices, weights, loss,
                           ExecMode::kSerial)
                .loss;
        param[i] = orig;
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(grad[i] - fd) /
                           std::max({1.0, std::abs(grad[i]), std::abs(fd)});
        worst = std::max(worst, rel);
      }
    };
    probe(model.hidden_w, base.grads.hidden_w);
    probe(model.hidden_b, base.grads.hidden_b);
    probe(model.classifier_w, base.grads.classifier_w);
    probe(model.classifier_b, base.grads.classifier_b);
  }
  return worst;
}

}  // namespace marginlab
