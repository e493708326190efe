#include "marginlab/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "marginlab/numerics.hpp"

namespace marginlab {

ClassCounts::ClassCounts(std::vector<std::int64_t> counts)
    : counts_(std::move(counts)) {
  if (counts_.size() < 2) {
    throw std::invalid_argument("ClassCounts: need at least two classes");
  }
  for (std::size_t c = 0; c < counts_.size(); ++c) {
    if (counts_[c] < 1) {
      throw std::invalid_argument("ClassCounts: class " + std::to_string(c) +
                                  " has count < 1");
    }
  }
}

std::int64_t ClassCounts::min_count() const {
  return *std::min_element(counts_.begin(), counts_.end());
}

std::int64_t ClassCounts::max_count() const {
  return *std::max_element(counts_.begin(), counts_.end());
}

MarginTable compute_margin_table(const ClassCounts& counts, double max_margin,
                                 MarginMode mode) {
  if (!(max_margin > 0.0)) {
    throw std::invalid_argument("compute_margin_table: M must be positive");
  }
  MarginTable table;
  table.mode = mode;
  table.max_margin = max_margin;
  table.deltas.reserve(counts.values().size());
  const double min_count = static_cast<double>(counts.min_count());
  for (std::int64_t n : counts.values()) {
    const double nd = static_cast<double>(n);
    const double delta = mode == MarginMode::kLiteral
                             ? max_margin / std::pow(nd, 0.25)
                             : max_margin * std::pow(min_count / nd, 0.25);
    table.deltas.push_back(delta);
  }
  return table;
}

namespace {

void check_logits(std::span<const double> logits, int label) {
  if (logits.empty()) {
    throw std::invalid_argument("loss: empty logit vector");
  }
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw std::invalid_argument("loss: label out of range");
  }
  require_finite(logits, "loss logits");
}

void check_margin_config(std::span<const double> logits,
                         const LossConfig& cfg) {
  if (cfg.margins.empty()) {
    throw std::invalid_argument("loss: margin table missing");
  }
  if (cfg.margins.deltas.size() != logits.size()) {
    throw std::invalid_argument("loss: margin table size mismatch");
  }
  if (!(cfg.scale > 0.0)) {
    throw std::invalid_argument("loss: scale s must be positive");
  }
  if (cfg.lambda < 0.0) {
    throw std::invalid_argument("loss: lambda must be nonnegative");
  }
}

// Largest logit among incorrect classes; smallest index wins ties.
int incorrect_argmax(std::span<const double> logits, int label) {
  int best = -1;
  for (int c = 0; c < static_cast<int>(logits.size()); ++c) {
    if (c == label) continue;
    if (best < 0 || logits[c] > logits[best]) best = c;
  }
  return best;
}

// log sum_{c != y} e^(s*(z_c - z_{c*}))
double bias_margin(std::span<const double> logits, int label, int c_star,
                   double s) {
  double acc = 0.0;
  for (int c = 0; c < static_cast<int>(logits.size()); ++c) {
    if (c == label) continue;
    acc += std::exp(s * (logits[c] - logits[c_star]));
  }
  return std::log(acc);
}

// Shared cross-entropy-form core. The adjusted target logit is
// u_y = s*(z_y - target_shift); non-target logits are scaled by s or left
// raw depending on the convention. Gradient is d(loss)/dz.
LossOutput margin_ce_form(std::span<const double> logits, int label,
                          double target_shift, double s,
                          bool scale_all_logits) {
  const int num_classes = static_cast<int>(logits.size());
  std::vector<double> adjusted(logits.size());
  for (int c = 0; c < num_classes; ++c) {
    adjusted[c] = c == label ? s * (logits[c] - target_shift)
                             : (scale_all_logits ? s * logits[c] : logits[c]);
  }
  LossOutput out;
  out.loss = log_sum_exp(adjusted) - adjusted[label];
  out.grad = stable_softmax(adjusted);
  for (int c = 0; c < num_classes; ++c) {
    const double du_dz = (c == label || scale_all_logits) ? s : 1.0;
    out.grad[c] *= du_dz;
  }
  out.grad[label] -= s;
  return out;
}

}  // namespace

LossOutput ce_loss(std::span<const double> logits, int label) {
  check_logits(logits, label);
  LossOutput out = margin_ce_form(logits, label, 0.0, 1.0, true);
  if (logits.size() >= 2) {
    out.c_star = incorrect_argmax(logits, label);
    out.rho_hat = bias_margin(logits, label, out.c_star, 1.0);
  }
  return out;
}

LossOutput lmsce_decompose(std::span<const double> logits, int label) {
  check_logits(logits, label);
  if (logits.size() < 2) {
    throw std::invalid_argument("lmsce_decompose: need at least two classes");
  }
  LossOutput out;
  out.c_star = incorrect_argmax(logits, label);
  out.rho_hat = bias_margin(logits, label, out.c_star, 1.0);
  out.loss = softplus(logits[out.c_star] - logits[label] + out.rho_hat);
  out.grad = stable_softmax(logits);
  out.grad[label] -= 1.0;
  return out;
}

LossOutput ldam_loss(std::span<const double> logits, int label,
                     const LossConfig& cfg) {
  check_logits(logits, label);
  check_margin_config(logits, cfg);
  const double delta_y = cfg.margins.deltas[static_cast<std::size_t>(label)];
  LossOutput out = margin_ce_form(logits, label, delta_y, cfg.scale,
                                  cfg.scale_all_logits);
  out.effective_margin = cfg.scale * delta_y;
  if (logits.size() >= 2) {
    out.c_star = incorrect_argmax(logits, label);
    out.rho_hat = bias_margin(logits, label, out.c_star, cfg.scale);
  }
  return out;
}

LossOutput ldam_softplus(std::span<const double> logits, int label,
                         const LossConfig& cfg) {
  check_logits(logits, label);
  check_margin_config(logits, cfg);
  if (logits.size() < 2) {
    throw std::invalid_argument("ldam_softplus: need at least two classes");
  }
  const double s = cfg.scale;
  const double delta_y = cfg.margins.deltas[static_cast<std::size_t>(label)];
  LossOutput out;
  out.c_star = incorrect_argmax(logits, label);
  out.rho_hat = bias_margin(logits, label, out.c_star, s);
  out.effective_margin = s * delta_y;
  out.loss = softplus(s * (logits[out.c_star] - logits[label]) + s * delta_y +
                      out.rho_hat);
  out.grad = margin_ce_form(logits, label, delta_y, s, cfg.scale_all_logits)
                 .grad;
  return out;
}

namespace {

// Total shift applied to the target logit by ELM.
double elm_target_shift(const LossConfig& cfg, int label, int c_star) {
  const double delta_y =
      cfg.use_target_margin
          ? cfg.margins.deltas[static_cast<std::size_t>(label)]
          : 0.0;
  const double delta_cstar =
      cfg.margins.deltas[static_cast<std::size_t>(c_star)];
  return delta_y - cfg.lambda * delta_cstar;
}

}  // namespace

LossOutput elm_loss(std::span<const double> logits, int label,
                    const LossConfig& cfg) {
  check_logits(logits, label);
  check_margin_config(logits, cfg);
  if (logits.size() < 2) {
    throw std::invalid_argument("elm_loss: need at least two classes");
  }
  const int c_star = incorrect_argmax(logits, label);
  const double shift = elm_target_shift(cfg, label, c_star);
  LossOutput out = margin_ce_form(logits, label, shift, cfg.scale,
                                  cfg.scale_all_logits);
  out.c_star = c_star;
  out.rho_hat = bias_margin(logits, label, c_star, cfg.scale);
  out.effective_margin = cfg.scale * shift;
  return out;
}

LossOutput elm_softplus(std::span<const double> logits, int label,
                        const LossConfig& cfg) {
  check_logits(logits, label);
  check_margin_config(logits, cfg);
  if (logits.size() < 2) {
    throw std::invalid_argument("elm_softplus: need at least two classes");
  }
  const double s = cfg.scale;
  const int c_star = incorrect_argmax(logits, label);
  const double shift = elm_target_shift(cfg, label, c_star);
  LossOutput out;
  out.c_star = c_star;
  out.rho_hat = bias_margin(logits, label, c_star, s);
  out.effective_margin = s * shift;
  out.loss = softplus(s * (logits[c_star] - logits[label]) + s * shift +
                      out.rho_hat);
  out.grad =
      margin_ce_form(logits, label, shift, s, cfg.scale_all_logits).grad;
  return out;
}

LossOutput evaluate_loss(std::span<const double> logits, int label,
                         const LossConfig& cfg) {
  switch (cfg.variant) {
    case LossVariant::kCrossEntropy:
      return ce_loss(logits, label);
    case LossVariant::kLdam:
      return ldam_loss(logits, label, cfg);
    case LossVariant::kElm:
      return elm_loss(logits, label, cfg);
  }
  throw std::logic_error("evaluate_loss: unknown variant");
}

BatchLossResult batch_loss(const std::vector<std::vector<double>>& logits,
                           std::span<const int> labels,
                           std::span<const double> weights,
                           const LossConfig& cfg, ExecMode mode) {
  const std::size_t n = logits.size();
  if (labels.size() != n || weights.size() != n) {
    throw std::invalid_argument("batch_loss: length mismatch");
  }
  if (n == 0) {
    throw std::invalid_argument("batch_loss: empty batch");
  }
  double weight_sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw std::invalid_argument("batch_loss: negative weight");
    weight_sum += w;
  }
  if (weight_sum <= 0.0) {
    throw std::invalid_argument("batch_loss: weights sum to zero");
  }

  BatchLossResult result;
  result.per_sample.resize(n);
  if (mode == ExecMode::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      result.per_sample[i] = evaluate_loss(logits[i], labels[i], cfg);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      result.per_sample[i] = evaluate_loss(logits[i], labels[i], cfg);
    }
  }
  // fixed-order reduction keeps both modes bit-identical
  for (std::size_t i = 0; i < n; ++i) {
    const double scale = weights[i] / weight_sum;
    result.loss += scale * result.per_sample[i].loss;
    for (double& g : result.per_sample[i].grad) g *= scale;
  }
  return result;
}

}  // namespace marginlab
