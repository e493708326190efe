#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/evaluation.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/numerics.hpp"
#include "marginlab/reweighting.hpp"

namespace marginlab {

/// Linear or one-hidden-layer classifier. The hidden layer (when
/// hidden_dim > 0) uses softplus activations so the model is smooth
/// everywhere. In cosine mode the logits are inner products of the
/// unit-normalized penultimate feature and unit-normalized classifier rows
/// (values in [-1, 1]); any scaling by s happens inside the loss, never
/// here. Cosine mode has no classifier bias and rows are renormalized
/// after every update.
struct ModelParams {
  int input_dim = 0;
  int hidden_dim = 0;  // 0 = purely linear
  int num_classes = 0;
  bool cosine = false;
  std::vector<double> hidden_w;      // hidden_dim x input_dim
  std::vector<double> hidden_b;      // hidden_dim
  std::vector<double> classifier_w;  // num_classes x feature_dim
  std::vector<double> classifier_b;  // num_classes; empty in cosine mode

  int feature_dim() const { return hidden_dim > 0 ? hidden_dim : input_dim; }
};

/// Parameter gradients, same shapes as ModelParams.
struct Gradients {
  std::vector<double> hidden_w;
  std::vector<double> hidden_b;
  std::vector<double> classifier_w;
  std::vector<double> classifier_b;
};

/// Momentum buffers, same shapes as ModelParams.
struct SgdState {
  std::vector<double> hidden_w;
  std::vector<double> hidden_b;
  std::vector<double> classifier_w;
  std::vector<double> classifier_b;
};

SgdState make_sgd_state(const ModelParams& model);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  int warmup_epochs = 5;
  std::vector<int> milestones = {160, 180};
  double decay_factor = 0.01;
  std::uint64_t seed = 1;
  int hidden_dim = 0;
  bool cosine = true;
  LossConfig loss;
  ReweightConfig reweight;
};

/// Throws std::invalid_argument on any malformed field.
void validate_train_config(const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;  // weighted mean over the epoch's samples
  std::vector<double> per_class_accuracy;
  std::string lr_phase;      // "warmup", "base", or "decay<k>"
  std::string weight_phase;  // "uniform" or "class-balanced"
};

struct RunReport {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  EvalSummary final_eval;
};

nlohmann::ordered_json run_report_to_json(const RunReport& report);

/// Normal init scaled by 1/sqrt(fan_in); biases zero; deterministic per
/// rng stream. Cosine rows come out unit-normalized.
ModelParams init_model(int input_dim, int num_classes, int hidden_dim,
                       bool cosine, RandomSource& rng);

std::vector<double> penultimate(const ModelParams& model,
                                std::span<const double> x);
std::vector<double> forward(const ModelParams& model,
                            std::span<const double> x);

/// Logits for every row of `data`; the parallel mode fills per-sample slots
/// so both modes agree bitwise.
std::vector<std::vector<double>> model_logits(
    const ModelParams& model, const Dataset& data,
    ExecMode mode = ExecMode::kParallel);

/// Piecewise schedule: linear warmup to base_lr, then decay_factor applied
/// once per milestone passed. Rejects epochs outside [0, cfg.epochs).
double lr_at(int epoch, const TrainConfig& cfg);

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v.
/// Renormalizes classifier rows afterwards in cosine mode.
void sgd_step(ModelParams& model, const Gradients& grads, SgdState& state,
              double lr, double momentum, double weight_decay);

/// Weighted mean loss and parameter gradients of one batch: forward every
/// sample (parallel slot fill), chain the loss gradients through the
/// classifier (and cosine normalization / hidden layer when present) in
/// fixed sample order.
struct BatchEval {
  double loss = 0.0;
  Gradients grads;
};

BatchEval evaluate_batch(const ModelParams& model, const Dataset& data,
                         std::span<const std::size_t> indices,
                         std::span<const double> weights, const LossConfig& cfg,
                         ExecMode mode = ExecMode::kParallel);

/// One pass over seeded-shuffled mini-batches with DRW sample weights.
EpochRecord train_epoch(ModelParams& model, const Dataset& data, int epoch,
                        const TrainConfig& cfg, SgdState& state,
                        ExecMode mode = ExecMode::kParallel);

/// Full deterministic run. The report's final evaluation uses `test` when
/// given, otherwise the training set; group metrics always split on the
/// training counts.
std::pair<ModelParams, RunReport> train_run(
    const Dataset& train, const Dataset* test, const TrainConfig& cfg,
    ExecMode mode = ExecMode::kParallel);

/// Final-model export/import. Training counts ride along so a later
/// evaluation can reproduce the frequent/rare split and margins.
void save_model(const ModelParams& model, const ClassCounts& train_counts,
                const std::filesystem::path& path);
std::pair<ModelParams, ClassCounts> load_model(
    const std::filesystem::path& path);

}  // namespace marginlab
