#include "marginlab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace marginlab {

namespace {

constexpr double kNormFloor = 1e-12;

double dot(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void renormalize_classifier_rows(ModelParams& model) {
  const std::size_t f = static_cast<std::size_t>(model.feature_dim());
  for (int c = 0; c < model.num_classes; ++c) {
    double* row = model.classifier_w.data() + static_cast<std::size_t>(c) * f;
    const double n = std::max(norm({row, f}), kNormFloor);
    for (std::size_t i = 0; i < f; ++i) row[i] /= n;
  }
}

}  // namespace

SgdState make_sgd_state(const ModelParams& model) {
  SgdState state;
  state.hidden_w.assign(model.hidden_w.size(), 0.0);
  state.hidden_b.assign(model.hidden_b.size(), 0.0);
  state.classifier_w.assign(model.classifier_w.size(), 0.0);
  state.classifier_b.assign(model.classifier_b.size(), 0.0);
  return state;
}

ModelParams init_model(int input_dim, int num_classes, int hidden_dim,
                       bool cosine, RandomSource& rng) {
  if (input_dim < 1 || num_classes < 1 || hidden_dim < 0) {
    throw std::invalid_argument("init_model: invalid dimensions");
  }
  ModelParams model;
  model.input_dim = input_dim;
  model.hidden_dim = hidden_dim;
  model.num_classes = num_classes;
  model.cosine = cosine;
  if (hidden_dim > 0) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
    model.hidden_w = draw_normal(
        rng, static_cast<std::size_t>(hidden_dim) * input_dim, 0.0, scale);
    model.hidden_b.assign(static_cast<std::size_t>(hidden_dim), 0.0);
  }
  const int f = model.feature_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(f));
  model.classifier_w = draw_normal(
      rng, static_cast<std::size_t>(num_classes) * f, 0.0, scale);
  if (cosine) {
    renormalize_classifier_rows(model);
  } else {
    model.classifier_b.assign(static_cast<std::size_t>(num_classes), 0.0);
  }
  return model;
}

std::vector<double> penultimate(const ModelParams& model,
                                std::span<const double> x) {
  if (static_cast<int>(x.size()) != model.input_dim) {
    throw std::invalid_argument("forward: feature dimension mismatch");
  }
  if (model.hidden_dim == 0) {
    return std::vector<double>(x.begin(), x.end());
  }
  const std::size_t d = static_cast<std::size_t>(model.input_dim);
  std::vector<double> h(static_cast<std::size_t>(model.hidden_dim));
  for (int j = 0; j < model.hidden_dim; ++j) {
    const double* row =
        model.hidden_w.data() + static_cast<std::size_t>(j) * d;
    h[static_cast<std::size_t>(j)] =
        softplus(dot({row, d}, x) + model.hidden_b[static_cast<std::size_t>(j)]);
  }
  return h;
}

namespace {

std::vector<double> classifier_logits(const ModelParams& model,
                                      std::span<const double> feature) {
  const std::size_t f = static_cast<std::size_t>(model.feature_dim());
  std::vector<double> z(static_cast<std::size_t>(model.num_classes));
  if (model.cosine) {
    const double nx = std::max(norm(feature), kNormFloor);
    for (int c = 0; c < model.num_classes; ++c) {
      const double* row =
          model.classifier_w.data() + static_cast<std::size_t>(c) * f;
      const double nw = std::max(norm({row, f}), kNormFloor);
      z[static_cast<std::size_t>(c)] = dot({row, f}, feature) / (nw * nx);
    }
  } else {
    for (int c = 0; c < model.num_classes; ++c) {
      const double* row =
          model.classifier_w.data() + static_cast<std::size_t>(c) * f;
      z[static_cast<std::size_t>(c)] =
          dot({row, f}, feature) + model.classifier_b[static_cast<std::size_t>(c)];
    }
  }
  return z;
}

}  // namespace

std::vector<double> forward(const ModelParams& model,
                            std::span<const double> x) {
  return classifier_logits(model, penultimate(model, x));
}

std::vector<std::vector<double>> model_logits(const ModelParams& model,
                                              const Dataset& data,
                                              ExecMode mode) {
  std::vector<std::vector<double>> logits(data.size());
  if (mode == ExecMode::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < data.size(); ++i) {
      logits[i] = forward(model, data.row(i));
    }
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      logits[i] = forward(model, data.row(i));
    }
  }
  return logits;
}

void validate_train_config(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw std::invalid_argument("train: epochs < 0");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size < 1");
  if (!(cfg.base_lr >= 0.0)) throw std::invalid_argument("train: bad base_lr");
  if (cfg.momentum < 0.0) throw std::invalid_argument("train: bad momentum");
  if (cfg.weight_decay < 0.0) {
    throw std::invalid_argument("train: bad weight_decay");
  }
  if (cfg.warmup_epochs < 0) {
    throw std::invalid_argument("train: warmup_epochs < 0");
  }
  if (!(cfg.decay_factor > 0.0 && cfg.decay_factor < 1.0)) {
    throw std::invalid_argument("train: decay_factor must lie in (0, 1)");
  }
  for (std::size_t i = 0; i < cfg.milestones.size(); ++i) {
    if (cfg.milestones[i] < 0 || cfg.milestones[i] >= cfg.epochs) {
      throw std::invalid_argument("train: milestone outside [0, epochs)");
    }
    if (i > 0 && cfg.milestones[i] <= cfg.milestones[i - 1]) {
      throw std::invalid_argument("train: milestones must strictly increase");
    }
  }
  if (cfg.hidden_dim < 0) throw std::invalid_argument("train: hidden_dim < 0");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw std::invalid_argument("lr_at: epoch out of range");
  }
  if (epoch < cfg.warmup_epochs) {
    return cfg.base_lr * (epoch + 1) / cfg.warmup_epochs;
  }
  int passed = 0;
  for (int m : cfg.milestones) {
    if (m <= epoch) ++passed;
  }
  return cfg.base_lr * std::pow(cfg.decay_factor, passed);
}

namespace {

void axpy_update(std::span<const double> grad, std::span<double> param,
                 std::span<double> velocity, double lr, double momentum,
                 double weight_decay) {
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
    param[i] -= lr * velocity[i];
  }
}

}  // namespace

void sgd_step(ModelParams& model, const Gradients& grads, SgdState& state,
              double lr, double momentum, double weight_decay) {
  if (grads.hidden_w.size() != model.hidden_w.size() ||
      grads.hidden_b.size() != model.hidden_b.size() ||
      grads.classifier_w.size() != model.classifier_w.size() ||
      grads.classifier_b.size() != model.classifier_b.size()) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  }
  axpy_update(grads.hidden_w, model.hidden_w, state.hidden_w, lr, momentum,
              weight_decay);
  axpy_update(grads.hidden_b, model.hidden_b, state.hidden_b, lr, momentum,
              weight_decay);
  axpy_update(grads.classifier_w, model.classifier_w, state.classifier_w, lr,
              momentum, weight_decay);
  axpy_update(grads.classifier_b, model.classifier_b, state.classifier_b, lr,
              momentum, weight_decay);
  if (model.cosine) renormalize_classifier_rows(model);
}

namespace {

struct SampleTrace {
  std::vector<double> feature;  // penultimate representation
  std::vector<double> logits;
};

// Chain one sample's d(loss)/dz into the parameter gradients; returns
// nothing but accumulates into `grads`. Runs in fixed sample order.
void backprop_sample(const ModelParams& model, std::span<const double> x,
                     const SampleTrace& trace, std::span<const double> dz,
                     Gradients& grads) {
  const std::size_t f = static_cast<std::size_t>(model.feature_dim());
  const auto& feature = trace.feature;
  std::vector<double> dfeature(f, 0.0);

  if (model.cosine) {
    const double nx = std::max(norm(feature), kNormFloor);
    for (int c = 0; c < model.num_classes; ++c) {
      const double g = dz[static_cast<std::size_t>(c)];
      if (g == 0.0) continue;
      const double* row =
          model.classifier_w.data() + static_cast<std::size_t>(c) * f;
      double* grow =
          grads.classifier_w.data() + static_cast<std::size_t>(c) * f;
      const double nw = std::max(norm({row, f}), kNormFloor);
      const double zc = trace.logits[static_cast<std::size_t>(c)];
      // z = (w.x) / (|w||x|): dz/dw = x/(|w||x|) - z w/|w|^2,
      //                       dz/dx = w/(|w||x|) - z x/|x|^2
      for (std::size_t i = 0; i < f; ++i) {
        grow[i] += g * (feature[i] / (nw * nx) - zc * row[i] / (nw * nw));
        dfeature[i] += g * (row[i] / (nw * nx) - zc * feature[i] / (nx * nx));
      }
    }
  } else {
    for (int c = 0; c < model.num_classes; ++c) {
      const double g = dz[static_cast<std::size_t>(c)];
      if (g == 0.0) continue;
      const double* row =
          model.classifier_w.data() + static_cast<std::size_t>(c) * f;
      double* grow =
          grads.classifier_w.data() + static_cast<std::size_t>(c) * f;
      for (std::size_t i = 0; i < f; ++i) {
        grow[i] += g * feature[i];
        dfeature[i] += g * row[i];
      }
      grads.classifier_b[static_cast<std::size_t>(c)] += g;
    }
  }

  if (model.hidden_dim > 0) {
    const std::size_t d = static_cast<std::size_t>(model.input_dim);
    for (int j = 0; j < model.hidden_dim; ++j) {
      const double* row =
          model.hidden_w.data() + static_cast<std::size_t>(j) * d;
      // softplus' = sigmoid of the preactivation
      const double a =
          dot({row, d}, x) + model.hidden_b[static_cast<std::size_t>(j)];
      const double da = dfeature[static_cast<std::size_t>(j)] * sigmoid(a);
      double* grow = grads.hidden_w.data() + static_cast<std::size_t>(j) * d;
      for (std::size_t i = 0; i < d; ++i) grow[i] += da * x[i];
      grads.hidden_b[static_cast<std::size_t>(j)] += da;
    }
  }
}

}  // namespace

BatchEval evaluate_batch(const ModelParams& model, const Dataset& data,
                         std::span<const std::size_t> indices,
                         std::span<const double> weights, const LossConfig& cfg,
                         ExecMode mode) {
  const std::size_t n = indices.size();
  if (n == 0) throw std::invalid_argument("evaluate_batch: empty batch");
  if (weights.size() != n) {
    throw std::invalid_argument("evaluate_batch: weight length mismatch");
  }

  std::vector<SampleTrace> traces(n);
  if (mode == ExecMode::kParallel) {
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) {
      traces[i].feature = penultimate(model, data.row(indices[i]));
      traces[i].logits = classifier_logits(model, traces[i].feature);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      traces[i].feature = penultimate(model, data.row(indices[i]));
      traces[i].logits = classifier_logits(model, traces[i].feature);
    }
  }

  std::vector<std::vector<double>> logits(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    logits[i] = traces[i].logits;
    labels[i] = data.labels[indices[i]];
  }
  BatchLossResult losses = batch_loss(logits, labels, weights, cfg, mode);

  BatchEval eval;
  eval.loss = losses.loss;
  eval.grads.hidden_w.assign(model.hidden_w.size(), 0.0);
  eval.grads.hidden_b.assign(model.hidden_b.size(), 0.0);
  eval.grads.classifier_w.assign(model.classifier_w.size(), 0.0);
  eval.grads.classifier_b.assign(model.classifier_b.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    backprop_sample(model, data.row(indices[i]), traces[i],
                    losses.per_sample[i].grad, eval.grads);
  }
  return eval;
}

namespace {

// Stream tags for seed derivation; epoch shuffles use 1 + epoch.
constexpr std::uint64_t kInitStream = 0;

std::string lr_phase_name(int epoch, const TrainConfig& cfg) {
  if (epoch < cfg.warmup_epochs) return "warmup";
  int passed = 0;
  for (int m : cfg.milestones) {
    if (m <= epoch) ++passed;
  }
  return passed == 0 ? "base" : "decay" + std::to_string(passed);
}

}  // namespace

EpochRecord train_epoch(ModelParams& model, const Dataset& data, int epoch,
                        const TrainConfig& cfg, SgdState& state,
                        ExecMode mode) {
  const double lr = lr_at(epoch, cfg);
  RandomSource shuffle_rng(
      RandomSource::derive_seed(cfg.seed, 1 + static_cast<std::uint64_t>(epoch)));
  const std::vector<std::size_t> perm = random_permutation(shuffle_rng, data.size());

  double weighted_loss_sum = 0.0;
  double weight_sum = 0.0;
  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < perm.size(); start += batch) {
    const std::size_t stop = std::min(start + batch, perm.size());
    std::span<const std::size_t> indices(perm.data() + start, stop - start);
    std::vector<int> labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      labels[i] = data.labels[indices[i]];
    }
    const std::vector<double> weights =
        drw_sample_weights(epoch, labels, cfg.reweight, data.counts);
    const BatchEval eval = evaluate_batch(model, data, indices, weights,
                                          cfg.loss, mode);
    double batch_weight = 0.0;
    for (double w : weights) batch_weight += w;
    weighted_loss_sum += batch_weight * eval.loss;
    weight_sum += batch_weight;
    sgd_step(model, eval.grads, state, lr, cfg.momentum, cfg.weight_decay);
  }

  EpochRecord record;
  record.epoch = epoch;
  record.lr = lr;
  record.mean_loss = weighted_loss_sum / weight_sum;
  record.per_class_accuracy =
      per_class_recall(model_logits(model, data, mode), data.labels,
                       data.num_classes());
  record.lr_phase = lr_phase_name(epoch, cfg);
  record.weight_phase =
      epoch < cfg.reweight.defer_epoch ? "uniform" : "class-balanced";
  return record;
}

std::pair<ModelParams, RunReport> train_run(const Dataset& train,
                                            const Dataset* test,
                                            const TrainConfig& cfg,
                                            ExecMode mode) {
  validate_train_config(cfg);
  RandomSource init_rng(RandomSource::derive_seed(cfg.seed, kInitStream));
  ModelParams model = init_model(train.num_features, train.num_classes(),
                                 cfg.hidden_dim, cfg.cosine, init_rng);
  SgdState state = make_sgd_state(model);

  RunReport report;
  report.seed = cfg.seed;
  report.epochs.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    report.epochs.push_back(
        train_epoch(model, train, epoch, cfg, state, mode));
  }

  const Dataset& eval_set = test != nullptr ? *test : train;
  const std::vector<int> ks = default_topk(train.num_classes());
  report.final_eval = evaluate_model(model, eval_set, train.counts, ks, mode);
  return {std::move(model), std::move(report)};
}

nlohmann::ordered_json run_report_to_json(const RunReport& report) {
  nlohmann::ordered_json j;
  j["seed"] = report.seed;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const EpochRecord& r : report.epochs) {
    nlohmann::ordered_json e;
    e["epoch"] = r.epoch;
    e["lr"] = r.lr;
    e["mean_loss"] = r.mean_loss;
    e["per_class_accuracy"] = r.per_class_accuracy;
    e["lr_phase"] = r.lr_phase;
    e["weight_phase"] = r.weight_phase;
    epochs.push_back(std::move(e));
  }
  j["epochs"] = std::move(epochs);
  j["final_eval"] = eval_summary_to_json(report.final_eval);
  return j;
}

void save_model(const ModelParams& model, const ClassCounts& train_counts,
                const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["input_dim"] = model.input_dim;
  j["hidden_dim"] = model.hidden_dim;
  j["num_classes"] = model.num_classes;
  j["cosine"] = model.cosine;
  j["hidden_w"] = model.hidden_w;
  j["hidden_b"] = model.hidden_b;
  j["classifier_w"] = model.classifier_w;
  j["classifier_b"] = model.classifier_b;
  j["train_counts"] = train_counts.values();
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  out << j.dump(2) << '\n';
  if (!out) {
    throw std::runtime_error("write failed for '" + path.string() + "'");
  }
}

std::pair<ModelParams, ClassCounts> load_model(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open '" + path.string() + "'");
  }
  nlohmann::json j;
  in >> j;
  ModelParams model;
  model.input_dim = j.at("input_dim").get<int>();
  model.hidden_dim = j.at("hidden_dim").get<int>();
  model.num_classes = j.at("num_classes").get<int>();
  model.cosine = j.at("cosine").get<bool>();
  model.hidden_w = j.at("hidden_w").get<std::vector<double>>();
  model.hidden_b = j.at("hidden_b").get<std::vector<double>>();
  model.classifier_w = j.at("classifier_w").get<std::vector<double>>();
  model.classifier_b = j.at("classifier_b").get<std::vector<double>>();
  ClassCounts counts(j.at("train_counts").get<std::vector<std::int64_t>>());

  const std::size_t f = static_cast<std::size_t>(model.feature_dim());
  if (model.classifier_w.size() !=
          f * static_cast<std::size_t>(model.num_classes) ||
      model.hidden_w.size() != static_cast<std::size_t>(model.hidden_dim) *
                                   static_cast<std::size_t>(model.input_dim) ||
      counts.num_classes() != model.num_classes) {
    throw std::runtime_error("model file '" + path.string() +
                             "': inconsistent shapes");
  }
  return {std::move(model), std::move(counts)};
}

}  // namespace marginlab
