#include "marginlab/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "marginlab/dataset.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_lengths(const std::vector<std::vector<double>>& logits,
                   std::span<const int> labels) {
  if (logits.size() != labels.size()) {
    throw std::invalid_argument("evaluation: logits/labels length mismatch");
  }
  if (logits.empty()) {
    throw std::invalid_argument("evaluation: no samples");
  }
}

}  // namespace

int argmax_prediction(std::span<const double> logits) {
  if (logits.empty()) {
    throw std::invalid_argument("argmax_prediction: empty logits");
  }
  int best = 0;
  for (int c = 1; c < static_cast<int>(logits.size()); ++c) {
    if (logits[c] > logits[best]) best = c;
  }
  return best;
}

double topk_accuracy(const std::vector<std::vector<double>>& logits,
                     std::span<const int> labels, int k) {
  check_lengths(logits, labels);
  const int num_classes = static_cast<int>(logits.front().size());
  if (k < 1 || k > num_classes) {
    throw std::invalid_argument("topk_accuracy: k out of range");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& z = logits[i];
    const int label = labels[i];
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("topk_accuracy: label out of range");
    }
    // rank of the label under (logit desc, index asc)
    int ahead = 0;
    for (int c = 0; c < num_classes; ++c) {
      if (c == label) continue;
      if (z[c] > z[label] || (z[c] == z[label] && c < label)) ++ahead;
    }
    if (ahead < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(logits.size());
}

std::vector<std::vector<std::int64_t>> confusion_matrix(
    const std::vector<std::vector<double>>& logits, std::span<const int> labels,
    int num_classes) {
  check_lengths(logits, labels);
  std::vector<std::vector<std::int64_t>> matrix(
      static_cast<std::size_t>(num_classes),
      std::vector<std::int64_t>(static_cast<std::size_t>(num_classes), 0));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const int label = labels[i];
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("confusion_matrix: label out of range");
    }
    const int pred = argmax_prediction(logits[i]);
    ++matrix[static_cast<std::size_t>(label)][static_cast<std::size_t>(pred)];
  }
  return matrix;
}

std::vector<double> per_class_recall(
    const std::vector<std::vector<double>>& logits, std::span<const int> labels,
    int num_classes) {
  const auto matrix = confusion_matrix(logits, labels, num_classes);
  std::vector<double> recall(static_cast<std::size_t>(num_classes), kNaN);
  for (int c = 0; c < num_classes; ++c) {
    std::int64_t total = 0;
    for (std::int64_t v : matrix[static_cast<std::size_t>(c)]) total += v;
    if (total > 0) {
      recall[static_cast<std::size_t>(c)] =
          static_cast<double>(
              matrix[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)]) /
          static_cast<double>(total);
    }
  }
  return recall;
}

std::vector<int> default_topk(int num_classes) {
  std::vector<int> ks;
  for (int k : {1, 3, 5}) {
    if (k <= num_classes) ks.push_back(k);
  }
  return ks;
}

namespace {

double mean_of_defined(std::span<const double> values,
                       std::span<const std::uint8_t> mask) {
  double sum = 0.0;
  int n = 0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (mask.empty() ? !std::isnan(values[i])
                     : (mask[i] != 0 && !std::isnan(values[i]))) {
      sum += values[i];
      ++n;
    }
  }
  return n > 0 ? sum / n : kNaN;
}

double median_count(const ClassCounts& counts) {
  std::vector<std::int64_t> sorted = counts.values();
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return static_cast<double>(sorted[n / 2]);
  return 0.5 * (static_cast<double>(sorted[n / 2 - 1]) +
                static_cast<double>(sorted[n / 2]));
}

}  // namespace

EvalSummary summarize(const std::vector<std::vector<double>>& logits,
                      std::span<const int> labels,
                      const ClassCounts& train_counts,
                      std::span<const int> ks) {
  check_lengths(logits, labels);
  const int num_classes = train_counts.num_classes();
  if (static_cast<int>(logits.front().size()) != num_classes) {
    throw std::invalid_argument("summarize: logit width != class count");
  }
  EvalSummary summary;
  summary.ks.assign(ks.begin(), ks.end());
  for (int k : ks) summary.topk.push_back(topk_accuracy(logits, labels, k));
  summary.per_class_recall = per_class_recall(logits, labels, num_classes);
  summary.confusion = confusion_matrix(logits, labels, num_classes);
  summary.balanced_accuracy = mean_of_defined(summary.per_class_recall, {});

  const double median = median_count(train_counts);
  std::vector<std::uint8_t> frequent(static_cast<std::size_t>(num_classes));
  std::vector<std::uint8_t> rare(static_cast<std::size_t>(num_classes));
  for (int c = 0; c < num_classes; ++c) {
    const bool f = static_cast<double>(train_counts.at(c)) >= median;
    frequent[static_cast<std::size_t>(c)] = f ? 1 : 0;
    rare[static_cast<std::size_t>(c)] = f ? 0 : 1;
  }
  summary.frequent_recall = mean_of_defined(summary.per_class_recall, frequent);
  summary.rare_recall = mean_of_defined(summary.per_class_recall, rare);
  return summary;
}

namespace {

// undefined metrics become explicit nulls instead of NaN floats
nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

}  // namespace

nlohmann::ordered_json eval_summary_to_json(const EvalSummary& summary) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json topk;
  for (std::size_t i = 0; i < summary.ks.size(); ++i) {
    topk["top" + std::to_string(summary.ks[i])] = summary.topk[i];
  }
  j["topk"] = std::move(topk);
  nlohmann::ordered_json recalls = nlohmann::ordered_json::array();
  for (double r : summary.per_class_recall) {
    recalls.push_back(number_or_null(r));
  }
  j["per_class_recall"] = std::move(recalls);
  j["balanced_accuracy"] = number_or_null(summary.balanced_accuracy);
  j["frequent_recall"] = number_or_null(summary.frequent_recall);
  j["rare_recall"] = number_or_null(summary.rare_recall);
  j["confusion"] = summary.confusion;
  return j;
}

EvalSummary evaluate_model(const ModelParams& model, const Dataset& data,
                           const ClassCounts& train_counts,
                           std::span<const int> ks, ExecMode mode) {
  const auto logits = model_logits(model, data, mode);
  return summarize(logits, data.labels, train_counts, ks);
}

void dump_features(const ModelParams& model, const Dataset& data,
                   const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  char buf[40];
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto rep = penultimate(model, data.row(i));
    out << data.labels[i];
    for (double v : rep) {
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("write failed for '" + path.string() + "'");
  }
}

}  // namespace marginlab
