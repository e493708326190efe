#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "marginlab/losses.hpp"
#include "marginlab/parallel.hpp"

namespace marginlab {

struct Dataset;
struct ModelParams;

/// Index of the largest logit, smallest index on ties (the same convention
/// the losses use for c*).
int argmax_prediction(std::span<const double> logits);

/// Fraction of samples whose label ranks among the k largest logits, ties
/// resolved toward smaller class indices. Rejects k < 1 or k > C.
double topk_accuracy(const std::vector<std::vector<double>>& logits,
                     std::span<const int> labels, int k);

/// recall_c = correct_c / n_c under argmax prediction; NaN for classes
/// absent from `labels`.
std::vector<double> per_class_recall(
    const std::vector<std::vector<double>>& logits, std::span<const int> labels,
    int num_classes);

/// counts[true][pred] under argmax prediction.
std::vector<std::vector<std::int64_t>> confusion_matrix(
    const std::vector<std::vector<double>>& logits, std::span<const int> labels,
    int num_classes);

/// Aggregate metrics for one evaluation pass. The frequent/rare grouping
/// splits classes at the median *training* count: frequent means
/// train count >= median. Group recalls and balanced accuracy average only
/// classes that appear in the evaluation set (NaN when a group is empty).
struct EvalSummary {
  std::vector<int> ks;
  std::vector<double> topk;
  std::vector<double> per_class_recall;
  std::vector<std::vector<std::int64_t>> confusion;
  double balanced_accuracy = 0.0;
  double frequent_recall = 0.0;
  double rare_recall = 0.0;
};

EvalSummary summarize(const std::vector<std::vector<double>>& logits,
                      std::span<const int> labels,
                      const ClassCounts& train_counts, std::span<const int> ks);

/// Default ks {1, 3, 5} clipped to k <= C.
std::vector<int> default_topk(int num_classes);

/// Fixed key order; NaNs serialize as null.
nlohmann::ordered_json eval_summary_to_json(const EvalSummary& summary);

/// Forward the whole dataset through the model and summarize.
EvalSummary evaluate_model(const ModelParams& model, const Dataset& data,
                           const ClassCounts& train_counts,
                           std::span<const int> ks,
                           ExecMode mode = ExecMode::kParallel);

/// CSV rows "label,f1,...,fF" of penultimate representations: the raw input
/// features for linear models, hidden activations otherwise. Written with
/// round-trip precision so load_csv_dataset restores them exactly.
void dump_features(const ModelParams& model, const Dataset& data,
                   const std::filesystem::path& path);

}  // namespace marginlab
