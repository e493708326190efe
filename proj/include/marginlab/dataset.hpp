#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "marginlab/losses.hpp"
#include "marginlab/numerics.hpp"

namespace marginlab {

/// Feature matrix (row-major N x D) with integer labels and the per-class
/// counts derived from them. Built through the factories below, which
/// validate labels, finiteness, and that every class 0..C-1 is populated.
struct Dataset {
  int num_features = 0;
  std::vector<double> features;
  std::vector<int> labels;
  ClassCounts counts;

  std::size_t size() const { return labels.size(); }
  int num_classes() const { return counts.num_classes(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * static_cast<std::size_t>(num_features),
            static_cast<std::size_t>(num_features)};
  }
};

Dataset make_dataset(int num_features, std::vector<double> features,
                     std::vector<int> labels);

enum class ImbalanceKind { kLongTail, kStep };

/// Requested class-count shape: most frequent class gets n_max, the ratio
/// is max count over min count.
struct ImbalanceProfile {
  ImbalanceKind kind = ImbalanceKind::kLongTail;
  int num_classes = 10;
  std::int64_t n_max = 5000;
  double ratio = 100.0;
};

/// Exponential decay n_j = round(n_max * ratio^(-j / (C-1))), clamped to at
/// least 1. Class 0 is the most frequent.
ClassCounts longtail_counts(const ImbalanceProfile& profile);

/// Two-level counts: the first ceil(C/2) classes get n_max, the rest
/// round(n_max / ratio).
ClassCounts step_counts(const ImbalanceProfile& profile);

/// Uniform per-class subset without replacement. Selected rows keep their
/// original order and are copied verbatim.
Dataset subsample_to_counts(const Dataset& data, const ClassCounts& target,
                            RandomSource& rng);

/// Gaussian blobs with one mean per class: evenly spaced on a circle of
/// radius `separation` when dims == 2, or separation * e_c (a scaled
/// regular simplex, requiring C <= dims) when dims > 2. Samples are grouped
/// by class, class c drawn from N(mean_c, stddev^2 I).
Dataset synth_gaussian_blobs(const ClassCounts& counts, int dims,
                             double separation, double stddev,
                             RandomSource& rng);

/// CSV rows "label,f1,...,fD". Errors name the offending physical line.
Dataset load_csv_dataset(const std::filesystem::path& path,
                         bool has_header = false);

/// Inverse of load_csv_dataset; features are written with enough digits to
/// round-trip exactly. No header.
void save_csv_dataset(const Dataset& data, const std::filesystem::path& path);

}  // namespace marginlab
