#include "marginlab/reweighting.hpp"

#include <cmath>
#include <stdexcept>

namespace marginlab {

std::vector<double> effective_number_weights(const ClassCounts& counts,
                                             double beta) {
  if (beta < 0.0 || beta >= 1.0) {
    throw std::invalid_argument(
        "effective_number_weights: beta must lie in [0, 1)");
  }
  std::vector<double> weights;
  weights.reserve(counts.values().size());
  double sum = 0.0;
  for (std::int64_t n : counts.values()) {
    const double effective = 1.0 - std::pow(beta, static_cast<double>(n));
    const double w = beta == 0.0 ? 1.0 : (1.0 - beta) / effective;
    weights.push_back(w);
    sum += w;
  }
  const double mean = sum / static_cast<double>(weights.size());
  for (double& w : weights) w /= mean;
  return weights;
}

std::vector<double> drw_sample_weights(int epoch, std::span<const int> labels,
                                       const ReweightConfig& cfg,
                                       const ClassCounts& counts) {
  if (epoch < 0) {
    throw std::invalid_argument("drw_sample_weights: negative epoch");
  }
  for (int label : labels) {
    if (label < 0 || label >= counts.num_classes()) {
      throw std::invalid_argument("drw_sample_weights: label out of range");
    }
  }
  if (epoch < cfg.defer_epoch) {
    return std::vector<double>(labels.size(), 1.0);
  }
  const std::vector<double> class_weights =
      effective_number_weights(counts, cfg.beta);
  std::vector<double> out;
  out.reserve(labels.size());
  for (int label : labels) {
    out.push_back(class_weights[static_cast<std::size_t>(label)]);
  }
  return out;
}

}  // namespace marginlab
