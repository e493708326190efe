#pragma once

#include <span>
#include <vector>

#include "marginlab/losses.hpp"

namespace marginlab {

/// Deferred re-balancing: samples are weighted 1 until defer_epoch, then by
/// their class's effective-number weight. beta in [0, 1); weights are
/// normalized to mean one.
struct ReweightConfig {
  double beta = 0.9999;
  int defer_epoch = 0;
};

/// Effective-number class weights (1 - beta) / (1 - beta^n_c), rescaled so
/// the per-class weights average to 1. beta = 0 gives all ones; rarer
/// classes always get the larger weight.
std::vector<double> effective_number_weights(const ClassCounts& counts,
                                             double beta);

/// Per-sample weights for one batch at `epoch`: all ones before the
/// deferral point, class-balanced afterwards.
std::vector<double> drw_sample_weights(int epoch, std::span<const int> labels,
                                       const ReweightConfig& cfg,
                                       const ClassCounts& counts);

}  // namespace marginlab
