// Times the OpenMP kernels against the serial reference on identical inputs
// and verifies both produce bit-identical results. The parallel paths fill
// per-sample slots and reduce in fixed order, so agreement must be exact,
// not approximate.

#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/numerics.hpp"
#include "marginlab/parallel.hpp"
#include "marginlab/sweeps.hpp"
#include "marginlab/trainer.hpp"

namespace ml = marginlab;

namespace {

double time_best_of(int repeats, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    best = std::min(best,
                    std::chrono::duration<double, std::milli>(stop - start)
                        .count());
  }
  return best;
}

struct Row {
  std::string name;
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
  bool identical = false;
};

void print_rows(const std::vector<Row>& rows) {
  std::printf("%-22s %12s %12s %9s %10s\n", "kernel", "serial ms",
              "parallel ms", "speedup", "identical");
  for (const Row& r : rows) {
    std::printf("%-22s %12.2f %12.2f %8.2fx %10s\n", r.name.c_str(),
                r.serial_ms, r.parallel_ms, r.serial_ms / r.parallel_ms,
                r.identical ? "yes" : "NO");
  }
}

}  // namespace

int main() {
  std::printf("threads available: %d\n\n", ml::max_threads());
  std::vector<Row> rows;

  {
    const int n = 60000;
    const int c = 10;
    ml::RandomSource rng(11);
    std::vector<std::vector<double>> logits(n);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      logits[i].resize(c);
      for (double& z : logits[i]) z = rng.next_normal(0.0, 3.0);
      labels[i] = static_cast<int>(rng.next_index(c));
    }
    std::vector<double> weights(n, 1.0);
    std::vector<std::int64_t> counts(c);
    for (int j = 0; j < c; ++j) counts[j] = 5000 - 400 * j;
    ml::LossConfig cfg;
    cfg.variant = ml::LossVariant::kElm;
    cfg.margins = ml::compute_margin_table(ml::ClassCounts(counts), 0.5,
                                           ml::MarginMode::kNormalized);

    ml::BatchLossResult serial;
    ml::BatchLossResult parallel;
    Row row;
    row.name = "batch_loss (elm)";
    row.serial_ms = time_best_of(3, [&] {
      serial = ml::batch_loss(logits, labels, weights, cfg, ml::ExecMode::kSerial);
    });
    row.parallel_ms = time_best_of(3, [&] {
      parallel =
          ml::batch_loss(logits, labels, weights, cfg, ml::ExecMode::kParallel);
    });
    row.identical = serial.loss == parallel.loss;
    for (int i = 0; i < n && row.identical; ++i) {
      row.identical = serial.per_sample[i].loss == parallel.per_sample[i].loss &&
                      serial.per_sample[i].grad == parallel.per_sample[i].grad;
    }
    rows.push_back(row);
  }

  {
    ml::ClassCounts counts(std::vector<std::int64_t>(8, 4000));
    ml::RandomSource data_rng(12);
    const ml::Dataset data =
        ml::synth_gaussian_blobs(counts, 16, 4.0, 1.0, data_rng);
    ml::RandomSource init_rng(13);
    const ml::ModelParams model = ml::init_model(16, 8, 32, true, init_rng);

    std::vector<std::vector<double>> serial;
    std::vector<std::vector<double>> parallel;
    Row row;
    row.name = "model_logits (hidden)";
    row.serial_ms = time_best_of(3, [&] {
      serial = ml::model_logits(model, data, ml::ExecMode::kSerial);
    });
    row.parallel_ms = time_best_of(3, [&] {
      parallel = ml::model_logits(model, data, ml::ExecMode::kParallel);
    });
    row.identical = serial == parallel;
    rows.push_back(row);
  }

  {
    const int trials = 30000;
    ml::EquivalenceReport serial;
    ml::EquivalenceReport parallel;
    Row row;
    row.name = "equivalence sweep";
    row.serial_ms = time_best_of(3, [&] {
      serial = ml::run_equivalence_sweep(trials, 21, true, ml::ExecMode::kSerial);
    });
    row.parallel_ms = time_best_of(3, [&] {
      parallel =
          ml::run_equivalence_sweep(trials, 21, true, ml::ExecMode::kParallel);
    });
    row.identical = serial.max_ldam_gap == parallel.max_ldam_gap &&
                    serial.max_elm_gap == parallel.max_elm_gap &&
                    serial.max_lmsce_gap == parallel.max_lmsce_gap;
    rows.push_back(row);
  }

  print_rows(rows);
  for (const Row& r : rows) {
    if (!r.identical) {
      std::printf("\nserial/parallel mismatch in %s\n", r.name.c_str());
      return 2;
    }
  }
  return 0;
}
