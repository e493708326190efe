#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "marginlab/reweighting.hpp"

using namespace marginlab;

TEST_CASE("beta = 0 gives uniform weights") {
  const std::vector<double> w =
      effective_number_weights(ClassCounts({5000, 300, 7}), 0.0);
  for (double v : w) CHECK(v == 1.0);
}

TEST_CASE("effective-number weights for counts 5000 and 50") {
  const std::vector<double> w =
      effective_number_weights(ClassCounts({5000, 50}), 0.9999);
  REQUIRE(w.size() == 2);
  CHECK(w[0] == doctest::Approx(0.025034462385651032).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(1.974965537614349).epsilon(1e-12));
  CHECK(std::abs(w[0] - 0.02503) <= 1e-4);
  CHECK(std::abs(w[1] - 1.97497) <= 1e-4);
}

TEST_CASE("equal counts give weight 1 for every class") {
  for (double beta : {0.0, 0.9, 0.9999}) {
    const std::vector<double> w =
        effective_number_weights(ClassCounts({123, 123, 123, 123}), beta);
    for (double v : w) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("weights always average to one") {
  const ClassCounts counts({5000, 2997, 1797, 646, 50});
  for (double beta : {0.0, 0.5, 0.99, 0.9999}) {
    const std::vector<double> w = effective_number_weights(counts, beta);
    double sum = 0.0;
    for (double v : w) sum += v;
    CHECK(sum / static_cast<double>(w.size()) ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("rarer classes get strictly larger weights when beta > 0") {
  // counts are kept small enough that beta^n stays representable; past
  // that point 1 - beta^n saturates at 1 and the ordering flattens out
  struct Case {
    double beta;
    std::vector<std::int64_t> counts;
  };
  const std::vector<Case> cases{
      {0.5, {40, 20, 10, 5, 2, 1}},
      {0.99, {3000, 1500, 700, 300, 100, 10}},
      {0.9999, {5000, 2997, 1797, 646, 387, 50}},
  };
  for (const Case& c : cases) {
    const std::vector<double> w =
        effective_number_weights(ClassCounts(c.counts), c.beta);
    for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] > w[i - 1]);
  }
}

TEST_CASE("beta outside [0, 1) is rejected") {
  const ClassCounts counts({10, 20});
  CHECK_THROWS_AS(effective_number_weights(counts, -0.1),
                  std::invalid_argument);
  CHECK_THROWS_AS(effective_number_weights(counts, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(effective_number_weights(counts, 1.5),
                  std::invalid_argument);
}

TEST_CASE("deferred re-weighting switches exactly at the deferral epoch") {
  const ClassCounts counts({5000, 50});
  const std::vector<int> labels{0, 1, 1, 0};
  ReweightConfig cfg;
  cfg.beta = 0.9999;
  cfg.defer_epoch = 160;

  SUBCASE("before the switch every sample weighs exactly 1") {
    for (int epoch : {0, 1, 80, 159}) {
      const std::vector<double> w =
          drw_sample_weights(epoch, labels, cfg, counts);
      for (double v : w) CHECK(v == 1.0);
    }
  }
  SUBCASE("from the switch on, samples carry their class weight") {
    const std::vector<double> table =
        effective_number_weights(counts, cfg.beta);
    for (int epoch : {160, 161, 400}) {
      const std::vector<double> w =
          drw_sample_weights(epoch, labels, cfg, counts);
      REQUIRE(w.size() == labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        CHECK(w[i] == table[static_cast<std::size_t>(labels[i])]);
      }
    }
  }
  SUBCASE("defer_epoch = 0 balances from the start") {
    cfg.defer_epoch = 0;
    const std::vector<double> w = drw_sample_weights(0, labels, cfg, counts);
    const std::vector<double> table =
        effective_number_weights(counts, cfg.beta);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      CHECK(w[i] == table[static_cast<std::size_t>(labels[i])]);
    }
  }
}

TEST_CASE("deferred re-weighting validates its input") {
  const ClassCounts counts({5000, 50});
  ReweightConfig cfg;
  CHECK_THROWS_AS(
      drw_sample_weights(-1, std::vector<int>{0}, cfg, counts),
      std::invalid_argument);
  CHECK_THROWS_AS(
      drw_sample_weights(0, std::vector<int>{2}, cfg, counts),
      std::invalid_argument);
  CHECK_THROWS_AS(
      drw_sample_weights(0, std::vector<int>{-1}, cfg, counts),
      std::invalid_argument);
}
