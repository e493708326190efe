#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "marginlab/dataset.hpp"

using namespace marginlab;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("marginlab_test_" + name);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("long-tail count tables") {
  SUBCASE("n_max 5000, 10 classes, ratio 100") {
    const ClassCounts counts = longtail_counts(
        {ImbalanceKind::kLongTail, 10, 5000, 100.0});
    const std::vector<std::int64_t> want{5000, 2997, 1797, 1077, 646,
                                         387,  232,  139,  83,   50};
    CHECK(counts.values() == want);
  }
  SUBCASE("n_max 5000, 10 classes, ratio 10") {
    const ClassCounts counts =
        longtail_counts({ImbalanceKind::kLongTail, 10, 5000, 10.0});
    const std::vector<std::int64_t> want{5000, 3871, 2997, 2321, 1797,
                                         1391, 1077, 834,  646,  500};
    CHECK(counts.values() == want);
  }
  SUBCASE("n_max 500, 10 classes, ratio 100") {
    const ClassCounts counts =
        longtail_counts({ImbalanceKind::kLongTail, 10, 500, 100.0});
    const std::vector<std::int64_t> want{500, 300, 180, 108, 65,
                                         39,  23,  14,  8,   5};
    CHECK(counts.values() == want);
  }
  SUBCASE("n_max 1000, 5 classes, ratio 100") {
    const ClassCounts counts =
        longtail_counts({ImbalanceKind::kLongTail, 5, 1000, 100.0});
    const std::vector<std::int64_t> want{1000, 316, 100, 32, 10};
    CHECK(counts.values() == want);
  }
  SUBCASE("tiny n_max clamps tail classes to one sample") {
    const ClassCounts counts =
        longtail_counts({ImbalanceKind::kLongTail, 10, 2, 100.0});
    const std::vector<std::int64_t> want{2, 1, 1, 1, 1, 1, 1, 1, 1, 1};
    CHECK(counts.values() == want);
  }
  SUBCASE("ratio 1 is balanced") {
    const ClassCounts counts =
        longtail_counts({ImbalanceKind::kLongTail, 6, 750, 1.0});
    for (std::int64_t n : counts.values()) CHECK(n == 750);
  }
  SUBCASE("ratio below 1 is rejected") {
    CHECK_THROWS_AS(longtail_counts({ImbalanceKind::kLongTail, 6, 750, 0.5}),
                    std::invalid_argument);
  }
}

TEST_CASE("step count tables") {
  SUBCASE("10 classes, n_max 5000, ratio 100") {
    const ClassCounts counts =
        step_counts({ImbalanceKind::kStep, 10, 5000, 100.0});
    const std::vector<std::int64_t> want{5000, 5000, 5000, 5000, 5000,
                                         50,   50,   50,   50,   50};
    CHECK(counts.values() == want);
  }
  SUBCASE("odd class count puts the extra class in the frequent half") {
    const ClassCounts counts =
        step_counts({ImbalanceKind::kStep, 3, 100, 10.0});
    const std::vector<std::int64_t> want{100, 100, 10};
    CHECK(counts.values() == want);
  }
  SUBCASE("ratio 1 is balanced") {
    const ClassCounts counts =
        step_counts({ImbalanceKind::kStep, 4, 321, 1.0});
    for (std::int64_t n : counts.values()) CHECK(n == 321);
  }
}

TEST_CASE("profile counts are non-increasing and hit the requested ratio") {
  for (ImbalanceKind kind : {ImbalanceKind::kLongTail, ImbalanceKind::kStep}) {
    for (double ratio : {1.0, 10.0, 100.0}) {
      for (std::int64_t n_max : {500ll, 5000ll}) {
        const ImbalanceProfile profile{kind, 10, n_max, ratio};
        const ClassCounts counts = kind == ImbalanceKind::kLongTail
                                       ? longtail_counts(profile)
                                       : step_counts(profile);
        const auto& v = counts.values();
        for (std::size_t j = 1; j < v.size(); ++j) CHECK(v[j] <= v[j - 1]);
        CHECK(v.front() == n_max);
        const double achieved = static_cast<double>(counts.max_count()) /
                                static_cast<double>(counts.min_count());
        // min count is rounded to the nearest integer, so the achieved
        // ratio can differ by at most half a sample of the rarest class
        const double slack =
            ratio / static_cast<double>(counts.min_count());
        CHECK(std::abs(achieved - ratio) <= slack);
      }
    }
  }
}

TEST_CASE("synthetic blobs") {
  SUBCASE("counts and grouping are honored") {
    RandomSource rng(7);
    const ClassCounts counts({40, 25, 9});
    const Dataset data = synth_gaussian_blobs(counts, 2, 3.0, 1.0, rng);
    CHECK(data.counts.values() == counts.values());
    CHECK(data.size() == 74);
    CHECK(data.num_features == 2);
    for (std::size_t i = 1; i < data.size(); ++i) {
      CHECK(data.labels[i] >= data.labels[i - 1]);
    }
  }
  SUBCASE("stddev 0 collapses every sample onto its class mean") {
    RandomSource rng(8);
    const int num_classes = 4;
    const double sep = 2.5;
    const Dataset data =
        synth_gaussian_blobs(ClassCounts({3, 3, 3, 3}), 2, sep, 0.0, rng);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double angle = kTwoPi * data.labels[i] / num_classes;
      CHECK(data.row(i)[0] == sep * std::cos(angle));
      CHECK(data.row(i)[1] == sep * std::sin(angle));
    }
  }
  SUBCASE("well-separated blobs sit near their own mean") {
    RandomSource rng(11);
    const int num_classes = 5;
    const double sep = 4.0;
    const Dataset data = synth_gaussian_blobs(
        ClassCounts({100, 100, 100, 100, 100}), 2, sep, 1.0, rng);
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      int best = -1;
      double best_dist = 0.0;
      for (int c = 0; c < num_classes; ++c) {
        const double angle = kTwoPi * c / num_classes;
        const double dx = data.row(i)[0] - sep * std::cos(angle);
        const double dy = data.row(i)[1] - sep * std::sin(angle);
        const double dist = dx * dx + dy * dy;
        if (best < 0 || dist < best_dist) {
          best = c;
          best_dist = dist;
        }
      }
      if (best == data.labels[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(data.size()) >
          0.9);
  }
  SUBCASE("same seed reproduces the same dataset") {
    RandomSource a(12);
    RandomSource b(12);
    const ClassCounts counts({10, 5});
    const Dataset da = synth_gaussian_blobs(counts, 3, 2.0, 1.0, a);
    const Dataset db = synth_gaussian_blobs(counts, 3, 2.0, 1.0, b);
    CHECK(da.features == db.features);
    CHECK(da.labels == db.labels);
  }
  SUBCASE("rejects bad geometry") {
    RandomSource rng(13);
    const ClassCounts counts({4, 4});
    CHECK_THROWS_AS(synth_gaussian_blobs(counts, 1, 2.0, 1.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(synth_gaussian_blobs(counts, 2, 0.0, 1.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(synth_gaussian_blobs(counts, 2, 2.0, -1.0, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        synth_gaussian_blobs(ClassCounts({1, 1, 1, 1}), 3, 2.0, 1.0, rng),
        std::invalid_argument);
  }
}

TEST_CASE("per-class subsampling") {
  RandomSource data_rng(21);
  const Dataset data = synth_gaussian_blobs(ClassCounts({100, 60}), 2, 3.0,
                                            1.0, data_rng);

  SUBCASE("subsampling to the full counts is the identity") {
    RandomSource rng(22);
    const Dataset out = subsample_to_counts(data, data.counts, rng);
    CHECK(out.features == data.features);
    CHECK(out.labels == data.labels);
  }
  SUBCASE("target counts are met exactly and rows are copied verbatim") {
    RandomSource rng(23);
    const ClassCounts target({100, 10});
    const Dataset out = subsample_to_counts(data, target, rng);
    CHECK(out.counts.values() == target.values());
    // every output row must be one of the input rows, in original order
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      bool found = false;
      for (std::size_t j = cursor; j < data.size(); ++j) {
        if (out.labels[i] == data.labels[j] &&
            out.row(i)[0] == data.row(j)[0] &&
            out.row(i)[1] == data.row(j)[1]) {
          cursor = j + 1;
          found = true;
          break;
        }
      }
      CHECK(found);
    }
  }
  SUBCASE("same seed picks the same subset") {
    RandomSource a(24);
    RandomSource b(24);
    const ClassCounts target({37, 12});
    const Dataset da = subsample_to_counts(data, target, a);
    const Dataset db = subsample_to_counts(data, target, b);
    CHECK(da.features == db.features);
    CHECK(da.labels == db.labels);
  }
  SUBCASE("asking for more samples than available is rejected") {
    RandomSource rng(25);
    CHECK_THROWS_AS(subsample_to_counts(data, ClassCounts({101, 10}), rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(subsample_to_counts(data, ClassCounts({10, 10, 10}), rng),
                    std::invalid_argument);
  }
}

TEST_CASE("csv loading") {
  SUBCASE("two-row file") {
    const fs::path path = temp_file("two_rows.csv");
    write_file(path, "0,1.5,-2\n1,0.25,3.5\n");
    const Dataset data = load_csv_dataset(path);
    CHECK(data.size() == 2);
    CHECK(data.num_features == 2);
    CHECK(data.labels == std::vector<int>{0, 1});
    CHECK(data.features == std::vector<double>{1.5, -2.0, 0.25, 3.5});
  }
  SUBCASE("empty file") {
    const fs::path path = temp_file("empty.csv");
    write_file(path, "");
    CHECK_THROWS_WITH_AS(load_csv_dataset(path),
                         doctest::Contains("no rows"), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_WITH_AS(load_csv_dataset(temp_file("absent.csv")),
                         doctest::Contains("cannot open"),
                         std::runtime_error);
  }
  SUBCASE("ragged rows name the offending line") {
    const fs::path path = temp_file("ragged.csv");
    write_file(path, "0,1.0,2.0\n1,3.0\n");
    CHECK_THROWS_WITH_AS(load_csv_dataset(path), doctest::Contains("line 2"),
                         std::runtime_error);
  }
  SUBCASE("non-numeric feature") {
    const fs::path path = temp_file("nonnum.csv");
    write_file(path, "0,1.0,oops\n1,1.0,2.0\n");
    CHECK_THROWS_WITH_AS(load_csv_dataset(path),
                         doctest::Contains("non-numeric feature"),
                         std::runtime_error);
  }
  SUBCASE("fractional or negative labels are rejected") {
    const fs::path path = temp_file("badlabel.csv");
    write_file(path, "1.5,2.0,3.0\n");
    CHECK_THROWS_WITH_AS(load_csv_dataset(path),
                         doctest::Contains("nonnegative integer"),
                         std::runtime_error);
    write_file(path, "-1,2.0,3.0\n0,2.0,3.0\n");
    CHECK_THROWS_WITH_AS(load_csv_dataset(path),
                         doctest::Contains("nonnegative integer"),
                         std::runtime_error);
  }
  SUBCASE("header handling") {
    const fs::path path = temp_file("header.csv");
    write_file(path, "label,x,y\n0,1.0,2.0\n1,3.0,4.0\n");
    const Dataset data = load_csv_dataset(path, true);
    CHECK(data.size() == 2);
    CHECK_THROWS_AS(load_csv_dataset(path, false), std::runtime_error);
  }
}

TEST_CASE("csv round trip is exact") {
  RandomSource rng(31);
  const Dataset data =
      synth_gaussian_blobs(ClassCounts({20, 12, 4}), 3, 2.0, 1.0, rng);
  const fs::path path = temp_file("roundtrip.csv");
  save_csv_dataset(data, path);
  const Dataset back = load_csv_dataset(path);
  CHECK(back.num_features == data.num_features);
  CHECK(back.labels == data.labels);
  REQUIRE(back.features.size() == data.features.size());
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    CHECK(back.features[i] == data.features[i]);
  }
  const fs::path path2 = temp_file("roundtrip2.csv");
  save_csv_dataset(back, path2);
  CHECK(read_file(path) == read_file(path2));
}
