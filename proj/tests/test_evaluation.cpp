#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/evaluation.hpp"
#include "marginlab/trainer.hpp"

using namespace marginlab;
namespace fs = std::filesystem;

namespace {

std::vector<double> one_hot(int num_classes, int hot) {
  std::vector<double> z(static_cast<std::size_t>(num_classes), 0.0);
  z[static_cast<std::size_t>(hot)] = 1.0;
  return z;
}

}  // namespace

TEST_CASE("argmax prediction breaks ties toward the smallest index") {
  CHECK(argmax_prediction(std::vector<double>{1.0, 3.0, 3.0}) == 1);
  CHECK(argmax_prediction(std::vector<double>{2.0, 2.0}) == 0);
  CHECK(argmax_prediction(std::vector<double>{5.0}) == 0);
  CHECK(argmax_prediction(std::vector<double>{-1.0, -0.5, -2.0}) == 1);
  CHECK_THROWS_AS(argmax_prediction(std::vector<double>{}),
                  std::invalid_argument);
}

TEST_CASE("top-k accuracy") {
  const std::vector<std::vector<double>> descending{
      {2.0, 1.0, 0.0}, {2.0, 1.0, 0.0}, {2.0, 1.0, 0.0}};
  const std::vector<int> labels{0, 1, 2};

  SUBCASE("k equal to the class count is always 1") {
    CHECK(topk_accuracy(descending, labels, 3) == 1.0);
  }
  SUBCASE("k = 1 on perfect predictions") {
    std::vector<std::vector<double>> logits;
    for (int label : labels) logits.push_back(one_hot(3, label));
    CHECK(topk_accuracy(logits, labels, 1) == 1.0);
  }
  SUBCASE("fixed ranking example") {
    CHECK(topk_accuracy(descending, labels, 1) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(topk_accuracy(descending, labels, 2) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("ties rank smaller class indices first") {
    const std::vector<std::vector<double>> tied{{0.0, 1.0, 1.0, 1.0}};
    const std::vector<int> label3{3};
    CHECK(topk_accuracy(tied, label3, 2) == 0.0);
    CHECK(topk_accuracy(tied, label3, 3) == 1.0);
  }
  SUBCASE("k out of range is rejected") {
    CHECK_THROWS_AS(topk_accuracy(descending, labels, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(topk_accuracy(descending, labels, 4),
                    std::invalid_argument);
  }
  SUBCASE("accuracy never decreases with k") {
    RandomSource rng(41);
    std::vector<std::vector<double>> logits;
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
      logits.push_back(draw_normal(rng, 6, 0.0, 1.0));
      y.push_back(static_cast<int>(rng.next_index(6)));
    }
    double prev = 0.0;
    for (int k = 1; k <= 6; ++k) {
      const double acc = topk_accuracy(logits, y, k);
      CHECK(acc >= prev);
      prev = acc;
    }
    CHECK(prev == 1.0);
  }
}

TEST_CASE("per-class recall and the confusion matrix") {
  SUBCASE("perfect predictions") {
    std::vector<std::vector<double>> logits;
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 4; ++i) {
        logits.push_back(one_hot(3, c));
        labels.push_back(c);
      }
    }
    for (double r : per_class_recall(logits, labels, 3)) CHECK(r == 1.0);
  }
  SUBCASE("constant predictor recalls only class 0") {
    const std::vector<std::vector<double>> logits{
        {1.0, 0.0}, {1.0, 0.0}, {1.0, 0.0}};
    const std::vector<int> labels{0, 1, 1};
    const std::vector<double> recall = per_class_recall(logits, labels, 2);
    CHECK(recall[0] == 1.0);
    CHECK(recall[1] == 0.0);
  }
  SUBCASE("constructed 9/1 and 5/5 split") {
    std::vector<std::vector<double>> logits;
    std::vector<int> labels;
    auto add = [&](int label, int pred, int copies) {
      for (int i = 0; i < copies; ++i) {
        logits.push_back(one_hot(2, pred));
        labels.push_back(label);
      }
    };
    add(0, 0, 9);
    add(0, 1, 1);
    add(1, 0, 5);
    add(1, 1, 5);
    const std::vector<double> recall = per_class_recall(logits, labels, 2);
    CHECK(recall[0] == doctest::Approx(0.9).epsilon(1e-14));
    CHECK(recall[1] == doctest::Approx(0.5).epsilon(1e-14));
    const auto confusion = confusion_matrix(logits, labels, 2);
    CHECK(confusion[0] == std::vector<std::int64_t>{9, 1});
    CHECK(confusion[1] == std::vector<std::int64_t>{5, 5});
  }
  SUBCASE("classes absent from the labels get NaN recall") {
    const std::vector<std::vector<double>> logits{{1.0, 0.0, 0.0}};
    const std::vector<int> labels{0};
    const std::vector<double> recall = per_class_recall(logits, labels, 3);
    CHECK(recall[0] == 1.0);
    CHECK(std::isnan(recall[1]));
    CHECK(std::isnan(recall[2]));
  }
  SUBCASE("row sums equal the class counts; trace over total is top-1") {
    RandomSource rng(42);
    std::vector<std::vector<double>> logits;
    std::vector<int> labels;
    std::vector<std::int64_t> class_totals(4, 0);
    for (int i = 0; i < 200; ++i) {
      logits.push_back(draw_normal(rng, 4, 0.0, 1.0));
      const int y = static_cast<int>(rng.next_index(4));
      labels.push_back(y);
      ++class_totals[static_cast<std::size_t>(y)];
    }
    const auto confusion = confusion_matrix(logits, labels, 4);
    std::int64_t trace = 0;
    for (int c = 0; c < 4; ++c) {
      std::int64_t row = 0;
      for (std::int64_t v : confusion[static_cast<std::size_t>(c)]) row += v;
      CHECK(row == class_totals[static_cast<std::size_t>(c)]);
      trace += confusion[static_cast<std::size_t>(c)]
                        [static_cast<std::size_t>(c)];
    }
    CHECK(static_cast<double>(trace) / 200.0 ==
          doctest::Approx(topk_accuracy(logits, labels, 1)).epsilon(1e-14));
  }
}

TEST_CASE("summary statistics") {
  SUBCASE("balanced accuracy is the mean recall; equals top-1 when the "
          "evaluation set is balanced") {
    RandomSource rng(43);
    std::vector<std::vector<double>> logits;
    std::vector<int> labels;
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 50; ++i) {
        logits.push_back(draw_normal(rng, 3, 0.0, 1.0));
        labels.push_back(c);
      }
    }
    const ClassCounts train_counts({900, 90, 9});
    const std::vector<int> ks{1};
    const EvalSummary s = summarize(logits, labels, train_counts, ks);
    double mean = 0.0;
    for (double r : s.per_class_recall) mean += r / 3.0;
    CHECK(s.balanced_accuracy == doctest::Approx(mean).epsilon(1e-14));
    CHECK(s.balanced_accuracy == doctest::Approx(s.topk[0]).epsilon(1e-12));
  }
  SUBCASE("frequent/rare split at the median training count") {
    // counts 100,50,10,4: median 30, so classes 0,1 are frequent
    const ClassCounts train_counts({100, 50, 10, 4});
    std::vector<std::vector<double>> logits;
    std::vector<int> labels;
    auto add = [&](int label, int pred, int copies) {
      for (int i = 0; i < copies; ++i) {
        logits.push_back(one_hot(4, pred));
        labels.push_back(label);
      }
    };
    add(0, 0, 4);              // recall 1.0
    add(1, 1, 1);
    add(1, 0, 1);              // recall 0.5
    add(2, 2, 1);
    add(2, 0, 3);              // recall 0.25
    add(3, 0, 2);              // recall 0.0
    const std::vector<int> ks{1};
    const EvalSummary s = summarize(logits, labels, train_counts, ks);
    CHECK(s.frequent_recall == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(s.rare_recall == doctest::Approx(0.125).epsilon(1e-14));
    CHECK(s.balanced_accuracy == doctest::Approx(0.4375).epsilon(1e-14));
  }
  SUBCASE("absent classes drop out of the group means") {
    const ClassCounts train_counts({100, 50, 10, 4});
    std::vector<std::vector<double>> logits{one_hot(4, 0), one_hot(4, 2)};
    std::vector<int> labels{0, 2};
    const std::vector<int> ks{1};
    const EvalSummary s = summarize(logits, labels, train_counts, ks);
    CHECK(s.frequent_recall == 1.0);
    CHECK(s.rare_recall == 1.0);
    CHECK(s.balanced_accuracy == 1.0);
  }
}

TEST_CASE("default top-k list clips to the class count") {
  CHECK(default_topk(10) == std::vector<int>{1, 3, 5});
  CHECK(default_topk(4) == std::vector<int>{1, 3});
  CHECK(default_topk(2) == std::vector<int>{1});
}

TEST_CASE("summary serialization") {
  const ClassCounts train_counts({10, 5});
  const std::vector<std::vector<double>> logits{one_hot(2, 0)};
  const std::vector<int> labels{0};
  const std::vector<int> ks{1};
  const EvalSummary s = summarize(logits, labels, train_counts, ks);
  const nlohmann::ordered_json j = eval_summary_to_json(s);
  const std::string text = j.dump();

  SUBCASE("keys appear in a fixed order") {
    const std::vector<std::string> keys{
        "\"topk\"",           "\"per_class_recall\"", "\"balanced_accuracy\"",
        "\"frequent_recall\"", "\"rare_recall\"",      "\"confusion\""};
    std::size_t pos = 0;
    for (const std::string& key : keys) {
      const std::size_t at = text.find(key, pos);
      CHECK(at != std::string::npos);
      pos = at;
    }
  }
  SUBCASE("NaN serializes as null") {
    // class 1 never appears, so its recall is NaN
    CHECK(std::isnan(s.per_class_recall[1]));
    CHECK(j["per_class_recall"][1].is_null());
    CHECK(j["rare_recall"].is_null());
  }
  SUBCASE("values survive the round trip") {
    CHECK(j["topk"]["top1"] == 1.0);
    CHECK(j["balanced_accuracy"] == 1.0);
    CHECK(j["confusion"][0][0] == 1);
  }
}

TEST_CASE("model evaluation agrees across execution modes") {
  RandomSource data_rng(44);
  const Dataset data = synth_gaussian_blobs(ClassCounts({60, 30, 10}), 2,
                                            3.0, 1.0, data_rng);
  RandomSource init_rng(45);
  const ModelParams model = init_model(2, 3, 8, true, init_rng);
  const std::vector<int> ks = default_topk(3);
  const EvalSummary serial =
      evaluate_model(model, data, data.counts, ks, ExecMode::kSerial);
  const EvalSummary parallel =
      evaluate_model(model, data, data.counts, ks, ExecMode::kParallel);
  CHECK(serial.topk == parallel.topk);
  CHECK(serial.per_class_recall == parallel.per_class_recall);
  CHECK(serial.confusion == parallel.confusion);
  CHECK(serial.balanced_accuracy == parallel.balanced_accuracy);
}

TEST_CASE("feature dumps") {
  RandomSource data_rng(46);
  const Dataset data =
      synth_gaussian_blobs(ClassCounts({12, 6}), 2, 3.0, 1.0, data_rng);
  const fs::path path =
      fs::temp_directory_path() / "marginlab_test_features.csv";

  SUBCASE("a linear model dumps the raw inputs verbatim") {
    RandomSource init_rng(47);
    const ModelParams model = init_model(2, 2, 0, false, init_rng);
    dump_features(model, data, path);
    const Dataset back = load_csv_dataset(path);
    CHECK(back.labels == data.labels);
    CHECK(back.features == data.features);
  }
  SUBCASE("a hidden-layer model dumps the penultimate activations") {
    RandomSource init_rng(48);
    const ModelParams model = init_model(2, 2, 5, true, init_rng);
    dump_features(model, data, path);
    const Dataset back = load_csv_dataset(path);
    CHECK(back.num_features == 5);
    REQUIRE(back.size() == data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const std::vector<double> rep = penultimate(model, data.row(i));
      for (std::size_t f = 0; f < 5; ++f) {
        CHECK(back.row(i)[f] == rep[f]);
      }
    }
  }
}
