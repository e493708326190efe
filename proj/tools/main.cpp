#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "marginlab/dataset.hpp"
#include "marginlab/evaluation.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/numerics.hpp"
#include "marginlab/reweighting.hpp"
#include "marginlab/sweeps.hpp"
#include "marginlab/trainer.hpp"

namespace ml = marginlab;
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kOutputRootEnv = "MARGINLAB_OUTPUT_ROOT";

std::string fmt7(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.7g", v);
  return buf;
}

fs::path resolve_output(const fs::path& p) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root) {
    return fs::path(root) / p;
  }
  return p;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("'" + path.string() + "': " + e.what());
  }
}

// --- strict experiment-config schema -------------------------------------

[[noreturn]] void config_fail(const std::string& path,
                              const std::string& message) {
  throw std::runtime_error("config " + path + ": " + message);
}

void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> known) {
  if (!obj.is_object()) config_fail(path, "expected an object");
  for (const auto& item : obj.items()) {
    if (std::none_of(known.begin(), known.end(), [&](const char* k) {
          return item.key() == k;
        })) {
      config_fail(path + "." + item.key(), "unknown key");
    }
  }
}

const json* find_key(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

double get_double(const json& obj, const std::string& path, const char* key,
                  double fallback) {
  const json* v = find_key(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number()) config_fail(path + "." + key, "expected a number");
  return v->get<double>();
}

std::int64_t get_int(const json& obj, const std::string& path, const char* key,
                     std::int64_t fallback) {
  const json* v = find_key(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_number_integer()) {
    config_fail(path + "." + key, "expected an integer");
  }
  return v->get<std::int64_t>();
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool fallback) {
  const json* v = find_key(obj, key);
  if (v == nullptr) return fallback;
  if (!v->is_boolean()) config_fail(path + "." + key, "expected a boolean");
  return v->get<bool>();
}

std::string get_string(const json& obj, const std::string& path,
                       const char* key) {
  const json* v = find_key(obj, key);
  if (v == nullptr) config_fail(path + "." + key, "missing required key");
  if (!v->is_string()) config_fail(path + "." + key, "expected a string");
  return v->get<std::string>();
}

struct DataSpec {
  bool from_profile = false;
  ml::ImbalanceProfile profile;
  int dims = 2;
  double separation = 3.0;
  double stddev = 1.0;
  std::int64_t test_per_class = 0;  // 0: evaluate on the training set
  fs::path csv;
  fs::path test_csv;
  bool has_header = false;
};

struct Experiment {
  DataSpec data;
  ml::LossVariant variant = ml::LossVariant::kCrossEntropy;
  double scale = 30.0;
  double lambda = 0.5;
  double max_margin = 0.5;
  ml::MarginMode margin_mode = ml::MarginMode::kNormalized;
  bool use_target_margin = true;
  bool scale_all_logits = true;
  ml::ReweightConfig reweight;
  ml::TrainConfig train;
  fs::path output_dir;
  std::vector<std::uint64_t> seeds;
};

ml::LossVariant parse_variant(const std::string& name,
                              const std::string& path) {
  if (name == "ce") return ml::LossVariant::kCrossEntropy;
  if (name == "ldam") return ml::LossVariant::kLdam;
  if (name == "elm") return ml::LossVariant::kElm;
  config_fail(path, "expected one of \"ce\", \"ldam\", \"elm\"");
}

ml::MarginMode parse_margin_mode(const std::string& name,
                                 const std::string& path) {
  if (name == "literal") return ml::MarginMode::kLiteral;
  if (name == "normalized") return ml::MarginMode::kNormalized;
  config_fail(path, "expected \"literal\" or \"normalized\"");
}

DataSpec parse_data(const json& obj) {
  check_keys(obj, "data", {"profile", "csv", "test_csv", "has_header"});
  DataSpec spec;
  const json* profile = find_key(obj, "profile");
  const json* csv = find_key(obj, "csv");
  if ((profile != nullptr) == (csv != nullptr)) {
    config_fail("data", "give exactly one of \"profile\" or \"csv\"");
  }
  if (profile != nullptr) {
    spec.from_profile = true;
    const std::string p = "data.profile";
    check_keys(*profile, p,
               {"kind", "classes", "n_max", "ratio", "dims", "separation",
                "stddev", "test_per_class"});
    const std::string kind = get_string(*profile, p, "kind");
    if (kind == "longtail") {
      spec.profile.kind = ml::ImbalanceKind::kLongTail;
    } else if (kind == "step") {
      spec.profile.kind = ml::ImbalanceKind::kStep;
    } else {
      config_fail(p + ".kind", "expected \"longtail\" or \"step\"");
    }
    spec.profile.num_classes =
        static_cast<int>(get_int(*profile, p, "classes", 10));
    spec.profile.n_max = get_int(*profile, p, "n_max", 5000);
    spec.profile.ratio = get_double(*profile, p, "ratio", 100.0);
    spec.dims = static_cast<int>(get_int(*profile, p, "dims", 2));
    spec.separation = get_double(*profile, p, "separation", 3.0);
    spec.stddev = get_double(*profile, p, "stddev", 1.0);
    spec.test_per_class = get_int(*profile, p, "test_per_class", 0);
    if (spec.profile.num_classes < 2) config_fail(p + ".classes", "need >= 2");
    if (spec.profile.n_max < 1) config_fail(p + ".n_max", "need >= 1");
    if (!(spec.profile.ratio >= 1.0)) config_fail(p + ".ratio", "need >= 1");
    if (spec.dims < 2) config_fail(p + ".dims", "need >= 2");
    if (!(spec.separation > 0.0)) config_fail(p + ".separation", "need > 0");
    if (!(spec.stddev > 0.0)) config_fail(p + ".stddev", "need > 0");
    if (spec.test_per_class < 0) {
      config_fail(p + ".test_per_class", "need >= 0");
    }
  } else {
    spec.csv = get_string(obj, "data", "csv");
    if (find_key(obj, "test_csv") != nullptr) {
      spec.test_csv = get_string(obj, "data", "test_csv");
    }
    spec.has_header = get_bool(obj, "data", "has_header", false);
  }
  return spec;
}

Experiment parse_experiment(const json& root) {
  check_keys(root, "(top level)",
             {"data", "loss", "reweight", "train", "output_dir", "seeds"});
  Experiment exp;

  const json* data = find_key(root, "data");
  if (data == nullptr) config_fail("data", "missing required section");
  exp.data = parse_data(*data);

  if (const json* loss = find_key(root, "loss")) {
    const std::string p = "loss";
    check_keys(*loss, p,
               {"variant", "scale", "lambda", "max_margin", "margin_mode",
                "use_target_margin", "scale_all_logits"});
    exp.variant = parse_variant(get_string(*loss, p, "variant"), p + ".variant");
    exp.scale = get_double(*loss, p, "scale", exp.scale);
    exp.lambda = get_double(*loss, p, "lambda", exp.lambda);
    exp.max_margin = get_double(*loss, p, "max_margin", exp.max_margin);
    if (const json* mode = find_key(*loss, "margin_mode")) {
      if (!mode->is_string()) config_fail(p + ".margin_mode", "expected a string");
      exp.margin_mode =
          parse_margin_mode(mode->get<std::string>(), p + ".margin_mode");
    }
    exp.use_target_margin =
        get_bool(*loss, p, "use_target_margin", exp.use_target_margin);
    exp.scale_all_logits =
        get_bool(*loss, p, "scale_all_logits", exp.scale_all_logits);
    if (!(exp.scale > 0.0)) config_fail(p + ".scale", "need > 0");
    if (!(exp.lambda >= 0.0)) config_fail(p + ".lambda", "need >= 0");
    if (!(exp.max_margin > 0.0)) config_fail(p + ".max_margin", "need > 0");
  }

  if (const json* rw = find_key(root, "reweight")) {
    const std::string p = "reweight";
    check_keys(*rw, p, {"beta", "defer_epoch"});
    exp.reweight.beta = get_double(*rw, p, "beta", exp.reweight.beta);
    exp.reweight.defer_epoch = static_cast<int>(
        get_int(*rw, p, "defer_epoch", exp.reweight.defer_epoch));
    if (!(exp.reweight.beta >= 0.0 && exp.reweight.beta < 1.0)) {
      config_fail(p + ".beta", "need a value in [0, 1)");
    }
    if (exp.reweight.defer_epoch < 0) config_fail(p + ".defer_epoch", "need >= 0");
  }

  if (const json* tr = find_key(root, "train")) {
    const std::string p = "train";
    check_keys(*tr, p,
               {"epochs", "batch_size", "base_lr", "momentum", "weight_decay",
                "warmup_epochs", "milestones", "decay_factor", "hidden_dim",
                "cosine"});
    ml::TrainConfig& c = exp.train;
    c.epochs = static_cast<int>(get_int(*tr, p, "epochs", c.epochs));
    c.batch_size = static_cast<int>(get_int(*tr, p, "batch_size", c.batch_size));
    c.base_lr = get_double(*tr, p, "base_lr", c.base_lr);
    c.momentum = get_double(*tr, p, "momentum", c.momentum);
    c.weight_decay = get_double(*tr, p, "weight_decay", c.weight_decay);
    c.warmup_epochs =
        static_cast<int>(get_int(*tr, p, "warmup_epochs", c.warmup_epochs));
    if (const json* ms = find_key(*tr, "milestones")) {
      if (!ms->is_array()) config_fail(p + ".milestones", "expected an array");
      c.milestones.clear();
      for (std::size_t i = 0; i < ms->size(); ++i) {
        const json& e = (*ms)[i];
        if (!e.is_number_integer()) {
          config_fail(p + ".milestones[" + std::to_string(i) + "]",
                      "expected an integer");
        }
        c.milestones.push_back(e.get<int>());
      }
    }
    c.decay_factor = get_double(*tr, p, "decay_factor", c.decay_factor);
    c.hidden_dim = static_cast<int>(get_int(*tr, p, "hidden_dim", c.hidden_dim));
    c.cosine = get_bool(*tr, p, "cosine", c.cosine);
  }

  const json* out = find_key(root, "output_dir");
  if (out == nullptr) config_fail("output_dir", "missing required key");
  if (!out->is_string()) config_fail("output_dir", "expected a string");
  exp.output_dir = out->get<std::string>();

  const json* seeds = find_key(root, "seeds");
  if (seeds == nullptr) config_fail("seeds", "missing required key");
  if (!seeds->is_array() || seeds->empty()) {
    config_fail("seeds", "expected a non-empty array");
  }
  for (std::size_t i = 0; i < seeds->size(); ++i) {
    const json& e = (*seeds)[i];
    if (!e.is_number_integer() ||
        (e.is_number_integer() && !e.is_number_unsigned() &&
         e.get<std::int64_t>() < 0)) {
      config_fail("seeds[" + std::to_string(i) + "]",
                  "expected a nonnegative integer");
    }
    exp.seeds.push_back(e.get<std::uint64_t>());
  }
  return exp;
}

// --- dataset assembly ------------------------------------------------------

// Streams 1000/1001 of the run seed feed train/test generation so a run is
// reproducible from the seed alone and identical across loss settings.
constexpr std::uint64_t kTrainDataStream = 1000;
constexpr std::uint64_t kTestDataStream = 1001;

ml::ClassCounts profile_counts(const ml::ImbalanceProfile& profile) {
  return profile.kind == ml::ImbalanceKind::kStep ? ml::step_counts(profile)
                                                  : ml::longtail_counts(profile);
}

ml::Dataset generate_train_set(const DataSpec& spec, std::uint64_t seed) {
  ml::RandomSource rng(ml::RandomSource::derive_seed(seed, kTrainDataStream));
  return ml::synth_gaussian_blobs(profile_counts(spec.profile), spec.dims,
                                  spec.separation, spec.stddev, rng);
}

ml::Dataset generate_test_set(const DataSpec& spec, std::uint64_t seed) {
  ml::ClassCounts balanced(std::vector<std::int64_t>(
      static_cast<std::size_t>(spec.profile.num_classes),
      spec.test_per_class));
  ml::RandomSource rng(ml::RandomSource::derive_seed(seed, kTestDataStream));
  return ml::synth_gaussian_blobs(balanced, spec.dims, spec.separation,
                                  spec.stddev, rng);
}

ml::LossConfig build_loss_config(const Experiment& exp,
                                 const ml::ClassCounts& counts) {
  ml::LossConfig cfg;
  cfg.variant = exp.variant;
  cfg.scale = exp.scale;
  cfg.lambda = exp.lambda;
  cfg.use_target_margin = exp.use_target_margin;
  cfg.scale_all_logits = exp.scale_all_logits;
  if (exp.variant != ml::LossVariant::kCrossEntropy) {
    cfg.margins = ml::compute_margin_table(counts, exp.max_margin,
                                           exp.margin_mode);
  }
  return cfg;
}

// --- seed-averaged summary ---------------------------------------------------

double sample_stddev(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  double acc = 0.0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

ordered_json metric_stats(const std::vector<double>& values) {
  const double mean =
      std::accumulate(values.begin(), values.end(), 0.0) /
      static_cast<double>(values.size());
  ordered_json j;
  j["values"] = values;
  j["mean"] = mean;
  j["stddev"] = sample_stddev(values, mean);
  return j;
}

// Mean recall over the two least-populated training classes (ties resolved
// toward the larger class index, which is the rarer position in generated
// profiles).
double two_rarest_recall(const ml::EvalSummary& summary,
                         const ml::ClassCounts& counts) {
  std::vector<int> order(static_cast<std::size_t>(counts.num_classes()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (counts.at(a) != counts.at(b)) return counts.at(a) < counts.at(b);
    return a > b;
  });
  return (summary.per_class_recall[static_cast<std::size_t>(order[0])] +
          summary.per_class_recall[static_cast<std::size_t>(order[1])]) /
         2.0;
}

int cmd_train(const fs::path& config_path) {
  const json root = read_json_file(config_path);
  Experiment exp = parse_experiment(root);
  {
    ml::TrainConfig probe = exp.train;
    probe.seed = exp.seeds.front();
    ml::validate_train_config(probe);
  }
  const fs::path out_dir = resolve_output(exp.output_dir);

  std::optional<ml::Dataset> csv_train;
  std::optional<ml::Dataset> csv_test;
  if (!exp.data.from_profile) {
    csv_train = ml::load_csv_dataset(exp.data.csv, exp.data.has_header);
    if (!exp.data.test_csv.empty()) {
      csv_test = ml::load_csv_dataset(exp.data.test_csv, exp.data.has_header);
    }
  }

  std::vector<int> ks;
  std::vector<std::vector<double>> topk_values;
  std::vector<double> balanced_values;
  std::vector<double> frequent_values;
  std::vector<double> rare_values;
  std::vector<double> rare2_values;

  for (std::uint64_t seed : exp.seeds) {
    ml::Dataset train_set = exp.data.from_profile
                                ? generate_train_set(exp.data, seed)
                                : *csv_train;
    std::optional<ml::Dataset> test_set;
    if (exp.data.from_profile) {
      if (exp.data.test_per_class > 0) {
        test_set = generate_test_set(exp.data, seed);
      }
    } else if (csv_test) {
      test_set = *csv_test;
    }

    ml::TrainConfig cfg = exp.train;
    cfg.seed = seed;
    cfg.loss = build_loss_config(exp, train_set.counts);
    cfg.reweight = exp.reweight;

    auto [model, report] =
        ml::train_run(train_set, test_set ? &*test_set : nullptr, cfg);

    const fs::path seed_dir = out_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(seed_dir);
    write_text_file(seed_dir / "report.json",
                    ml::run_report_to_json(report).dump(2) + "\n");
    write_text_file(seed_dir / "eval.json",
                    ml::eval_summary_to_json(report.final_eval).dump(2) + "\n");
    ml::save_model(model, train_set.counts, seed_dir / "model.json");
    ml::dump_features(model, test_set ? *test_set : train_set,
                      seed_dir / "features.csv");

    const ml::EvalSummary& ev = report.final_eval;
    if (ks.empty()) {
      ks = ev.ks;
      topk_values.resize(ks.size());
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      topk_values[i].push_back(ev.topk[i]);
    }
    balanced_values.push_back(ev.balanced_accuracy);
    frequent_values.push_back(ev.frequent_recall);
    rare_values.push_back(ev.rare_recall);
    rare2_values.push_back(two_rarest_recall(ev, train_set.counts));

    std::cout << "seed " << seed << ": top1 " << fmt7(ev.topk.front())
              << ", balanced " << fmt7(ev.balanced_accuracy) << ", rare "
              << fmt7(ev.rare_recall) << ", two-rarest "
              << fmt7(rare2_values.back()) << '\n';
  }

  ordered_json summary;
  summary["seeds"] = exp.seeds;
  ordered_json metrics;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    metrics["top" + std::to_string(ks[i])] = metric_stats(topk_values[i]);
  }
  metrics["balanced_accuracy"] = metric_stats(balanced_values);
  metrics["frequent_recall"] = metric_stats(frequent_values);
  metrics["rare_recall"] = metric_stats(rare_values);
  metrics["two_rarest_recall"] = metric_stats(rare2_values);
  summary["metrics"] = metrics;
  write_text_file(out_dir / "summary.json", summary.dump(2) + "\n");

  const double rare2_mean =
      std::accumulate(rare2_values.begin(), rare2_values.end(), 0.0) /
      static_cast<double>(rare2_values.size());
  std::cout << exp.seeds.size() << " seed(s) done; mean balanced accuracy "
            << fmt7(metrics["balanced_accuracy"]["mean"].get<double>())
            << ", mean two-rarest recall " << fmt7(rare2_mean) << '\n'
            << "wrote " << (out_dir / "summary.json").string() << '\n';
  return 0;
}

int cmd_gen_data(const std::string& kind, int classes, std::int64_t n_max,
                 double ratio, int dims, double separation, double stddev,
                 std::uint64_t seed, const fs::path& out) {
  ml::ImbalanceProfile profile;
  profile.kind =
      kind == "step" ? ml::ImbalanceKind::kStep : ml::ImbalanceKind::kLongTail;
  profile.num_classes = classes;
  profile.n_max = n_max;
  profile.ratio = ratio;
  const ml::ClassCounts counts = profile_counts(profile);

  ml::RandomSource rng(ml::RandomSource::derive_seed(seed, kTrainDataStream));
  const ml::Dataset data =
      ml::synth_gaussian_blobs(counts, dims, separation, stddev, rng);

  const fs::path dir = resolve_output(out);
  fs::create_directories(dir);
  ml::save_csv_dataset(data, dir / "dataset.csv");

  ordered_json manifest;
  manifest["kind"] = kind;
  manifest["classes"] = classes;
  manifest["n_max"] = n_max;
  manifest["ratio"] = ratio;
  manifest["dims"] = dims;
  manifest["separation"] = separation;
  manifest["stddev"] = stddev;
  manifest["seed"] = seed;
  manifest["counts"] = counts.values();
  write_text_file(dir / "counts.json", manifest.dump(2) + "\n");

  std::cout << "wrote " << data.size() << " samples over " << classes
            << " classes to " << (dir / "dataset.csv").string() << '\n'
            << "counts:";
  for (std::int64_t c : counts.values()) std::cout << ' ' << c;
  std::cout << '\n';
  return 0;
}

int cmd_margins(const std::string& counts_arg, const fs::path& manifest,
                double max_margin) {
  std::vector<std::int64_t> raw;
  if (!counts_arg.empty()) {
    std::string token;
    std::istringstream stream(counts_arg);
    while (std::getline(stream, token, ',')) {
      try {
        std::size_t used = 0;
        const long long v = std::stoll(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
        raw.push_back(v);
      } catch (const std::exception&) {
        throw std::runtime_error("--counts: '" + token +
                                 "' is not an integer");
      }
    }
  } else {
    const json j = read_json_file(manifest);
    const json* arr = j.is_array() ? &j : find_key(j, "counts");
    if (arr == nullptr || !arr->is_array()) {
      throw std::runtime_error("'" + manifest.string() +
                               "': expected a counts array or a manifest "
                               "with a \"counts\" key");
    }
    for (const json& e : *arr) {
      if (!e.is_number_integer()) {
        throw std::runtime_error("'" + manifest.string() +
                                 "': counts must be integers");
      }
      raw.push_back(e.get<std::int64_t>());
    }
  }

  const ml::ClassCounts counts(std::move(raw));
  const ml::MarginTable literal =
      ml::compute_margin_table(counts, max_margin, ml::MarginMode::kLiteral);
  const ml::MarginTable normalized =
      ml::compute_margin_table(counts, max_margin, ml::MarginMode::kNormalized);

  std::cout << "max margin M = " << fmt7(max_margin) << '\n';
  std::printf("%5s %10s %12s %12s\n", "class", "count", "literal",
              "normalized");
  for (int c = 0; c < counts.num_classes(); ++c) {
    std::printf("%5d %10lld %12s %12s\n", c,
                static_cast<long long>(counts.at(c)),
                fmt7(literal.deltas[static_cast<std::size_t>(c)]).c_str(),
                fmt7(normalized.deltas[static_cast<std::size_t>(c)]).c_str());
  }
  return 0;
}

int cmd_check_equivalence(int trials, std::uint64_t seed,
                          bool printed_literal) {
  const ml::EquivalenceReport report =
      ml::run_equivalence_sweep(trials, seed, !printed_literal);
  std::cout << "form-equivalence sweep: " << report.trials << " trials, seed "
            << seed << ", "
            << (printed_literal
                    ? "printed-literal convention (s on margin terms only)"
                    : "all-logits-scaled convention")
            << '\n';
  std::cout << "  ldam  max |ce-form - softplus-form|: "
            << fmt7(report.max_ldam_gap) << '\n';
  std::cout << "  elm   max |ce-form - softplus-form|: "
            << fmt7(report.max_elm_gap) << '\n';
  std::cout << "  lmsce max |decomposition - ce|:      "
            << fmt7(report.max_lmsce_gap) << '\n';
  if (printed_literal) {
    std::cout << "conventions differ by design; discrepancies reported, "
                 "not asserted\n";
    return 0;
  }
  const bool ok = report.passes();
  std::cout << "result: " << (ok ? "PASS" : "FAIL") << " (bounds "
            << fmt7(ml::kFormGapBound) << " / " << fmt7(ml::kFormGapBound)
            << " / " << fmt7(ml::kDecomposeGapBound) << ")\n";
  return ok ? 0 : 2;
}

int cmd_check_gradients(int trials, std::uint64_t seed, double h,
                        const std::string& variant_filter) {
  std::vector<ml::LossVariant> variants;
  std::string names;
  if (variant_filter.empty()) {
    variants = {ml::LossVariant::kCrossEntropy, ml::LossVariant::kLdam,
                ml::LossVariant::kElm};
    names = "ce ldam elm";
  } else {
    variants = {parse_variant(variant_filter, "--variant")};
    names = variant_filter;
  }

  const ml::GradientAuditReport report =
      ml::run_gradient_audit(trials, seed, h, variants);
  std::cout << "gradient audit: " << report.trials << " inputs, seed " << seed
            << ", h = " << fmt7(h) << ", variants: " << names << '\n';
  std::cout << "  near-tie redraws: " << report.redraws << '\n';
  std::cout << "  worst relative error: " << fmt7(report.worst_rel_error)
            << " (" << report.worst_variant << ")\n";

  bool ok = report.passes();
  if (variant_filter.empty()) {
    const double model_worst = ml::model_gradient_audit(seed, h);
    std::cout << "model-parameter audit: worst relative error "
              << fmt7(model_worst) << '\n';
    ok = ok && model_worst <= 1e-3;
    std::cout << "result: " << (ok ? "PASS" : "FAIL") << " (bounds "
              << fmt7(ml::kGradientRelBound) << ", 0.001)\n";
  } else {
    std::cout << "result: " << (ok ? "PASS" : "FAIL") << " (bound "
              << fmt7(ml::kGradientRelBound) << ")\n";
  }
  return ok ? 0 : 2;
}

int cmd_eval(const fs::path& model_path, const fs::path& data_path,
             bool has_header, const fs::path& out,
             const fs::path& features_out) {
  auto [model, counts] = ml::load_model(model_path);
  const ml::Dataset data = ml::load_csv_dataset(data_path, has_header);
  if (data.num_features != model.input_dim) {
    throw std::runtime_error("data has " + std::to_string(data.num_features) +
                             " features but the model expects " +
                             std::to_string(model.input_dim));
  }
  if (data.num_classes() > model.num_classes) {
    throw std::runtime_error("data labels exceed the model's " +
                             std::to_string(model.num_classes) + " classes");
  }

  const std::vector<int> ks = ml::default_topk(model.num_classes);
  const ml::EvalSummary summary = ml::evaluate_model(model, data, counts, ks);
  const std::string text = ml::eval_summary_to_json(summary).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    const fs::path path = resolve_output(out);
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_text_file(path, text);
    std::cout << "top1 " << fmt7(summary.topk.front()) << ", balanced "
              << fmt7(summary.balanced_accuracy) << ", rare "
              << fmt7(summary.rare_recall) << '\n'
              << "wrote " << path.string() << '\n';
  }
  if (!features_out.empty()) {
    const fs::path path = resolve_output(features_out);
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    ml::dump_features(model, data, path);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "marginlab: margin losses, reweighting schedules, and a deterministic "
      "trainer for class-imbalanced classification"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand(
      "gen-data", "Generate an imbalanced Gaussian-blob dataset "
                  "(CSV plus counts manifest)");
  std::string gd_kind = "longtail";
  int gd_classes = 10;
  std::int64_t gd_nmax = 5000;
  double gd_ratio = 100.0;
  int gd_dims = 2;
  double gd_separation = 3.0;
  double gd_stddev = 1.0;
  std::uint64_t gd_seed = 1;
  std::string gd_out = ".";
  gen->add_option("--kind", gd_kind, "Count profile: longtail or step")
      ->check(CLI::IsMember({"longtail", "step"}));
  gen->add_option("--classes", gd_classes, "Number of classes");
  gen->add_option("--nmax", gd_nmax, "Samples in the most frequent class");
  gen->add_option("--ratio", gd_ratio, "Max count over min count");
  gen->add_option("--dims", gd_dims, "Feature dimensions");
  gen->add_option("--separation", gd_separation, "Distance of blob means");
  gen->add_option("--stddev", gd_stddev, "Per-class standard deviation");
  gen->add_option("--seed", gd_seed, "Generator seed");
  gen->add_option("--out", gd_out, "Output directory");

  auto* train = app.add_subcommand(
      "train", "Train per the JSON experiment config; writes per-seed "
               "reports and a seed-averaged summary");
  std::string tr_config;
  train->add_option("--config", tr_config, "Experiment config JSON")
      ->required();

  auto* eval = app.add_subcommand(
      "eval", "Evaluate a saved model on a CSV dataset");
  std::string ev_model;
  std::string ev_data;
  std::string ev_out;
  std::string ev_features;
  bool ev_header = false;
  eval->add_option("--model", ev_model, "Model JSON from train")->required();
  eval->add_option("--data", ev_data, "Dataset CSV")->required();
  eval->add_flag("--has-header", ev_header, "Skip the first CSV line");
  eval->add_option("--out", ev_out, "Write the summary JSON here instead of stdout");
  eval->add_option("--features", ev_features,
                   "Also dump penultimate features to this CSV");

  auto* eq = app.add_subcommand(
      "check-equivalence",
      "Randomized agreement sweep between the cross-entropy and softplus "
      "forms of each loss");
  int eq_trials = 100000;
  std::uint64_t eq_seed = 42;
  bool eq_literal = false;
  eq->add_option("--trials", eq_trials, "Random draws");
  eq->add_option("--seed", eq_seed, "Sweep seed");
  eq->add_flag("--printed-literal-scale", eq_literal,
               "Leave non-target logits unscaled and report (not assert) "
               "the resulting gap");

  auto* gr = app.add_subcommand(
      "check-gradients",
      "Finite-difference audit of the analytic loss gradients and the "
      "end-to-end training path");
  int gr_trials = 10000;
  std::uint64_t gr_seed = 42;
  double gr_h = 1e-5;
  std::string gr_variant;
  gr->set_help_flag("--help", "Print this help message and exit");
  gr->add_option("--trials", gr_trials, "Random inputs");
  gr->add_option("--seed", gr_seed, "Audit seed");
  gr->add_option("--h", gr_h, "Central-difference step");
  gr->add_option("--variant", gr_variant, "Audit one variant only")
      ->check(CLI::IsMember({"ce", "ldam", "elm"}));

  auto* mg = app.add_subcommand(
      "margins", "Print the per-class margin table for given counts");
  std::string mg_counts;
  std::string mg_manifest;
  double mg_max = 0.5;
  mg->add_option("--counts", mg_counts, "Comma-separated class counts");
  mg->add_option("--manifest", mg_manifest,
                 "JSON manifest holding a \"counts\" array");
  mg->add_option("--max-margin", mg_max, "Margin constant M");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) {
      return cmd_gen_data(gd_kind, gd_classes, gd_nmax, gd_ratio, gd_dims,
                          gd_separation, gd_stddev, gd_seed, gd_out);
    }
    if (*train) return cmd_train(tr_config);
    if (*eval) return cmd_eval(ev_model, ev_data, ev_header, ev_out, ev_features);
    if (*eq) return cmd_check_equivalence(eq_trials, eq_seed, eq_literal);
    if (*gr) return cmd_check_gradients(gr_trials, gr_seed, gr_h, gr_variant);
    if (*mg) {
      if (mg_counts.empty() == mg_manifest.empty()) {
        throw std::runtime_error(
            "margins: give exactly one of --counts or --manifest");
      }
      return cmd_margins(mg_counts, mg_manifest, mg_max);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
