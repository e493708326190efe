#include "marginlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace marginlab {

namespace {

ClassCounts counts_from_labels(std::span<const int> labels) {
  if (labels.empty()) {
    throw std::invalid_argument("dataset: no samples");
  }
  int max_label = 0;
  for (int label : labels) {
    if (label < 0) throw std::invalid_argument("dataset: negative label");
    max_label = std::max(max_label, label);
  }
  std::vector<std::int64_t> counts(static_cast<std::size_t>(max_label) + 1, 0);
  for (int label : labels) ++counts[static_cast<std::size_t>(label)];
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw std::invalid_argument("dataset: class " + std::to_string(c) +
                                  " has no samples");
    }
  }
  return ClassCounts(std::move(counts));
}

}  // namespace

Dataset make_dataset(int num_features, std::vector<double> features,
                     std::vector<int> labels) {
  if (num_features < 1) {
    throw std::invalid_argument("dataset: need at least one feature");
  }
  if (features.size() !=
      labels.size() * static_cast<std::size_t>(num_features)) {
    throw std::invalid_argument("dataset: feature/label size mismatch");
  }
  require_finite(features, "dataset features");
  ClassCounts counts = counts_from_labels(labels);
  return Dataset{num_features, std::move(features), std::move(labels),
                 std::move(counts)};
}

namespace {

void check_profile(const ImbalanceProfile& profile) {
  if (profile.num_classes < 2) {
    throw std::invalid_argument("imbalance profile: need at least 2 classes");
  }
  if (profile.n_max < 1) {
    throw std::invalid_argument("imbalance profile: n_max must be >= 1");
  }
  if (profile.ratio < 1.0) {
    throw std::invalid_argument("imbalance profile: ratio must be >= 1");
  }
}

std::int64_t round_count(double value) {
  return std::max<std::int64_t>(1, std::llround(value));
}

}  // namespace

ClassCounts longtail_counts(const ImbalanceProfile& profile) {
  check_profile(profile);
  const int c = profile.num_classes;
  std::vector<std::int64_t> counts(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) {
    const double exponent = -static_cast<double>(j) / (c - 1);
    counts[static_cast<std::size_t>(j)] = round_count(
        static_cast<double>(profile.n_max) * std::pow(profile.ratio, exponent));
  }
  return ClassCounts(std::move(counts));
}

ClassCounts step_counts(const ImbalanceProfile& profile) {
  check_profile(profile);
  const int c = profile.num_classes;
  const int frequent = (c + 1) / 2;
  const std::int64_t low =
      round_count(static_cast<double>(profile.n_max) / profile.ratio);
  std::vector<std::int64_t> counts(static_cast<std::size_t>(c));
  for (int j = 0; j < c; ++j) {
    counts[static_cast<std::size_t>(j)] = j < frequent ? profile.n_max : low;
  }
  return ClassCounts(std::move(counts));
}

Dataset subsample_to_counts(const Dataset& data, const ClassCounts& target,
                            RandomSource& rng) {
  if (target.num_classes() != data.num_classes()) {
    throw std::invalid_argument("subsample: class count mismatch");
  }
  for (int c = 0; c < target.num_classes(); ++c) {
    if (target.at(c) > data.counts.at(c)) {
      throw std::invalid_argument("subsample: class " + std::to_string(c) +
                                  " has only " +
                                  std::to_string(data.counts.at(c)) +
                                  " samples, " + std::to_string(target.at(c)) +
                                  " requested");
    }
  }

  std::vector<std::size_t> selected;
  for (int c = 0; c < target.num_classes(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data.labels[i] == c) members.push_back(i);
    }
    // partial Fisher-Yates: the first `want` entries are a uniform subset
    const std::size_t want = static_cast<std::size_t>(target.at(c));
    for (std::size_t i = 0; i < want; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.next_index(members.size() - i));
      std::swap(members[i], members[j]);
    }
    selected.insert(selected.end(), members.begin(), members.begin() + want);
  }
  std::sort(selected.begin(), selected.end());

  std::vector<double> features;
  features.reserve(selected.size() *
                   static_cast<std::size_t>(data.num_features));
  std::vector<int> labels;
  labels.reserve(selected.size());
  for (std::size_t i : selected) {
    const auto row = data.row(i);
    features.insert(features.end(), row.begin(), row.end());
    labels.push_back(data.labels[i]);
  }
  return make_dataset(data.num_features, std::move(features),
                      std::move(labels));
}

Dataset synth_gaussian_blobs(const ClassCounts& counts, int dims,
                             double separation, double stddev,
                             RandomSource& rng) {
  if (dims < 2) {
    throw std::invalid_argument("synth_gaussian_blobs: dims must be >= 2");
  }
  if (dims > 2 && counts.num_classes() > dims) {
    throw std::invalid_argument(
        "synth_gaussian_blobs: simplex placement needs classes <= dims");
  }
  if (!(separation > 0.0)) {
    throw std::invalid_argument("synth_gaussian_blobs: separation must be > 0");
  }
  if (!(stddev >= 0.0)) {
    throw std::invalid_argument("synth_gaussian_blobs: stddev must be >= 0");
  }

  const int num_classes = counts.num_classes();
  std::vector<std::vector<double>> means(
      static_cast<std::size_t>(num_classes),
      std::vector<double>(static_cast<std::size_t>(dims), 0.0));
  if (dims == 2) {
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    for (int c = 0; c < num_classes; ++c) {
      const double angle = kTwoPi * c / num_classes;
      means[static_cast<std::size_t>(c)][0] = separation * std::cos(angle);
      means[static_cast<std::size_t>(c)][1] = separation * std::sin(angle);
    }
  } else {
    for (int c = 0; c < num_classes; ++c) {
      means[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)] =
          separation;
    }
  }

  std::vector<double> features;
  std::vector<int> labels;
  for (int c = 0; c < num_classes; ++c) {
    for (std::int64_t i = 0; i < counts.at(c); ++i) {
      for (int d = 0; d < dims; ++d) {
        features.push_back(rng.next_normal(
            means[static_cast<std::size_t>(c)][static_cast<std::size_t>(d)],
            stddev));
      }
      labels.push_back(c);
    }
  }
  return make_dataset(dims, std::move(features), std::move(labels));
}

namespace {

double parse_double_field(const std::string& field, std::size_t line_no,
                          const char* what) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(field, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("csv line " + std::to_string(line_no) +
                             ": non-numeric " + what + " '" + field + "'");
  }
  if (pos != field.size()) {
    throw std::runtime_error("csv line " + std::to_string(line_no) +
                             ": non-numeric " + what + " '" + field + "'");
  }
  if (!std::isfinite(value)) {
    throw std::runtime_error("csv line " + std::to_string(line_no) +
                             ": non-finite " + what);
  }
  return value;
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path, bool has_header) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open '" + path.string() + "'");
  }
  std::vector<double> features;
  std::vector<int> labels;
  int num_features = -1;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (has_header && line_no == 1) continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");

    if (fields.size() < 2) {
      throw std::runtime_error("csv line " + std::to_string(line_no) +
                               ": expected 'label,f1,...', got " +
                               std::to_string(fields.size()) + " field(s)");
    }
    if (num_features < 0) {
      num_features = static_cast<int>(fields.size()) - 1;
    } else if (static_cast<int>(fields.size()) - 1 != num_features) {
      throw std::runtime_error(
          "csv line " + std::to_string(line_no) + ": expected " +
          std::to_string(num_features) + " feature(s), got " +
          std::to_string(fields.size() - 1));
    }

    const double label_value = parse_double_field(fields[0], line_no, "label");
    const int label = static_cast<int>(label_value);
    if (static_cast<double>(label) != label_value || label < 0) {
      throw std::runtime_error("csv line " + std::to_string(line_no) +
                               ": label must be a nonnegative integer");
    }
    labels.push_back(label);
    for (std::size_t f = 1; f < fields.size(); ++f) {
      features.push_back(parse_double_field(fields[f], line_no, "feature"));
    }
  }
  if (labels.empty()) {
    throw std::runtime_error("csv '" + path.string() + "': no rows");
  }
  return make_dataset(num_features, std::move(features), std::move(labels));
}

void save_csv_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot write '" + path.string() + "'");
  }
  char buf[40];
  for (std::size_t i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (double v : data.row(i)) {
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
