// Copyright 2026 The PredProp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "predprop/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "predprop/errors.hpp"
#include "predprop/rng.hpp"

namespace predprop {

namespace {

std::string format_double(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

double parse_double(const std::string& cell, std::size_t line_number) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  // Tolerate surrounding spaces.
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' || *(end - 1) == '\r')) {
    --end;
  }
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end || begin == end) {
    std::ostringstream os;
    os << "non-numeric cell '" << cell << "' at line " << line_number;
    throw ParseError(os.str(), line_number, /*offset_is_line=*/true);
  }
  return value;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

Matrix one_hot(const std::vector<int>& classes, int num_classes) {
  Matrix labels = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), num_classes);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    labels(static_cast<Eigen::Index>(i), classes[i]) = 1.0;
  }
  return labels;
}

std::vector<std::string> numbered_names(const std::string& prefix, int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back(prefix + std::to_string(i));
  return names;
}

}  // namespace

void Dataset::validate() const {
  if (!all_finite(features) || (has_labels() && !all_finite(labels)) ||
      (has_factors() && !all_finite(factors))) {
    throw NumericalError("dataset contains non-finite values");
  }
  if (has_labels()) {
    if (labels.rows() != features.rows()) {
      throw DimensionError("label rows do not match feature rows");
    }
    for (Eigen::Index r = 0; r < labels.rows(); ++r) {
      if (std::fabs(labels.row(r).sum() - 1.0) > 1e-9) {
        std::ostringstream os;
        os << "label row " << r << " is not one-hot (sum != 1)";
        throw ConfigError(os.str());
      }
    }
  }
  if (has_factors() && factors.rows() != features.rows()) {
    throw DimensionError("factor rows do not match feature rows");
  }
}

std::pair<Dataset, Dataset> Dataset::split(int n_head) const {
  if (n_head < 0 || n_head > size()) throw DimensionError("split point out of range");
  auto take = [&](int begin, int count) {
    Dataset part;
    part.features = features.middleRows(begin, count);
    if (has_labels()) part.labels = labels.middleRows(begin, count);
    if (has_factors()) part.factors = factors.middleRows(begin, count);
    part.feature_names = feature_names;
    part.label_names = label_names;
    part.factor_names = factor_names;
    part.provenance = provenance;
    return part;
  };
  return {take(0, n_head), take(n_head, size() - n_head)};
}

Dataset gen_xor(int n, double noise_sigma, std::uint64_t seed) {
  if (n < 4) throw ConfigError("gen_xor needs n >= 4");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be non-negative");
  Rng rng(mix_seed(seed, 0x08f0408ULL));
  static const double corners[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  Matrix features(n, 2);
  std::vector<int> classes(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const auto& corner = corners[i % 4];
    const double x = corner[0] + noise_sigma * rng.normal();
    const double y = corner[1] + noise_sigma * rng.normal();
    features(i, 0) = x;
    features(i, 1) = y;
    const int rx = x > 0.5 ? 1 : 0;
    const int ry = y > 0.5 ? 1 : 0;
    classes[static_cast<std::size_t>(i)] = rx ^ ry;
  }
  Dataset ds;
  ds.features = std::move(features);
  ds.labels = one_hot(classes, 2);
  ds.feature_names = numbered_names("x_", 2);
  ds.label_names = numbered_names("y_", 2);
  std::ostringstream prov;
  prov << "{\"generator\":\"xor\",\"n\":" << n << ",\"noise_sigma\":" << noise_sigma
       << ",\"seed\":" << seed << "}";
  ds.provenance = prov.str();
  ds.validate();
  return ds;
}

Dataset gen_gaussian_clusters(int k, int d, int n_per_cluster, double separation,
                              double sigma, std::uint64_t seed) {
  if (k < 1 || d < 1 || n_per_cluster < 1) {
    throw ConfigError("gen_gaussian_clusters needs k, d, n_per_cluster >= 1");
  }
  if (separation <= 0.0) throw ConfigError("separation must be positive");
  if (sigma < 0.0) throw ConfigError("sigma must be non-negative");
  Rng rng(mix_seed(seed, 0xc1a5375ULL));

  // Rejection-sampled means inside a box that grows with k; a run of failed
  // attempts means the packing is infeasible at this separation.
  const double box = separation * (1.0 + std::pow(static_cast<double>(k), 1.0 / d));
  std::vector<Vector> means;
  const int max_attempts = 1000;
  for (int c = 0; c < k; ++c) {
    bool placed = false;
    for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
      Vector candidate(d);
      for (int i = 0; i < d; ++i) candidate[i] = rng.uniform(0.0, box);
      bool ok = true;
      for (const auto& mean : means) {
        if ((candidate - mean).norm() < separation) {
          ok = false;
          break;
        }
      }
      if (ok) {
        means.push_back(std::move(candidate));
        placed = true;
      }
    }
    if (!placed) {
      std::ostringstream os;
      os << "could not place " << k << " cluster means at separation " << separation;
      throw ConfigError(os.str());
    }
  }

  const int n = k * n_per_cluster;
  Matrix features(n, d);
  std::vector<int> classes(static_cast<std::size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const int c = i % k;  // interleaved so contiguous splits stay balanced
    for (int j = 0; j < d; ++j) {
      features(i, j) = means[static_cast<std::size_t>(c)][j] + sigma * rng.normal();
    }
    classes[static_cast<std::size_t>(i)] = c;
  }
  Dataset ds;
  ds.features = std::move(features);
  ds.labels = one_hot(classes, k);
  ds.feature_names = numbered_names("x_", d);
  ds.label_names = numbered_names("y_", k);
  std::ostringstream prov;
  prov << "{\"generator\":\"clusters\",\"k\":" << k << ",\"d\":" << d
       << ",\"n_per_cluster\":" << n_per_cluster << ",\"separation\":" << separation
       << ",\"sigma\":" << sigma << ",\"seed\":" << seed << "}";
  ds.provenance = prov.str();
  ds.validate();
  return ds;
}

Matrix two_factor_map(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x2fac708ULL));
  Matrix a(kTwoFactorObservationDim, 2);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rng.normal();
  }
  return a;
}

Dataset gen_two_factor(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("gen_two_factor needs n >= 1");
  const Matrix a = two_factor_map(seed);
  Rng rng(mix_seed(seed, 0x2fac71aULL));
  Matrix factors(n, 2);
  for (int i = 0; i < n; ++i) {
    factors(i, 0) = rng.uniform(-1.0, 1.0);
    factors(i, 1) = rng.uniform(-1.0, 1.0);
  }
  Matrix features = (factors * a.transpose()).cwiseMax(0.0);
  Dataset ds;
  ds.features = std::move(features);
  ds.factors = std::move(factors);
  ds.feature_names = numbered_names("x_", kTwoFactorObservationDim);
  ds.factor_names = numbered_names("z_", 2);
  std::ostringstream prov;
  prov << "{\"generator\":\"two_factor\",\"n\":" << n << ",\"seed\":" << seed << "}";
  ds.provenance = prov.str();
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open CSV: " + path.string());

  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("CSV is empty (missing header row)", 1, true);
  }
  const std::vector<std::string> header = split_line(line);
  if (header.empty()) throw ParseError("CSV header has no columns", 1, true);

  std::vector<int> feature_cols;
  std::vector<int> label_cols;
  std::vector<int> factor_cols;
  Dataset ds;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const std::string name = trim(header[i]);
    if (name.rfind("y_", 0) == 0) {
      label_cols.push_back(static_cast<int>(i));
      ds.label_names.push_back(name);
    } else if (name.rfind("z_", 0) == 0) {
      factor_cols.push_back(static_cast<int>(i));
      ds.factor_names.push_back(name);
    } else {
      feature_cols.push_back(static_cast<int>(i));
      ds.feature_names.push_back(name);
    }
  }
  if (feature_cols.empty()) throw ParseError("CSV has no feature columns", 1, true);

  std::vector<std::vector<double>> rows;
  std::size_t line_number = 1;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << "ragged row at line " << line_number << ": expected " << header.size()
         << " cells, got " << cells.size();
      throw ParseError(os.str(), line_number, true);
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& cell : cells) row.push_back(parse_double(cell, line_number));
    rows.push_back(std::move(row));
  }

  const int n = static_cast<int>(rows.size());
  ds.features = Matrix(n, static_cast<int>(feature_cols.size()));
  if (!label_cols.empty()) ds.labels = Matrix(n, static_cast<int>(label_cols.size()));
  if (!factor_cols.empty()) ds.factors = Matrix(n, static_cast<int>(factor_cols.size()));
  for (int r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < feature_cols.size(); ++j) {
      ds.features(r, static_cast<int>(j)) =
          rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(feature_cols[j])];
    }
    for (std::size_t j = 0; j < label_cols.size(); ++j) {
      ds.labels(r, static_cast<int>(j)) =
          rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(label_cols[j])];
    }
    for (std::size_t j = 0; j < factor_cols.size(); ++j) {
      ds.factors(r, static_cast<int>(j)) =
          rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(factor_cols[j])];
    }
  }
  std::ostringstream prov;
  prov << "{\"source\":\"csv\",\"path\":\"" << path.string() << "\"}";
  ds.provenance = prov.str();
  return ds;
}

void save_csv(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open CSV for writing: " + path.string());
  std::vector<std::string> header = dataset.feature_names;
  if (header.size() != static_cast<std::size_t>(dataset.dim())) {
    header = numbered_names("x_", dataset.dim());
  }
  std::vector<std::string> label_names = dataset.label_names;
  if (dataset.has_labels() &&
      label_names.size() != static_cast<std::size_t>(dataset.label_dim())) {
    label_names = numbered_names("y_", dataset.label_dim());
  }
  std::vector<std::string> factor_names = dataset.factor_names;
  if (dataset.has_factors() &&
      factor_names.size() != static_cast<std::size_t>(dataset.factors.cols())) {
    factor_names = numbered_names("z_", static_cast<int>(dataset.factors.cols()));
  }
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out << ',';
    out << header[i];
  }
  for (const auto& name : label_names) out << ',' << name;
  for (const auto& name : factor_names) out << ',' << name;
  out << '\n';

  for (int r = 0; r < dataset.size(); ++r) {
    for (int c = 0; c < dataset.dim(); ++c) {
      if (c) out << ',';
      out << format_double(dataset.features(r, c));
    }
    if (dataset.has_labels()) {
      for (int c = 0; c < dataset.label_dim(); ++c) {
        out << ',' << format_double(dataset.labels(r, c));
      }
    }
    if (dataset.has_factors()) {
      for (Eigen::Index c = 0; c < dataset.factors.cols(); ++c) {
        out << ',' << format_double(dataset.factors(r, c));
      }
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing CSV: " + path.string());
}

NormalizeMode normalize_mode_from_string(const std::string& s) {
  if (s == "none") return NormalizeMode::kNone;
  if (s == "standardize") return NormalizeMode::kStandardize;
  if (s == "minmax") return NormalizeMode::kMinmax;
  throw ConfigError("unknown normalization mode: " + s);
}

std::string normalize_mode_to_string(NormalizeMode m) {
  switch (m) {
    case NormalizeMode::kNone: return "none";
    case NormalizeMode::kStandardize: return "standardize";
    case NormalizeMode::kMinmax: return "minmax";
  }
  return "none";
}

std::pair<Dataset, NormalizationParams> normalize(const Dataset& dataset,
                                                  NormalizeMode mode) {
  NormalizationParams params;
  params.mode = mode;
  const int d = dataset.dim();
  params.shift = Vector::Zero(d);
  params.scale = Vector::Ones(d);
  if (mode == NormalizeMode::kNone) return {dataset, params};
  if (mode == NormalizeMode::kStandardize && dataset.size() < 2) {
    throw ConfigError("standardize needs at least two rows");
  }

  for (int c = 0; c < d; ++c) {
    const auto col = dataset.features.col(c);
    if (mode == NormalizeMode::kStandardize) {
      const double mean = col.mean();
      const double var = (col.array() - mean).square().sum() /
                         static_cast<double>(dataset.size() - 1);
      if (var <= 0.0) {
        params.warnings.push_back("zero-variance column " +
                                  std::to_string(c) + " passed through");
        continue;
      }
      params.shift[c] = mean;
      params.scale[c] = std::sqrt(var);
    } else {
      const double lo = col.minCoeff();
      const double hi = col.maxCoeff();
      if (hi <= lo) {
        params.warnings.push_back("constant column " + std::to_string(c) +
                                  " passed through");
        continue;
      }
      params.shift[c] = lo;
      params.scale[c] = hi - lo;
    }
  }

  Dataset out = dataset;
  for (int c = 0; c < d; ++c) {
    out.features.col(c) = (dataset.features.col(c).array() - params.shift[c]) /
                          params.scale[c];
  }
  return {std::move(out), std::move(params)};
}

Dataset denormalize(const Dataset& dataset, const NormalizationParams& params) {
  if (params.mode == NormalizeMode::kNone) return dataset;
  if (params.shift.size() != dataset.dim()) {
    throw DimensionError("normalization params do not match dataset width");
  }
  Dataset out = dataset;
  for (int c = 0; c < dataset.dim(); ++c) {
    out.features.col(c) =
        dataset.features.col(c).array() * params.scale[c] + params.shift[c];
  }
  return out;
}

}  // namespace predprop
