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
//
// Synthetic dataset generators, CSV ingestion and normalization for
// desk-scale experiments. CSV layout: comma-separated, UTF-8, header row;
// feature columns are free-form names, label columns are prefixed "y_",
// generative ground-truth factor columns are prefixed "z_". Numbers are
// written as shortest round-trip decimals of float64.

#ifndef PREDPROP_DATA_HPP_
#define PREDPROP_DATA_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "predprop/linalg.hpp"

namespace predprop {

struct Dataset {
  Matrix features;  // n x d
  Matrix labels;    // n x c one-hot, 0x0 when absent
  Matrix factors;   // n x k generative ground truth, 0x0 when absent
  std::vector<std::string> feature_names;
  std::vector<std::string> label_names;
  std::vector<std::string> factor_names;
  std::string provenance;  // generator name + params + seed, JSON text

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
  int label_dim() const { return static_cast<int>(labels.cols()); }
  bool has_labels() const { return labels.size() != 0; }
  bool has_factors() const { return factors.size() != 0; }

  /// No NaN/Inf anywhere; one-hot label rows sum to 1 when labels are
  /// present. Throws on violation.
  void validate() const;

  /// Rows [0, n_head) and [n_head, n); used for held-out splits.
  std::pair<Dataset, Dataset> split(int n_head) const;
};

/// XOR corners with Gaussian jitter. Points cycle through the four corners
/// of {0,1}^2 so classes stay balanced within +-1; the one-hot label is the
/// XOR of the coordinates rounded back to {0,1}.
Dataset gen_xor(int n, double noise_sigma, std::uint64_t seed);

/// k isotropic Gaussian clusters with pairwise mean distance >= separation
/// (rejection-sampled placement; throws ConfigError when placement fails).
/// Points interleave clusters (row i belongs to cluster i mod k) so any
/// contiguous split stays balanced. One-hot labels.
Dataset gen_gaussian_clusters(int k, int d, int n_per_cluster, double separation,
                              double sigma, std::uint64_t seed);

/// Two latent factors (z1, z2) ~ Uniform[-1,1]^2 mapped through a fixed
/// seeded random linear map plus ReLU to 8-dim observations. The factors
/// are stored as z_ ground-truth columns for embedding probes.
Dataset gen_two_factor(int n, std::uint64_t seed);

inline constexpr int kTwoFactorObservationDim = 8;

/// The observation map used by gen_two_factor for a given seed, as an
/// (8 x 2) matrix A with x = relu(A z); exposed so tests can reproduce
/// observations from stored factors.
Matrix two_factor_map(std::uint64_t seed);

/// Column split comes from the header: "y_" prefixed columns become
/// labels, "z_" prefixed columns become factors, the rest are features.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& dataset, const std::filesystem::path& path);

enum class NormalizeMode { kNone, kStandardize, kMinmax };

NormalizeMode normalize_mode_from_string(const std::string& s);
std::string normalize_mode_to_string(NormalizeMode m);

struct NormalizationParams {
  NormalizeMode mode = NormalizeMode::kNone;
  Vector shift;  // per feature column
  Vector scale;  // per feature column; 1 for passthrough columns
  std::vector<std::string> warnings;
};

/// Per-feature-column transform x -> (x - shift) / scale. Standardize maps
/// to zero mean / unit variance, minmax to [0, 1]. Zero-variance (or
/// constant) columns pass through with a recorded warning. Labels and
/// factors are never transformed.
std::pair<Dataset, NormalizationParams> normalize(const Dataset& dataset,
                                                  NormalizeMode mode);

/// Inverse transform; exact round trip up to float rounding.
Dataset denormalize(const Dataset& dataset, const NormalizationParams& params);

}  // namespace predprop

#endif  // PREDPROP_DATA_HPP_
