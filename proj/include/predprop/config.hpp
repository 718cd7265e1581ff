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
// Run configuration for the CLI: JSON config file + "key.path=value"
// overrides, precedence flags > file > defaults. Defaults follow the
// library defaults: alpha_m = 1.0, alpha_s = 1.0, alpha_t = 0.01, 256
// hidden units with ReLU, linear output, 10 cause units for unsupervised
// runs.

#ifndef PREDPROP_CONFIG_HPP_
#define PREDPROP_CONFIG_HPP_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "predprop/data.hpp"
#include "predprop/network.hpp"
#include "predprop/train.hpp"

namespace predprop {

inline constexpr int kDefaultHiddenUnits = 256;
inline constexpr int kDefaultCauseUnits = 10;

struct DataConfig {
  std::string path;       // CSV path; empty when a generator is used
  std::string generator;  // "xor" | "clusters" | "two_factor"
  // Generator parameters with defaults.
  int n = 100;
  double noise_sigma = 0.05;
  int k = 2;
  int dim = 2;
  int n_per_cluster = 50;
  double separation = 5.0;
  double sigma = 0.5;
  NormalizeMode normalize = NormalizeMode::kNone;
  double holdout_fraction = 0.0;  // tail fraction reserved for evaluation
};

struct CheckConfig {
  int networks = 20;          // seeded random nets per oracle
  std::uint64_t seed = 1;
  double tolerance = 1e-5;
  double h = 1e-5;
  bool include_relu = true;
  int equivalence_networks = 20;
  double equivalence_linear_threshold = 0.99;
  double equivalence_relu_threshold = 0.95;
  bool inject_fault = false;  // negative control: corrupt analytic gradients
};

struct RunConfig {
  // Network. When layer_dims is empty, [data_dim, 256, cause] is derived at
  // run time (cause = label width in supervised mode, 10 otherwise).
  std::vector<int> layer_dims;
  Activation hidden_activation = Activation::kRelu;
  Activation output_activation = Activation::kLinear;
  PrecisionMode precision_mode = PrecisionMode::kFull;
  bool use_bias = false;

  TrainingConfig training;
  DataConfig data;
  CheckConfig check;

  std::uint64_t seed = 0;
  std::filesystem::path out_dir = ".";
  std::string checkpoint_name = "checkpoint.json";
  std::string metrics_name = "metrics.csv";
  std::string report_name = "report.json";

  std::filesystem::path checkpoint_path() const { return out_dir / checkpoint_name; }
  std::filesystem::path metrics_path() const { return out_dir / metrics_name; }
  std::filesystem::path report_path() const { return out_dir / report_name; }
};

/// Parses and validates a config JSON object. Unknown keys are rejected so
/// typos fail loudly.
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& path);

/// Applies one "a.b.c=value" override onto raw config JSON; the value is
/// parsed as JSON when possible and as a string otherwise.
void apply_override(nlohmann::json& config, const std::string& override_expr);

/// The fully resolved config (for embedding into the report JSON, so any
/// run is reproducible from its report).
nlohmann::json run_config_to_json(const RunConfig& config);

/// Loads (path) or generates (generator spec) the dataset; the config seed
/// feeds generators when data.seed is absent.
Dataset resolve_dataset(const RunConfig& config);

/// Builds the network spec for this run given the dataset shape.
NetworkSpec resolve_network_spec(const RunConfig& config, const Dataset& dataset);

}  // namespace predprop

#endif  // PREDPROP_CONFIG_HPP_
