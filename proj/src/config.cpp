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

#include "predprop/config.hpp"

#include <fstream>

#include <json.hpp>

#include "predprop/errors.hpp"
#include "predprop/rng.hpp"

namespace predprop {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : known) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown config key '" + scope + it.key() + "'");
  }
}

void parse_training(const json& j, TrainingConfig& t) {
  reject_unknown_keys(j, {"alpha_m", "alpha_s", "alpha_t", "u_m", "batch_size",
                          "epochs", "mode", "update_precision", "activity_init",
                          "sigma_init", "seed", "early_stop_grad_norm",
                          "epoch_metrics"},
                      "training.");
  t.alpha_m = j.value("alpha_m", t.alpha_m);
  t.alpha_s = j.value("alpha_s", t.alpha_s);
  t.alpha_t = j.value("alpha_t", t.alpha_t);
  t.u_m = j.value("u_m", t.u_m);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.epochs = j.value("epochs", t.epochs);
  if (j.contains("mode")) t.mode = train_mode_from_string(j.at("mode"));
  t.update_precision = j.value("update_precision", t.update_precision);
  if (j.contains("activity_init")) {
    t.activity_init = activity_init_from_string(j.at("activity_init"));
  }
  t.sigma_init = j.value("sigma_init", t.sigma_init);
  t.seed = j.value("seed", t.seed);
  t.early_stop_grad_norm = j.value("early_stop_grad_norm", t.early_stop_grad_norm);
  t.epoch_metrics = j.value("epoch_metrics", t.epoch_metrics);
}

void parse_data(const json& j, DataConfig& d) {
  reject_unknown_keys(j, {"path", "generator", "n", "noise_sigma", "k", "dim",
                          "n_per_cluster", "separation", "sigma", "normalize",
                          "holdout_fraction"},
                      "data.");
  d.path = j.value("path", d.path);
  d.generator = j.value("generator", d.generator);
  d.n = j.value("n", d.n);
  d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  d.k = j.value("k", d.k);
  d.dim = j.value("dim", d.dim);
  d.n_per_cluster = j.value("n_per_cluster", d.n_per_cluster);
  d.separation = j.value("separation", d.separation);
  d.sigma = j.value("sigma", d.sigma);
  if (j.contains("normalize")) {
    d.normalize = normalize_mode_from_string(j.at("normalize"));
  }
  d.holdout_fraction = j.value("holdout_fraction", d.holdout_fraction);
  if (d.holdout_fraction < 0.0 || d.holdout_fraction >= 1.0) {
    throw ConfigError("holdout_fraction must be in [0, 1)");
  }
}

void parse_check(const json& j, CheckConfig& c) {
  reject_unknown_keys(j, {"networks", "seed", "tolerance", "h", "include_relu",
                          "equivalence_networks", "equivalence_linear_threshold",
                          "equivalence_relu_threshold", "inject_fault"},
                      "check.");
  c.networks = j.value("networks", c.networks);
  c.seed = j.value("seed", c.seed);
  c.tolerance = j.value("tolerance", c.tolerance);
  c.h = j.value("h", c.h);
  c.include_relu = j.value("include_relu", c.include_relu);
  c.equivalence_networks = j.value("equivalence_networks", c.equivalence_networks);
  c.equivalence_linear_threshold =
      j.value("equivalence_linear_threshold", c.equivalence_linear_threshold);
  c.equivalence_relu_threshold =
      j.value("equivalence_relu_threshold", c.equivalence_relu_threshold);
  c.inject_fault = j.value("inject_fault", c.inject_fault);
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig config;
  reject_unknown_keys(j, {"network", "training", "data", "check", "seed", "out_dir",
                          "checkpoint_name", "metrics_name", "report_name"},
                      "");
  if (j.contains("network")) {
    const json& n = j.at("network");
    reject_unknown_keys(n, {"layer_dims", "hidden_activation", "output_activation",
                            "precision_mode", "use_bias"},
                        "network.");
    config.layer_dims = n.value("layer_dims", config.layer_dims);
    if (n.contains("hidden_activation")) {
      config.hidden_activation = activation_from_string(n.at("hidden_activation"));
    }
    if (n.contains("output_activation")) {
      config.output_activation = activation_from_string(n.at("output_activation"));
    }
    if (n.contains("precision_mode")) {
      config.precision_mode = precision_mode_from_string(n.at("precision_mode"));
    }
    config.use_bias = n.value("use_bias", config.use_bias);
  }
  if (j.contains("training")) parse_training(j.at("training"), config.training);
  if (j.contains("data")) parse_data(j.at("data"), config.data);
  if (j.contains("check")) parse_check(j.at("check"), config.check);
  config.seed = j.value("seed", config.seed);
  if (j.contains("out_dir")) config.out_dir = j.at("out_dir").get<std::string>();
  config.checkpoint_name = j.value("checkpoint_name", config.checkpoint_name);
  config.metrics_name = j.value("metrics_name", config.metrics_name);
  config.report_name = j.value("report_name", config.report_name);

  config.training.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed config: ") + e.what(), e.byte);
  }
  return run_config_from_json(j);
}

void apply_override(nlohmann::json& config, const std::string& override_expr) {
  const auto eq = override_expr.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: " + override_expr);
  }
  const std::string path = override_expr.substr(0, eq);
  const std::string raw_value = override_expr.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw_value);
  } catch (const json::parse_error&) {
    value = raw_value;  // bare strings (e.g. mode=supervised)
  }

  json* node = &config;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos
                                                   ? std::string::npos
                                                   : dot - begin);
    if (key.empty()) throw ConfigError("empty key segment in override: " + override_expr);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    node = &(*node)[key];
    begin = dot + 1;
  }
}

nlohmann::json run_config_to_json(const RunConfig& config) {
  json j;
  j["network"] = {{"layer_dims", config.layer_dims},
                  {"hidden_activation", activation_to_string(config.hidden_activation)},
                  {"output_activation", activation_to_string(config.output_activation)},
                  {"precision_mode", precision_mode_to_string(config.precision_mode)},
                  {"use_bias", config.use_bias}};
  j["training"] = {{"alpha_m", config.training.alpha_m},
                   {"alpha_s", config.training.alpha_s},
                   {"alpha_t", config.training.alpha_t},
                   {"u_m", config.training.u_m},
                   {"batch_size", config.training.batch_size},
                   {"epochs", config.training.epochs},
                   {"mode", train_mode_to_string(config.training.mode)},
                   {"update_precision", config.training.update_precision},
                   {"activity_init", activity_init_to_string(config.training.activity_init)},
                   {"sigma_init", config.training.sigma_init},
                   {"seed", config.training.seed},
                   {"early_stop_grad_norm", config.training.early_stop_grad_norm},
                   {"epoch_metrics", config.training.epoch_metrics}};
  j["data"] = {{"path", config.data.path},
               {"generator", config.data.generator},
               {"n", config.data.n},
               {"noise_sigma", config.data.noise_sigma},
               {"k", config.data.k},
               {"dim", config.data.dim},
               {"n_per_cluster", config.data.n_per_cluster},
               {"separation", config.data.separation},
               {"sigma", config.data.sigma},
               {"normalize", normalize_mode_to_string(config.data.normalize)},
               {"holdout_fraction", config.data.holdout_fraction}};
  j["check"] = {{"networks", config.check.networks},
                {"seed", config.check.seed},
                {"tolerance", config.check.tolerance},
                {"h", config.check.h},
                {"include_relu", config.check.include_relu},
                {"equivalence_networks", config.check.equivalence_networks},
                {"equivalence_linear_threshold", config.check.equivalence_linear_threshold},
                {"equivalence_relu_threshold", config.check.equivalence_relu_threshold},
                {"inject_fault", config.check.inject_fault}};
  j["seed"] = config.seed;
  j["out_dir"] = config.out_dir.string();
  j["checkpoint_name"] = config.checkpoint_name;
  j["metrics_name"] = config.metrics_name;
  j["report_name"] = config.report_name;
  return j;
}

Dataset resolve_dataset(const RunConfig& config) {
  const auto& d = config.data;
  if (!d.path.empty() && !d.generator.empty()) {
    throw ConfigError("specify either data.path or data.generator, not both");
  }
  Dataset dataset;
  if (!d.path.empty()) {
    dataset = load_csv(d.path);
    dataset.validate();
  } else if (d.generator == "xor") {
    dataset = gen_xor(d.n, d.noise_sigma, config.seed);
  } else if (d.generator == "clusters") {
    dataset = gen_gaussian_clusters(d.k, d.dim, d.n_per_cluster, d.separation, d.sigma,
                                    config.seed);
  } else if (d.generator == "two_factor") {
    dataset = gen_two_factor(d.n, config.seed);
  } else if (d.generator.empty()) {
    throw ConfigError("no dataset configured (set data.path or data.generator)");
  } else {
    throw ConfigError("unknown generator: " + d.generator);
  }
  if (d.normalize != NormalizeMode::kNone) {
    dataset = normalize(dataset, d.normalize).first;
  }
  return dataset;
}

NetworkSpec resolve_network_spec(const RunConfig& config, const Dataset& dataset) {
  const bool supervised = config.training.mode == TrainMode::kSupervised;
  std::vector<int> dims = config.layer_dims;
  if (dims.empty()) {
    // Supervised nets run the discriminative orientation: labels at layer
    // 0, observations at the deepest layer. Unsupervised nets observe at
    // layer 0 with the default cause width on top.
    if (supervised) {
      if (!dataset.has_labels()) throw ConfigError("supervised run needs labels");
      dims = {dataset.label_dim(), kDefaultHiddenUnits, dataset.dim()};
    } else {
      dims = {dataset.dim(), kDefaultHiddenUnits, kDefaultCauseUnits};
    }
  }
  if (supervised) {
    if (dims.back() != dataset.dim()) {
      throw ConfigError("deepest layer does not match the dataset width");
    }
    if (dataset.has_labels() && dims.front() != dataset.label_dim()) {
      throw ConfigError("layer_dims[0] does not match the label width");
    }
  } else if (dims.front() != dataset.dim()) {
    throw ConfigError("layer_dims[0] does not match the dataset width");
  }
  NetworkSpec spec =
      make_dense_spec(dims, config.hidden_activation, config.output_activation);
  spec.precision_mode = config.precision_mode;
  spec.use_bias = config.use_bias;
  spec.seed = mix_seed(config.seed, 0x4e7ULL);
  return spec;
}

}  // namespace predprop
