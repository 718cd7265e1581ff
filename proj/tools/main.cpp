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
// Command-line entry point: train / infer / eval / check / gen-data.
// Exit codes are a stable contract: 0 success, 1 oracle or check failure,
// 2 usage or config error, 3 numerical abort.

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "predprop/checkpoint.hpp"
#include "predprop/config.hpp"
#include "predprop/data.hpp"
#include "predprop/errors.hpp"
#include "predprop/oracle.hpp"
#include "predprop/rng.hpp"
#include "predprop/train.hpp"

#ifndef PREDPROP_GIT_DESCRIBE
#define PREDPROP_GIT_DESCRIBE "unknown"
#endif

namespace {

using nlohmann::json;
using namespace predprop;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

std::string format_double(double v) {
  char buf[32];
  const auto result = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, result.ptr);
}

/// Shared command-line state: config file, overrides, common flags.
struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig resolve_config(const CommonArgs& args) {
  json raw = json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw IoError("cannot open config: " + args.config_path);
    try {
      raw = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed config: ") + e.what(), e.byte);
    }
  }
  for (const auto& expr : args.overrides) apply_override(raw, expr);
  // Flags take precedence over both file and overrides.
  if (args.seed.has_value()) raw["seed"] = *args.seed;
  if (!args.out_dir.empty()) raw["out_dir"] = args.out_dir;
  return run_config_from_json(raw);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing: " + path.string());
}

class MetricsCsvWriter {
 public:
  MetricsCsvWriter(const std::filesystem::path& path, int num_layers)
      : out_(path) {
    if (!out_) throw IoError("cannot open metrics CSV: " + path.string());
    out_ << "epoch,batch,inner_iter,total_energy";
    for (int l = 0; l <= num_layers; ++l) out_ << ",energy_layer_" << l;
    out_ << ",grad_norm_mu,grad_norm_theta,grad_norm_pi\n";
  }

  void operator()(const MetricsRow& row) {
    out_ << row.epoch << ',' << row.batch << ',' << row.inner_iter << ','
         << format_double(row.total_energy);
    for (const double e : row.per_layer_energy) out_ << ',' << format_double(e);
    out_ << ',' << format_double(row.grad_norm_mu) << ','
         << format_double(row.grad_norm_theta) << ','
         << format_double(row.grad_norm_pi) << '\n';
  }

 private:
  std::ofstream out_;
};

json timing_json(double seconds) {
  json j;
  j["seconds"] = seconds;
  return j;
}

int run_train_single(const RunConfig& config, const std::string& resume_path) {
  const auto started = std::chrono::steady_clock::now();
  std::filesystem::create_directories(config.out_dir);

  Dataset dataset = resolve_dataset(config);
  Dataset train_set = dataset;
  Dataset test_set;
  bool have_holdout = false;
  if (config.data.holdout_fraction > 0.0 && dataset.size() > 1) {
    const int head = dataset.size() -
                     static_cast<int>(config.data.holdout_fraction * dataset.size());
    auto parts = dataset.split(head);
    train_set = std::move(parts.first);
    test_set = std::move(parts.second);
    have_holdout = test_set.size() > 0;
  }

  PCNetwork net = resume_path.empty()
                      ? build_network(resolve_network_spec(config, train_set))
                      : load_checkpoint(resume_path);
  const int data_layer =
      config.training.mode == TrainMode::kSupervised ? net.depth() : 0;
  if (static_cast<int>(train_set.features.cols()) != net.layer_dim(data_layer)) {
    throw ConfigError("dataset width does not match the network data layer");
  }

  TrainingConfig training = config.training;
  training.seed = mix_seed(config.seed, 0x7ea1ULL);

  MetricsCsvWriter metrics(config.metrics_path(), net.depth());
  TrainReport report = train(net, train_set, training, std::ref(metrics));
  save_checkpoint(net, config.checkpoint_path());
  report.checkpoint_path = config.checkpoint_path().string();

  json summary;
  summary["steps"] = report.steps.size();
  if (!report.steps.empty()) {
    summary["final_energy"] = report.steps.back().energy_after;
  }
  if (!report.epochs.empty() && report.epochs.back().metric.has_value()) {
    summary["final_train_metric"] = *report.epochs.back().metric;
  }
  const Metrics train_metrics = evaluate(net, train_set, training);
  if (train_metrics.accuracy.has_value()) {
    summary["train_accuracy"] = *train_metrics.accuracy;
  }
  if (train_metrics.reconstruction_error.has_value()) {
    summary["train_reconstruction_error"] = *train_metrics.reconstruction_error;
  }
  if (have_holdout) {
    const Metrics test_metrics = evaluate(net, test_set, training);
    if (test_metrics.accuracy.has_value()) {
      summary["test_accuracy"] = *test_metrics.accuracy;
    }
    if (test_metrics.reconstruction_error.has_value()) {
      summary["test_reconstruction_error"] = *test_metrics.reconstruction_error;
    }
  }

  json report_json;
  report_json["resolved_config"] = run_config_to_json(config);
  report_json["git_describe"] = PREDPROP_GIT_DESCRIBE;
  report_json["seed"] = config.seed;
  report_json["summary_metrics"] = summary;
  report_json["timings"] = timing_json(
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
          .count());
  write_text_file(config.report_path(), report_json.dump(2) + "\n");

  std::cout << "train: " << report.steps.size() << " steps, checkpoint "
            << config.checkpoint_path().string() << "\n";
  return kExitOk;
}

int cmd_train(const CommonArgs& common, const std::string& resume_path,
              const std::string& seeds_csv, int jobs) {
  RunConfig base = resolve_config(common);
  if (seeds_csv.empty()) return run_train_single(base, resume_path);

  // Seed sweep: independent runs with per-seed output directories.
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(seeds_csv);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    seeds.push_back(std::stoull(token));
  }
  if (seeds.empty()) throw ConfigError("--seeds given but no seeds parsed");
  if (jobs < 1) jobs = 1;

  std::vector<int> results(seeds.size(), kExitOk);
  std::vector<std::thread> pool;
  std::size_t next = 0;
  std::mutex mutex;
  auto worker = [&]() {
    while (true) {
      std::size_t idx;
      {
        std::lock_guard<std::mutex> lock(mutex);
        if (next >= seeds.size()) return;
        idx = next++;
      }
      RunConfig config = base;
      config.seed = seeds[idx];
      config.out_dir = base.out_dir / ("seed_" + std::to_string(seeds[idx]));
      try {
        results[idx] = run_train_single(config, resume_path);
      } catch (const NumericalError&) {
        results[idx] = kExitNumerical;
      } catch (const Error&) {
        results[idx] = kExitConfig;
      }
    }
  };
  const int n_threads = std::min<int>(jobs, static_cast<int>(seeds.size()));
  for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  int worst = kExitOk;
  for (const int r : results) worst = std::max(worst, r);
  return worst;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& data_path,
              const std::string& out_path, int u_m, double alpha_m,
              const std::string& orientation) {
  PCNetwork net = load_checkpoint(checkpoint_path);
  Dataset data = load_csv(data_path);
  if (data.size() == 0) throw ConfigError("data file has no rows");
  // "embedding" clamps the data layer and reads the deepest activities;
  // "label" serves discriminative checkpoints: data clamps the deep end and
  // the inferred layer-0 activities are the label readout.
  int data_layer = 0;
  if (orientation == "label") {
    data_layer = net.depth();
  } else if (orientation != "embedding") {
    throw ConfigError("orientation must be 'embedding' or 'label'");
  }
  if (data.dim() != net.layer_dim(data_layer)) {
    throw ConfigError("data width does not match the network data layer");
  }

  TrainingConfig config;
  config.mode = TrainMode::kInferenceOnly;
  config.update_precision = false;
  config.alpha_m = alpha_m;
  config.u_m = u_m;
  config.activity_init = ActivityInit::kFeedforward;
  const InferResult result = infer(net, data.features, config, data_layer);

  std::ostringstream out;
  const Matrix& cause =
      data_layer == 0 ? result.activities.back() : result.activities.front();
  for (Eigen::Index c = 0; c < cause.cols(); ++c) {
    out << "mu_" << c << ',';
  }
  out << "energy\n";
  for (Eigen::Index r = 0; r < cause.rows(); ++r) {
    for (Eigen::Index c = 0; c < cause.cols(); ++c) {
      out << format_double(cause(r, c)) << ',';
    }
    out << format_double(result.row_energy[r]) << '\n';
  }
  write_text_file(out_path, out.str());
  std::cout << "infer: " << cause.rows() << " rows, mean energy "
            << result.energy.total << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const CommonArgs& common) {
  RunConfig config = resolve_config(common);
  PCNetwork net = load_checkpoint(checkpoint_path);
  Dataset data = load_csv(data_path);
  data.validate();

  TrainingConfig eval_config = config.training;
  if (!data.has_labels()) eval_config.mode = TrainMode::kUnsupervised;
  const Metrics metrics = evaluate(net, data, eval_config);

  json j;
  j["n"] = metrics.n;
  j["mode"] = train_mode_to_string(metrics.mode);
  if (metrics.accuracy.has_value()) j["accuracy"] = *metrics.accuracy;
  if (metrics.reconstruction_error.has_value()) {
    j["reconstruction_error"] = *metrics.reconstruction_error;
  }
  std::cout << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_check(const CommonArgs& common) {
  RunConfig config = resolve_config(common);
  const CheckConfig& check = config.check;
  std::filesystem::create_directories(config.out_dir);

  GradCheckConfig grad_config;
  grad_config.h = check.h;
  grad_config.tolerance = check.tolerance;
  if (check.inject_fault) grad_config.weight_fault = 0.1;

  bool all_pass = true;
  json grad_reports = json::array();
  int total_excluded = 0;
  for (int i = 0; i < check.networks; ++i) {
    RandomNetOptions options;
    options.allow_relu = check.include_relu;
    options.multi_sublayer = true;
    options.batch = 1 + static_cast<int>(i % 3);
    const PCNetwork net = random_network(mix_seed(check.seed, static_cast<std::uint64_t>(i)), options);
    const GradCheckReport report = check_gradients(net, grad_config);
    total_excluded += report.excluded_coordinates;
    all_pass = all_pass && report.pass;
    json entry = to_json(report);
    entry["net_index"] = i;
    grad_reports.push_back(std::move(entry));
  }
  std::cout << "gradient oracle: " << (all_pass ? "pass" : "FAIL") << " ("
            << check.networks << " nets, " << total_excluded
            << " kink-excluded coordinates)\n";

  bool equivalence_pass = true;
  json equivalence_reports = json::array();
  for (int i = 0; i < check.equivalence_networks; ++i) {
    const bool relu = check.include_relu && (i % 2 == 1);
    const EquivalenceCase test_case = make_equivalence_case(
        mix_seed(check.seed, 0xe0 + static_cast<std::uint64_t>(i)), relu);
    const EquivalenceReport report =
        compare_with_backprop(test_case.net, test_case.input, test_case.target);
    const double threshold = relu ? check.equivalence_relu_threshold
                                  : check.equivalence_linear_threshold;
    for (std::size_t gap = 0; gap < report.cosines.size(); ++gap) {
      if (!report.exact_match[gap] && report.cosines[gap] < threshold) {
        equivalence_pass = false;
      }
    }
    json entry = to_json(report);
    entry["net_index"] = i;
    entry["relu"] = relu;
    equivalence_reports.push_back(std::move(entry));
  }
  std::cout << "backprop equivalence: " << (equivalence_pass ? "pass" : "FAIL") << " ("
            << check.equivalence_networks << " nets)\n";

  json report_json;
  report_json["resolved_config"] = run_config_to_json(config);
  report_json["git_describe"] = PREDPROP_GIT_DESCRIBE;
  report_json["gradient_checks"] = std::move(grad_reports);
  report_json["equivalence_checks"] = std::move(equivalence_reports);
  report_json["pass"] = all_pass && equivalence_pass;
  write_text_file(config.out_dir / "check_report.json", report_json.dump(2) + "\n");

  return (all_pass && equivalence_pass) ? kExitOk : kExitCheckFailed;
}

int cmd_gen_data(const std::string& generator, const std::string& out_path, int n,
                 double noise, std::uint64_t seed, int k, int dim, int n_per_cluster,
                 double separation, double sigma) {
  Dataset dataset;
  if (generator == "xor") {
    dataset = gen_xor(n, noise, seed);
  } else if (generator == "clusters") {
    dataset = gen_gaussian_clusters(k, dim, n_per_cluster, separation, sigma, seed);
  } else if (generator == "two_factor") {
    dataset = gen_two_factor(n, seed);
  } else {
    throw ConfigError("unknown generator: " + generator);
  }
  save_csv(dataset, out_path);
  std::cout << "gen-data: wrote " << dataset.size() << " rows to " << out_path << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PredProp: bidirectional layer-local optimization of activities, "
               "weights and precisions in predictive-coding networks"};
  app.require_subcommand(1);

  CommonArgs common;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "JSON config file");
    cmd->add_option("--override", common.overrides,
                    "config override key.path=value (repeatable)");
    cmd->add_option("--seed", common.seed, "master seed (overrides config)");
    cmd->add_option("--out", common.out_dir, "output directory");
  };

  // train
  auto* train_cmd = app.add_subcommand("train", "train a network on a dataset");
  add_common(train_cmd);
  std::string resume_path;
  std::string seeds_csv;
  int jobs = 1;
  train_cmd->add_option("--resume", resume_path, "resume from a checkpoint");
  train_cmd->add_option("--seeds", seeds_csv, "comma-separated seed sweep");
  train_cmd->add_option("--jobs", jobs, "parallel workers for --seeds");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "inference-only pass, writes embeddings");
  std::string infer_checkpoint;
  std::string infer_data;
  std::string infer_out = "embeddings.csv";
  std::string infer_orientation = "embedding";
  int infer_um = 200;
  double infer_alpha_m = 0.2;
  infer_cmd->add_option("--checkpoint", infer_checkpoint, "checkpoint path")->required();
  infer_cmd->add_option("--data", infer_data, "input CSV")->required();
  infer_cmd->add_option("--out", infer_out, "output CSV path");
  infer_cmd->add_option("--u-m", infer_um, "inference iterations");
  infer_cmd->add_option("--alpha-m", infer_alpha_m, "activity learning rate");
  infer_cmd->add_option("--orientation", infer_orientation,
                        "embedding (clamp data layer) or label (clamp deep end)");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string eval_checkpoint;
  std::string eval_data;
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint path")->required();
  eval_cmd->add_option("--data", eval_data, "dataset CSV")->required();

  // check
  auto* check_cmd = app.add_subcommand("check", "run the numerical oracle suite");
  add_common(check_cmd);
  bool inject_fault = false;
  std::optional<double> check_tolerance;
  check_cmd->add_flag("--inject-fault", inject_fault,
                      "negative control: corrupt analytic gradients");
  check_cmd->add_option("--tolerance", check_tolerance, "gradient check tolerance");

  // gen-data
  auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset CSV");
  std::string generator;
  std::string gen_out = "data.csv";
  int gen_n = 100;
  double gen_noise = 0.05;
  std::uint64_t gen_seed = 0;
  int gen_k = 2;
  int gen_dim = 2;
  int gen_npc = 50;
  double gen_sep = 5.0;
  double gen_sigma = 0.5;
  gen_cmd->add_option("generator", generator, "xor | clusters | two_factor")->required();
  gen_cmd->add_option("--out", gen_out, "output CSV path");
  gen_cmd->add_option("--n", gen_n, "number of points (xor, two_factor)");
  gen_cmd->add_option("--noise", gen_noise, "xor jitter sigma");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");
  gen_cmd->add_option("--k", gen_k, "cluster count");
  gen_cmd->add_option("--dim", gen_dim, "cluster dimension");
  gen_cmd->add_option("--n-per-cluster", gen_npc, "points per cluster");
  gen_cmd->add_option("--separation", gen_sep, "minimum cluster mean distance");
  gen_cmd->add_option("--sigma", gen_sigma, "cluster stddev");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(common, resume_path, seeds_csv, jobs);
    if (*infer_cmd) {
      return cmd_infer(infer_checkpoint, infer_data, infer_out, infer_um,
                       infer_alpha_m, infer_orientation);
    }
    if (*eval_cmd) return cmd_eval(eval_checkpoint, eval_data, common);
    if (*check_cmd) {
      if (inject_fault) common.overrides.push_back("check.inject_fault=true");
      if (check_tolerance.has_value()) {
        common.overrides.push_back("check.tolerance=" +
                                   format_double(*check_tolerance));
      }
      return cmd_check(common);
    }
    if (*gen_cmd) {
      return cmd_gen_data(generator, gen_out, gen_n, gen_noise, gen_seed, gen_k,
                          gen_dim, gen_npc, gen_sep, gen_sigma);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
