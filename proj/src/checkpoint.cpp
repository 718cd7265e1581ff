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

#include "predprop/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "predprop/errors.hpp"

namespace predprop {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("expected a matrix (array of arrays)");
  const std::size_t rows = j.size();
  if (rows == 0) return Matrix(0, 0);
  const std::size_t cols = j.at(0).size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    const json& row = j.at(r);
    if (!row.is_array() || row.size() != cols) {
      throw ConfigError("ragged matrix in checkpoint");
    }
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          row.at(c).get<double>();
    }
  }
  return m;
}

json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw ConfigError("expected a vector (array of numbers)");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  }
  return v;
}

json spec_to_json(const NetworkSpec& spec) {
  json j;
  j["layer_dims"] = spec.layer_dims;
  json preds = json::array();
  for (const auto& chain : spec.predictor_specs) {
    json c = json::array();
    for (const auto& sub : chain) {
      c.push_back({{"output_dim", sub.output_dim},
                   {"activation", activation_to_string(sub.activation)}});
    }
    preds.push_back(std::move(c));
  }
  j["predictors"] = std::move(preds);
  j["precision_mode"] = precision_mode_to_string(spec.precision_mode);
  json prior;
  prior["mean"] = vector_to_json(spec.prior.mean);
  prior["precision"] = matrix_to_json(spec.prior.precision);
  j["prior"] = std::move(prior);
  j["seed"] = spec.seed;
  j["use_bias"] = spec.use_bias;
  return j;
}

NetworkSpec spec_from_json(const json& j) {
  NetworkSpec spec;
  spec.layer_dims = j.at("layer_dims").get<std::vector<int>>();
  for (const auto& chain : j.at("predictors")) {
    std::vector<SublayerSpec> c;
    for (const auto& sub : chain) {
      SublayerSpec s;
      s.output_dim = sub.at("output_dim").get<int>();
      s.activation = activation_from_string(sub.at("activation").get<std::string>());
      c.push_back(s);
    }
    spec.predictor_specs.push_back(std::move(c));
  }
  spec.precision_mode =
      precision_mode_from_string(j.at("precision_mode").get<std::string>());
  if (j.contains("prior")) {
    spec.prior.mean = vector_from_json(j.at("prior").at("mean"));
    spec.prior.precision = matrix_from_json(j.at("prior").at("precision"));
  }
  spec.seed = j.value("seed", std::uint64_t{0});
  spec.use_bias = j.value("use_bias", false);
  return spec;
}

}  // namespace

nlohmann::json checkpoint_to_json(const PCNetwork& net) {
  json j;
  j["format_version"] = kCheckpointFormatVersion;
  j["spec"] = spec_to_json(net.spec);

  json preds = json::array();
  for (const auto& pred : net.predictors) {
    json chain = json::array();
    for (const auto& sub : pred.sublayers) {
      json s;
      s["weights"] = matrix_to_json(sub.weights);
      s["activation"] = activation_to_string(sub.activation);
      if (sub.has_bias) s["bias"] = vector_to_json(sub.bias);
      chain.push_back(std::move(s));
    }
    preds.push_back(std::move(chain));
  }
  j["predictors"] = std::move(preds);

  json precisions = json::array();
  for (int l = 0; l < net.depth(); ++l) {
    precisions.push_back(
        matrix_to_json(net.layers[static_cast<std::size_t>(l)].precision.dense()));
  }
  j["precisions"] = std::move(precisions);

  json prior;
  prior["mean"] = vector_to_json(net.prior_mean);
  prior["precision"] = matrix_to_json(net.layers.back().precision.dense());
  j["prior"] = std::move(prior);
  return j;
}

PCNetwork checkpoint_from_json(const nlohmann::json& j) {
  if (!j.contains("format_version")) {
    throw ConfigError("checkpoint is missing format_version");
  }
  const int version = j.at("format_version").get<int>();
  if (version != kCheckpointFormatVersion) {
    std::ostringstream os;
    os << "unsupported checkpoint format_version " << version << " (expected "
       << kCheckpointFormatVersion << ")";
    throw ConfigError(os.str());
  }

  const NetworkSpec spec = spec_from_json(j.at("spec"));
  PCNetwork net = build_network(spec);

  const json& preds = j.at("predictors");
  if (preds.size() != static_cast<std::size_t>(net.depth())) {
    throw ConfigError("checkpoint predictor count does not match spec");
  }
  for (int gap = 0; gap < net.depth(); ++gap) {
    const json& chain = preds.at(static_cast<std::size_t>(gap));
    auto& pred = net.predictors[static_cast<std::size_t>(gap)];
    if (chain.size() != pred.sublayers.size()) {
      throw ConfigError("checkpoint sublayer count does not match spec");
    }
    for (std::size_t k = 0; k < pred.sublayers.size(); ++k) {
      auto& sub = pred.sublayers[k];
      const Matrix w = matrix_from_json(chain.at(k).at("weights"));
      if (w.rows() != sub.weights.rows() || w.cols() != sub.weights.cols()) {
        std::ostringstream os;
        os << "checkpoint weight shape mismatch at gap " << gap << ", sublayer " << k;
        throw DimensionError(os.str());
      }
      sub.weights = w;
      const std::string act = chain.at(k).at("activation").get<std::string>();
      sub.activation = activation_from_string(act);
      if (chain.at(k).contains("bias")) {
        sub.bias = vector_from_json(chain.at(k).at("bias"));
        sub.has_bias = true;
        if (sub.bias.size() != sub.weights.rows()) {
          throw DimensionError("checkpoint bias length does not match weights");
        }
      }
    }
  }

  const json& precisions = j.at("precisions");
  if (precisions.size() != static_cast<std::size_t>(net.depth())) {
    throw ConfigError("checkpoint must carry one precision per gap layer");
  }
  for (int l = 0; l < net.depth(); ++l) {
    const Matrix p = matrix_from_json(precisions.at(static_cast<std::size_t>(l)));
    auto& layer = net.layers[static_cast<std::size_t>(l)];
    if (p.rows() != layer.dim() || p.cols() != layer.dim()) {
      throw DimensionError("checkpoint precision shape does not match layer");
    }
    layer.precision = Precision::from_dense_unchecked(p, spec.precision_mode);
  }

  const json& prior = j.at("prior");
  net.prior_mean = vector_from_json(prior.at("mean"));
  if (net.prior_mean.size() != net.layers.back().dim()) {
    throw DimensionError("checkpoint prior mean does not match the deepest layer");
  }
  const Matrix top = matrix_from_json(prior.at("precision"));
  if (top.rows() != net.layers.back().dim() || top.cols() != net.layers.back().dim()) {
    throw DimensionError("checkpoint prior precision shape mismatch");
  }
  net.layers.back().precision = Precision::from_dense_unchecked(top, spec.precision_mode);
  return net;
}

std::string checkpoint_to_string(const PCNetwork& net) {
  return checkpoint_to_json(net).dump(2) + "\n";
}

void save_checkpoint(const PCNetwork& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << checkpoint_to_string(net);
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

PCNetwork load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed checkpoint: ") + e.what(), e.byte);
  }
  return checkpoint_from_json(j);
}

bool checkpoint_equal(const PCNetwork& a, const PCNetwork& b) {
  return checkpoint_to_json(a) == checkpoint_to_json(b);
}

std::uint64_t checkpoint_hash(const PCNetwork& net) {
  const std::string s = checkpoint_to_string(net);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace predprop
