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

#ifndef PREDPROP_CHECKPOINT_HPP_
#define PREDPROP_CHECKPOINT_HPP_

#include <filesystem>
#include <string>

#include <json.hpp>

#include "predprop/network.hpp"

namespace predprop {

inline constexpr int kCheckpointFormatVersion = 1;

/// Checkpoint schema (JSON object):
///   {
///     "format_version": 1,
///     "spec": { layer_dims, predictors, precision_mode, prior, seed, use_bias },
///     "predictors": [ [ {"weights": [[...]], "activation": "relu",
///                        "bias": [...] (when present)} ... ] ... ],
///     "precisions": [ [[...]] ... ],          // layers 0..L-1
///     "prior": {"mean": [...], "precision": [[...]]}   // layer L state
///   }
/// Numbers are written as shortest round-trip decimals of float64, so a
/// save/load cycle reproduces every value bit for bit. Activities and
/// errors are transient and are not persisted.
nlohmann::json checkpoint_to_json(const PCNetwork& net);
PCNetwork checkpoint_from_json(const nlohmann::json& j);

std::string checkpoint_to_string(const PCNetwork& net);

void save_checkpoint(const PCNetwork& net, const std::filesystem::path& path);
PCNetwork load_checkpoint(const std::filesystem::path& path);

/// Field-for-field equality of persisted state (spec, weights, biases,
/// precisions, prior). Activities are not compared.
bool checkpoint_equal(const PCNetwork& a, const PCNetwork& b);

/// FNV-1a hash of the serialized checkpoint; used to verify that runs with
/// a zero weights learning rate leave weights untouched.
std::uint64_t checkpoint_hash(const PCNetwork& net);

}  // namespace predprop

#endif  // PREDPROP_CHECKPOINT_HPP_
