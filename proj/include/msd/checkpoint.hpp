// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "msd/errors.hpp"
#include "msd/net.hpp"

namespace msd {

/// Checkpoint layout:
///   {"layer_dims":[...], "activation":"relu|tanh",
///    "weights":[[row-major floats]...], "biases":[[...]...]}
/// plus "sigmoid_output": true for nets whose outputs pass through a sigmoid.
/// Doubles are emitted in shortest round-trip form, so load(save(net)) is
/// value-exact.
inline nlohmann::json checkpoint_json(const DenseNet& net, bool sigmoid_output = false) {
  validate_net(net);
  nlohmann::json j;
  j["layer_dims"] = net.layer_dims;
  j["activation"] = activation_name(net.activation);
  j["weights"] = net.weights;
  j["biases"] = net.biases;
  if (sigmoid_output) j["sigmoid_output"] = true;
  return j;
}

inline DenseNet checkpoint_from_json(const nlohmann::json& j, bool* sigmoid_output = nullptr) {
  DenseNet net;
  try {
    net.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    net.activation = activation_from_name(j.at("activation").get<std::string>());
    net.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    net.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    if (sigmoid_output != nullptr) *sigmoid_output = j.value("sigmoid_output", false);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad checkpoint: ") + e.what());
  }
  validate_net(net);
  return net;
}

inline void save_checkpoint(const DenseNet& net, const std::string& path,
                            bool sigmoid_output = false) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MissingInputError("cannot open for writing: " + path);
  out << checkpoint_json(net, sigmoid_output).dump(2) << '\n';
}

inline DenseNet load_checkpoint(const std::string& path, bool* sigmoid_output = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInputError("missing checkpoint: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j, sigmoid_output);
}

}  // namespace msd
