#pragma once

#include <filesystem>
#include <json.hpp>

#include "cepminer/nn.hpp"

namespace cepminer::nn {

inline constexpr int kCheckpointVersion = 1;

// {"format": "cepminer-densenet", "version": 1, "dropout": p,
//  "layers": [{"in", "out", "activation", "weight": [row-major], "bias": [...]}]}
nlohmann::json to_json(const DenseNet<double>& net);

// Throws std::runtime_error when the document is malformed or its layer
// shapes differ from `expected_dims` (when given).
DenseNet<double> net_from_json(const nlohmann::json& doc, const std::vector<std::size_t>& expected_dims = {});

std::vector<std::size_t> layer_dims(const DenseNet<double>& net);

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace cepminer::nn
