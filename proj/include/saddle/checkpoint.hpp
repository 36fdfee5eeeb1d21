#pragma once

// Flat JSON checkpoints: architecture, N, lambda, bilinear flag and every
// parameter as {name, shape, values} with row-major values.

#include "saddle/saddle_net.hpp"

#include "json.hpp"

#include <string>

namespace saddle {

nlohmann::json checkpoint_json(const SaddleNet& net);
/// Rebuilds a network; throws InputError on missing, extra or misshapen parameters.
SaddleNet net_from_checkpoint(const nlohmann::json& j);

void save_checkpoint(const SaddleNet& net, const std::string& path);
SaddleNet load_checkpoint(const std::string& path);

/// Architecture description shared by checkpoints and config echoes.
nlohmann::json architecture_json(const SaddleArchitecture& arch);
SaddleArchitecture architecture_from_json(const nlohmann::json& j);

}  // namespace saddle
