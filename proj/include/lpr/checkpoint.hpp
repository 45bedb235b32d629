#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpr/net.hpp"

namespace lpr {

struct Checkpoint {
  ModelParams params;
  std::vector<std::string> answers;
  std::vector<std::string> types;
  nlohmann::json config;  // resolved training configuration, informational
};

// {"format": "lpr-checkpoint", "version": 1, "activation", "use_mask",
//  "answers", "types", "config",
//  "groups": {name: {"rows", "cols", "W": [...row-major...], "b": [...]}},
//  "mask": {"rows", "cols", "W", "dropout_rate", "alpha"}}
// Doubles are written in shortest round-trip form, so load(save(x)) == x.
nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lpr
