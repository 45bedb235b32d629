#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "lpr/datagen.hpp"
#include "lpr/net.hpp"

namespace lpr::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kRuntimeError = 3 };

// Everything a run needs; loaded from one JSON file with sections
// {"data": SyntheticConfig, "train": TrainConfig, "paths": {...}}.
// Missing keys keep their defaults.
struct RunConfig {
  SyntheticConfig data;
  TrainConfig train;
  std::filesystem::path data_dir = "data";
  std::filesystem::path checkpoint = "run/model.ckpt.json";
  std::filesystem::path report_dir = "report";
};

nlohmann::json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Entry points. Subcommands: gen-data, train, eval, diagnose, weights.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace lpr::cli
