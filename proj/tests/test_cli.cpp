#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "lpr/cli.hpp"
#include "lpr/rescale.hpp"

namespace fs = std::filesystem;
using lpr::cli::run;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const fs::path& dir, double visual_noise, const std::string& shift) {
  nlohmann::json j = {
      {"data",
       {{"train_size", 1500}, {"test_size", 400}, {"v_dim", 24}, {"visual_noise", visual_noise},
        {"shift_mode", shift}}},
      {"train", {{"epochs_finetune", 30}, {"lr", 0.1}}},
      {"paths",
       {{"data_dir", (dir / "data").string()},
        {"checkpoint", (dir / "run" / "model.json").string()},
        {"report_dir", (dir / "report").string()}}}};
  const auto p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

}  // namespace

TEST_CASE("gen-data writes the data directory deterministically") {
  TempDir tmp("lpr_cli_gen");
  const auto cfg = write_config(tmp.path, 0.3, "reversed").string();
  const auto a = (tmp.path / "a").string(), b = (tmp.path / "b").string();
  CHECK(run({"gen-data", "--config", cfg, "--seed", "5", "--out", a}) == 0);
  CHECK(run({"gen-data", "--config", cfg, "--seed", "5", "--out", b}) == 0);
  for (const char* f : {"train.jsonl", "test.jsonl", "vocab.json", "counts.json"}) {
    CHECK(fs::exists(fs::path(a) / f));
    CHECK(slurp(fs::path(a) / f) == slurp(fs::path(b) / f));
  }
  auto resolved = nlohmann::json::parse(slurp(fs::path(a) / "resolved_config.json"));
  CHECK(resolved["data"]["seed"] == 5);
}

TEST_CASE("input errors exit with 2") {
  TempDir tmp("lpr_cli_err");
  CHECK(run({"gen-data", "--config", "/nonexistent/config.json"}) == 2);
  CHECK(run({"train", "--data", (tmp.path / "missing").string()}) == 2);
  CHECK(run({"frobnicate"}) == 2);
  CHECK(run({}) == 2);
  std::ofstream(tmp.path / "bad.json") << "{\"data\": {\"num_types\": 0}}";
  CHECK(run({"gen-data", "--config", (tmp.path / "bad.json").string(), "--out",
             (tmp.path / "d").string()}) == 2);
  std::ofstream(tmp.path / "garbage.json") << "{not json";
  CHECK(run({"gen-data", "--config", (tmp.path / "garbage.json").string()}) == 2);
}

TEST_CASE("train and eval on unshifted noiseless data") {
  TempDir tmp("lpr_cli_e2e");
  const auto cfg = write_config(tmp.path, 0.0, "none").string();
  REQUIRE(run({"gen-data", "--config", cfg}) == 0);
  REQUIRE(run({"train", "--config", cfg}) == 0);
  CHECK(fs::exists(tmp.path / "run" / "model.json"));
  CHECK(fs::exists(tmp.path / "run" / "trace.csv"));
  REQUIRE(run({"eval", "--config", cfg}) == 0);
  auto metrics = nlohmann::json::parse(slurp(tmp.path / "report" / "metrics.json"));
  CHECK(metrics["overall_acc"].get<double>() >= 0.95);
  CHECK(metrics["per_type"].size() == 4);
  CHECK(metrics["out_of_type_rate"].get<double>() == 0.0);

  REQUIRE(run({"diagnose", "--config", cfg, "--report", (tmp.path / "diag").string()}) == 0);
  CHECK(fs::exists(tmp.path / "diag" / "grad_norms.csv"));
  CHECK(fs::exists(tmp.path / "diag" / "summary.json"));
  CHECK(fs::exists(tmp.path / "diag" / "confusion_qt_0.csv"));

  // a data directory with a different vocabulary
  nlohmann::json other = {{"data", {{"num_types", 3}, {"train_size", 100}, {"test_size", 50}, {"v_dim", 24}}}};
  std::ofstream(tmp.path / "other.json") << other.dump();
  const auto other_dir = (tmp.path / "other_data").string();
  REQUIRE(run({"gen-data", "--config", (tmp.path / "other.json").string(), "--out", other_dir}) == 0);
  CHECK(run({"eval", "--config", cfg, "--data", other_dir}) == 2);
  CHECK(run({"eval", "--config", cfg, "--ckpt", (tmp.path / "nope.json").string()}) == 2);
}

TEST_CASE("weights on the worked-example counts") {
  TempDir tmp("lpr_cli_weights");
  nlohmann::json counts = {{"answers", {"2", "4", "3", "1"}},
                           {"types", {"how many"}},
                           {"counts", {{80, 4, 10, 6}}}};
  std::ofstream(tmp.path / "counts.json") << counts.dump();
  const auto out = tmp.path / "w" / "weights.csv";
  REQUIRE(run({"weights", "--counts", (tmp.path / "counts.json").string(), "--out", out.string()}) == 0);
  std::istringstream csv(slurp(out));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "type,answer,raw,smoothed");
  std::getline(csv, line);
  CHECK(line.rfind("how many,2,0.25,", 0) == 0);
  CHECK(std::stod(line.substr(line.rfind(',') + 1)) ==
        doctest::Approx(0.8259394198788436).epsilon(1e-15));
  std::getline(csv, line);
  CHECK(line.rfind("how many,4,24,", 0) == 0);
  CHECK(std::stod(line.substr(line.rfind(',') + 1)) ==
        doctest::Approx(24.00000000003775).epsilon(1e-15));

  CHECK(run({"weights", "--counts", (tmp.path / "missing.json").string(), "--out", out.string()}) == 2);
  CHECK(run({"weights", "--counts", (tmp.path / "counts.json").string()}) == 2);
}
