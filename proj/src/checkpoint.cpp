#include "lpr/checkpoint.hpp"

#include <fstream>

#include "lpr/errors.hpp"

namespace lpr {
namespace {

constexpr const char* kFormat = "lpr-checkpoint";
constexpr int kVersion = 1;

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"W", data}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("W").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw InputError("checkpoint matrix has inconsistent shape");
  }
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++];
  }
  return m;
}

nlohmann::json layer_to_json(const DenseLayer& layer) {
  auto j = matrix_to_json(layer.W);
  j["b"] = std::vector<double>(layer.b.data(), layer.b.data() + layer.b.size());
  return j;
}

DenseLayer layer_from_json(const nlohmann::json& j) {
  DenseLayer layer;
  layer.W = matrix_from_json(j);
  const auto b = j.at("b").get<std::vector<double>>();
  layer.b = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return layer;
}

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  const auto& p = ckpt.params;
  nlohmann::json groups;
  groups["q_encoder"] = layer_to_json(p.q_encoder);
  groups["v_encoder"] = layer_to_json(p.v_encoder);
  groups["fusion"] = layer_to_json(p.fusion);
  groups["classifier"] = layer_to_json(p.classifier);
  auto mask = matrix_to_json(p.mask.W_q);
  mask["dropout_rate"] = p.mask.dropout_rate;
  mask["alpha"] = p.mask.alpha;
  return {{"format", kFormat},       {"version", kVersion},
          {"activation", to_string(p.activation)},
          {"use_mask", p.use_mask},  {"answers", ckpt.answers},
          {"types", ckpt.types},     {"config", ckpt.config},
          {"groups", groups},        {"mask", mask}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) throw InputError("not an lpr checkpoint");
    if (j.at("version").get<int>() != kVersion) throw InputError("unsupported checkpoint version");
    Checkpoint ckpt;
    auto& p = ckpt.params;
    p.activation = activation_from_string(j.at("activation").get<std::string>());
    p.use_mask = j.at("use_mask").get<bool>();
    const auto& g = j.at("groups");
    p.q_encoder = layer_from_json(g.at("q_encoder"));
    p.v_encoder = layer_from_json(g.at("v_encoder"));
    p.fusion = layer_from_json(g.at("fusion"));
    p.classifier = layer_from_json(g.at("classifier"));
    const auto& m = j.at("mask");
    p.mask.W_q = matrix_from_json(m);
    p.mask.dropout_rate = m.at("dropout_rate").get<double>();
    p.mask.alpha = m.at("alpha").get<double>();
    ckpt.answers = j.at("answers").get<std::vector<std::string>>();
    ckpt.types = j.at("types").get<std::vector<std::string>>();
    ckpt.config = j.value("config", nlohmann::json::object());
    p.validate();
    if (ckpt.answers.size() != p.num_answers()) {
      throw InputError("checkpoint answers do not match classifier size");
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(ckpt).dump() << '\n';
  if (!out) throw InputError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint: " + std::string(e.what()));
  }
  return checkpoint_from_json(j);
}

}  // namespace lpr
