#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "dqpinn/dqme/basis.hpp"
#include "dqpinn/errors.hpp"
#include "dqpinn/io/files.hpp"
#include "dqpinn/pinn/model.hpp"

namespace dqpinn::io {

inline std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Parameters are stored as JSON numbers, which round-trip doubles exactly.
inline nlohmann::ordered_json model_to_json(const pinn::Model& m, const dqme::RdtBasis& basis) {
  if (!m.finite()) throw CheckpointError("checkpoint: refusing to store non-finite parameters");
  const Eigen::VectorXd theta = pinn::flatten(m);
  nlohmann::ordered_json j;
  j["basis_hash"] = hex64(basis.hash());
  j["basis_size"] = basis.size();
  j["shape"] = {{"n_bits", m.shape.n_bits}, {"n_features", m.shape.n_features}, {"hidden", m.shape.hidden},
                {"layers", m.shape.layers}};
  j["features"] = m.features.names();
  j["t_start"] = m.t_start;
  j["t_end"] = m.t_end;
  j["theta"] = std::vector<double>(theta.data(), theta.data() + theta.size());
  return j;
}

inline pinn::Model model_from_json(const nlohmann::ordered_json& j, const dqme::RdtBasis& basis) {
  try {
    if (j.at("basis_hash").get<std::string>() != hex64(basis.hash()))
      throw CheckpointError("checkpoint: basis hash does not match the configured basis");
    pinn::Shape shape;
    const auto& s = j.at("shape");
    shape.n_bits = s.at("n_bits").get<int>();
    shape.n_features = s.at("n_features").get<int>();
    shape.hidden = s.at("hidden").get<int>();
    shape.layers = s.at("layers").get<int>();
    shape.validate();
    const auto features = pinn::FeatureMap::parse(j.at("features").get<std::vector<std::string>>());
    if (static_cast<int>(features.size()) != shape.n_features)
      throw CheckpointError("checkpoint: feature list and shape disagree");
    const auto theta = j.at("theta").get<std::vector<double>>();
    if (theta.size() != shape.real_parameters()) throw CheckpointError("checkpoint: parameter count mismatch");
    pinn::Model m = pinn::init_model(shape, features, 0);
    pinn::unflatten(Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size())), m);
    m.t_start = j.at("t_start").get<double>();
    m.t_end = j.at("t_end").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: malformed model: ") + e.what());
  }
}

inline void save_model(const pinn::Model& m, const dqme::RdtBasis& basis, const std::filesystem::path& path) {
  write_atomic(path, model_to_json(m, basis).dump(1) + "\n");
}

inline pinn::Model load_model(const std::filesystem::path& path, const dqme::RdtBasis& basis) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  return model_from_json(j, basis);
}

}  // namespace dqpinn::io
