#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "mcatlas/training.hpp"

namespace mca {

// Malformed or inconsistent configuration text.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

nlohmann::json to_json(const AtlasArchitecture& arch);
nlohmann::json to_json(const TrainConfig& config);

// Missing keys keep their defaults; unknown keys and wrong types throw ConfigError.
AtlasArchitecture architecture_from_json(const nlohmann::json& j, AtlasArchitecture base = {});
TrainConfig config_from_json(const nlohmann::json& j, TrainConfig base = {});

TrainConfig read_config(const std::filesystem::path& path, TrainConfig base = {});
void write_config(const std::filesystem::path& path, const TrainConfig& config);

// Small architecture used by the CLI defaults and the desk-scale experiments.
AtlasArchitecture desk_architecture();

}  // namespace mca
