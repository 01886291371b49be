#include "mcatlas/config.hpp"

#include <fstream>
#include <set>

#include "mcatlas/io.hpp"

namespace mca {

using nlohmann::json;

nlohmann::json to_json(const AtlasArchitecture& arch) {
  return json{{"latent_dim", arch.latent_dim},
              {"patches", arch.patches},
              {"encoder_widths", arch.encoder_widths},
              {"decoder_widths", arch.decoder_widths}};
}

nlohmann::json to_json(const TrainConfig& c) {
  return json{{"lr", c.lr},
              {"batch_pairs", c.batch_pairs},
              {"iterations", c.iterations},
              {"alpha_mc", c.alpha_mc},
              {"delta", c.delta},
              {"uv_samples_per_frame", c.uv_samples_per_frame},
              {"milestones", c.milestones},
              {"lr_decay", c.lr_decay},
              {"seed", c.seed},
              {"strategy", to_string(c.strategy)},
              {"checkpoint_every", c.checkpoint_every},
              {"architecture", to_json(c.architecture)}};
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.contains(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("key '") + key + "' has the wrong type");
  }
}

// Integer keys must hold integral JSON numbers.
void read_int(const json& j, const char* key, int& out) {
  if (!j.contains(key)) return;
  if (!j.at(key).is_number_integer()) throw ConfigError(std::string("key '") + key + "' must be an integer");
  read(j, key, out);
}

}  // namespace

AtlasArchitecture architecture_from_json(const json& j, AtlasArchitecture a) {
  check_keys(j, {"latent_dim", "patches", "encoder_widths", "decoder_widths"}, "architecture");
  read_int(j, "latent_dim", a.latent_dim);
  read_int(j, "patches", a.patches);
  read(j, "encoder_widths", a.encoder_widths);
  read(j, "decoder_widths", a.decoder_widths);
  try {
    a.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return a;
}

TrainConfig config_from_json(const json& j, TrainConfig c) {
  check_keys(j,
             {"lr", "batch_pairs", "iterations", "alpha_mc", "delta", "uv_samples_per_frame", "milestones",
              "lr_decay", "seed", "strategy", "checkpoint_every", "architecture"},
             "config");
  read(j, "lr", c.lr);
  read_int(j, "batch_pairs", c.batch_pairs);
  read_int(j, "iterations", c.iterations);
  read(j, "alpha_mc", c.alpha_mc);
  read_int(j, "delta", c.delta);
  read_int(j, "uv_samples_per_frame", c.uv_samples_per_frame);
  read(j, "milestones", c.milestones);
  read(j, "lr_decay", c.lr_decay);
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<long long>() >= 0)) {
      throw ConfigError("key 'seed' must be a non-negative integer");
    }
    c.seed = j["seed"].get<std::uint64_t>();
  }
  if (j.contains("strategy")) {
    std::string s;
    read(j, "strategy", s);
    try {
      c.strategy = parse_pair_strategy(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  read_int(j, "checkpoint_every", c.checkpoint_every);
  if (j.contains("architecture")) c.architecture = architecture_from_json(j["architecture"], c.architecture);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

TrainConfig read_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, std::move(base));
}

void write_config(const std::filesystem::path& path, const TrainConfig& config) {
  ensure_parent_directory(path);
  std::ofstream out(path);
  out << to_json(config).dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
}

AtlasArchitecture desk_architecture() {
  AtlasArchitecture a;
  a.latent_dim = 64;
  a.patches = 10;
  a.encoder_widths = {32, 64, 128};
  a.decoder_widths = {64, 64, 32};
  return a;
}

}  // namespace mca
