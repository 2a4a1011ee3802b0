#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "txsp/training.hpp"

namespace txsp {

/// Every accepted "section.key" in config files and overrides, in the order
/// they are echoed.
const std::vector<std::string>& config_keys();

/// Sets one key from its textual value. Unknown keys and unparsable values
/// raise ConfigError naming the key.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

std::string get_setting(const TrainConfig& cfg, const std::string& key);

/// Reads a TOML-style file of `key = value` lines, optionally grouped under
/// [section] headers (so `[train]\nh = 64` and `train.h = 64` are the same
/// key). String values may be quoted. The result is validated.
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Applies "key=value" overrides on top of `cfg`, then validates.
TrainConfig apply_overrides(TrainConfig cfg, const std::vector<std::string>& overrides);

/// Flat {"section.key": "value"} echo of every setting.
json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const json& j);

}  // namespace txsp

namespace txsp {

/// Generator weights as an archive whose header also records the generator
/// settings, the resize convention and the batch-norm constants.
void save_generator(const std::filesystem::path& path, const ParamSet<float>& weights,
                    const GeneratorConfig& cfg);

/// Loads and validates against the recorded (or default) generator layout.
/// Any missing, extra or mis-shaped tensor raises ArchiveError naming it.
std::pair<ParamSet<float>, GeneratorConfig> load_generator(const std::filesystem::path& path);

}  // namespace txsp
