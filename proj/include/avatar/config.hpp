#pragma once

#include "avatar/model.hpp"
#include "avatar/synth.hpp"
#include "avatar/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace avatar {

/// Flat "section.key" -> value map.
using ConfigMap = std::map<std::string, std::string>;

/// key = value lines; '#' starts a comment; "[name]" prefixes following keys with "name.".
/// Values may be double-quoted. Malformed lines throw DataError with the line number.
ConfigMap parse_config(const std::string &text);
ConfigMap load_config(const std::filesystem::path &path);

/// "section.key=value" as given on the command line.
void apply_override(ConfigMap &config, const std::string &assignment);

struct Settings {
    TrainConfig train;
    ModelOptions model;
    SynthConfig synth;
    std::size_t eval_samples = 100000;
};

/// Unknown keys and unparsable values throw DataError naming the key.
Settings resolve_settings(const ConfigMap &config);

/// Every recognised key with its effective value, for the checkpoint echo.
ConfigMap echo_settings(const Settings &settings);

} // namespace avatar
