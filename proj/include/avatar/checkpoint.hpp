#pragma once

#include "avatar/model.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace avatar {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
    std::uint64_t seed = 0;
    int epoch = 0; // last completed epoch
    int stage = 0;
    std::map<std::string, std::string> config; // echo of the effective configuration
};

struct LoadedCheckpoint {
    AvatarModel model;
    CheckpointMeta meta;
};

// Layout: 8-byte magic, u32 version, u64 header length, JSON header with sorted keys,
// then the arrays listed in the header as little-endian float64. Adam moments are not stored.
std::string serialize_checkpoint(const AvatarModel &model, const CheckpointMeta &meta);
LoadedCheckpoint deserialize_checkpoint(const std::string &bytes);

void save_checkpoint(const std::filesystem::path &path, const AvatarModel &model, const CheckpointMeta &meta);
LoadedCheckpoint load_checkpoint(const std::filesystem::path &path);

} // namespace avatar
