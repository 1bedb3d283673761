#pragma once

#include "avatar/image.hpp"

#include <filesystem>

namespace avatar {

/// Reads an 8- or 16-bit PNG as values in [0, 1]. Gray, gray+alpha, RGB and RGBA
/// are accepted; alpha is dropped. `channels` (1 or 3) selects the output layout.
ImagePlane read_png(const std::filesystem::path &path, int channels);

/// Writes a 1- or 3-channel plane, clamping to [0, 1] and rounding to the nearest level.
void write_png(const std::filesystem::path &path, const ImagePlane &image, int bit_depth);

/// Signed unit normals stored as (n + 1) / 2 in 16-bit channels.
void write_normal_png(const std::filesystem::path &path, const ImagePlane &normals);
ImagePlane read_normal_png(const std::filesystem::path &path);

} // namespace avatar
