#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace avatar {

/// Row-major H x W image with interleaved float64 channels.
struct ImagePlane {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    ImagePlane() = default;
    ImagePlane(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double &at(int x, int y, int c) { return data[index(x, y, c)]; }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }

    bool same_shape(const ImagePlane &o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

/// Channels [first, first + count) of img as a new image.
ImagePlane slice_channels(const ImagePlane &img, int first, int count);

} // namespace avatar
