#include "avatar/image_io.hpp"

#include "avatar/types.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace avatar {

namespace {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

} // namespace

ImagePlane read_png(const std::filesystem::path &path, int channels) {
    if (channels != 1 && channels != 3) throw std::invalid_argument("read_png: channels must be 1 or 3");
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw DataError("cannot open image " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
        throw DataError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng initialization failed");
    }
    std::vector<png_byte> buffer;
    std::vector<png_bytep> rows;
    int width = 0, height = 0, src_channels = 0, depth = 0;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("corrupt PNG: " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color_type = png_get_color_type(png, info);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_swap(png); // 16-bit samples in host (little-endian) order
    png_read_update_info(png, info);
    width = static_cast<int>(png_get_image_width(png, info));
    height = static_cast<int>(png_get_image_height(png, info));
    src_channels = png_get_channels(png, info);
    depth = png_get_bit_depth(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * height);
    rows.resize(height);
    for (int y = 0; y < height; ++y) rows[y] = buffer.data() + stride * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    const double max_value = depth == 16 ? 65535.0 : 255.0;
    auto sample = [&](int x, int y, int c) {
        const png_byte *row = rows[y];
        if (depth == 16) {
            std::uint16_t v;
            std::copy_n(row + (static_cast<std::size_t>(x) * src_channels + c) * 2, 2, reinterpret_cast<png_byte *>(&v));
            return v / max_value;
        }
        return row[static_cast<std::size_t>(x) * src_channels + c] / max_value;
    };
    const bool gray = src_channels <= 2;
    ImagePlane out(width, height, channels);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            if (channels == 3) {
                for (int c = 0; c < 3; ++c) out.at(x, y, c) = sample(x, y, gray ? 0 : c);
            } else if (gray) {
                out.at(x, y, 0) = sample(x, y, 0);
            } else {
                out.at(x, y, 0) = (sample(x, y, 0) + sample(x, y, 1) + sample(x, y, 2)) / 3.0;
            }
        }
    return out;
}

void write_png(const std::filesystem::path &path, const ImagePlane &image, int bit_depth) {
    if (image.channels != 1 && image.channels != 3) throw std::invalid_argument("write_png: channels must be 1 or 3");
    if (bit_depth != 8 && bit_depth != 16) throw std::invalid_argument("write_png: bit depth must be 8 or 16");
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw DataError("cannot write image " + path.string());

    const int bytes = bit_depth / 8;
    const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels * bytes;
    std::vector<png_byte> buffer(stride * image.height);
    for (int y = 0; y < image.height; ++y)
        for (int x = 0; x < image.width; ++x)
            for (int c = 0; c < image.channels; ++c) {
                const double v = std::clamp(image.at(x, y, c), 0.0, 1.0);
                const auto q = static_cast<unsigned>(std::lround(v * max_value));
                png_byte *dst = buffer.data() + y * stride + (static_cast<std::size_t>(x) * image.channels + c) * bytes;
                if (bytes == 2) {
                    dst[0] = static_cast<png_byte>(q >> 8);
                    dst[1] = static_cast<png_byte>(q & 0xff);
                } else {
                    dst[0] = static_cast<png_byte>(q);
                }
            }
    std::vector<png_bytep> rows(image.height);
    for (int y = 0; y < image.height; ++y) rows[y] = buffer.data() + y * stride;

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("failed writing PNG " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, image.width, image.height, bit_depth,
                 image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_normal_png(const std::filesystem::path &path, const ImagePlane &normals) {
    ImagePlane mapped = normals;
    for (double &v : mapped.data) v = 0.5 * (v + 1.0);
    write_png(path, mapped, 16);
}

ImagePlane read_normal_png(const std::filesystem::path &path) {
    ImagePlane img = read_png(path, 3);
    for (double &v : img.data) v = 2.0 * v - 1.0;
    return img;
}

} // namespace avatar
