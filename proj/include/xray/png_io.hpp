#pragma once

// PNG encode/decode on top of libpng. Grayscale images round-trip through
// 8-bit; masks are stored as 0/255. Link with libpng (and zlib).

#include <png.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/core.hpp"
#include "xray/image.hpp"

namespace xray::io {

struct DecodedPng {
    int height = 0;
    int width = 0;
    int channels = 0;            // 1 or 3 after expansion
    std::vector<float> samples;  // interleaved, [0,1]
};

inline DecodedPng read_png(const std::string& path) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
    if (!fp) throw std::runtime_error("cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("failed to decode " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    png_byte color_type = png_get_color_type(png, info);
    png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("unsupported channel count in " + path);
    }

    std::vector<png_byte> row(static_cast<size_t>(w) * channels);
    DecodedPng out;
    out.width = static_cast<int>(w);
    out.height = static_cast<int>(h);
    out.channels = channels;
    out.samples.resize(static_cast<size_t>(w) * h * channels);
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        for (size_t i = 0; i < row.size(); ++i)
            out.samples[static_cast<size_t>(r) * row.size() + i] = row[i] / 255.0f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

// Decode + grayscale conversion in one step.
inline Image read_image(const std::string& path) {
    DecodedPng d = read_png(path);
    return core::to_grayscale(d.samples, d.height, d.width, d.channels);
}

inline Mask read_mask(const std::string& path) {
    DecodedPng d = read_png(path);
    Image g = core::to_grayscale(d.samples, d.height, d.width, d.channels);
    Mask m(g.height, g.width, 0);
    for (size_t i = 0; i < g.data.size(); ++i) m.bits[i] = g.data[i] > 0.5f ? 1 : 0;
    return m;
}

namespace detail {

inline void write_png_bytes(const std::string& path, const std::vector<png_byte>& bytes, int h, int w,
                            int channels) {
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) throw std::runtime_error("cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("failed to encode " + path);
    }

    png_init_io(png, fp.get());
    int color = channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, w, h, 8, color, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int r = 0; r < h; ++r)
        png_write_row(png, const_cast<png_byte*>(bytes.data() + static_cast<size_t>(r) * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace detail

inline void write_image(const std::string& path, const Image& img) {
    std::vector<png_byte> bytes(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) bytes[i] = static_cast<png_byte>(to_level(img.data[i]));
    detail::write_png_bytes(path, bytes, img.height, img.width, 1);
}

inline void write_mask(const std::string& path, const Mask& mask) {
    std::vector<png_byte> bytes(mask.bits.size());
    for (size_t i = 0; i < mask.bits.size(); ++i) bytes[i] = mask.bits[i] ? 255 : 0;
    detail::write_png_bytes(path, bytes, mask.height, mask.width, 1);
}

// rgb: interleaved [0,1] triples.
inline void write_rgb(const std::string& path, const std::vector<float>& rgb, int h, int w) {
    std::vector<png_byte> bytes(rgb.size());
    for (size_t i = 0; i < rgb.size(); ++i) bytes[i] = static_cast<png_byte>(to_level(rgb[i]));
    detail::write_png_bytes(path, bytes, h, w, 3);
}

// Loads a record's pixels from the dataset root, converting to grayscale when
// the file has three channels.
inline Image load_record_pixels(const core::DatasetIndex& index, const core::ImageRecord& rec) {
    return read_image(index.root + "/" + rec.source_path);
}

}  // namespace xray::io
