#pragma once

// Basic single-channel image and binary mask containers shared by all modules.
// Intensities are stored as float in [0,1]; file I/O converts from 8-bit.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xray {

struct Image {
    int height = 0;
    int width = 0;
    std::vector<float> data;  // row-major, height*width

    Image() = default;
    Image(int h, int w, float fill = 0.0f)
        : height(h), width(w), data(static_cast<size_t>(h) * w, fill) {
        if (h < 1 || w < 1) throw std::invalid_argument("Image: dims must be >= 1");
    }

    float& at(int r, int c) { return data[static_cast<size_t>(r) * width + c]; }
    float at(int r, int c) const { return data[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }

    // Bilinear sample at (x, y) in pixel coordinates; out-of-bounds reads as 0.
    float sample_bilinear(double x, double y) const {
        if (x <= -1.0 || y <= -1.0 || x >= width || y >= height) return 0.0f;
        int x0 = static_cast<int>(std::floor(x));
        int y0 = static_cast<int>(std::floor(y));
        double fx = x - x0, fy = y - y0;
        auto px = [&](int r, int c) -> double {
            if (r < 0 || r >= height || c < 0 || c >= width) return 0.0;
            return at(r, c);
        };
        double v00 = px(y0, x0), v01 = px(y0, x0 + 1);
        double v10 = px(y0 + 1, x0), v11 = px(y0 + 1, x0 + 1);
        double top = v00 * (1.0 - fx) + v01 * fx;
        double bot = v10 * (1.0 - fx) + v11 * fx;
        return static_cast<float>(top * (1.0 - fy) + bot * fy);
    }
};

struct Mask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> bits;  // row-major, values in {0,1}

    Mask() = default;
    Mask(int h, int w, uint8_t fill = 0)
        : height(h), width(w), bits(static_cast<size_t>(h) * w, fill) {
        if (h < 1 || w < 1) throw std::invalid_argument("Mask: dims must be >= 1");
    }

    uint8_t& at(int r, int c) { return bits[static_cast<size_t>(r) * width + c]; }
    uint8_t at(int r, int c) const { return bits[static_cast<size_t>(r) * width + c]; }
    size_t size() const { return bits.size(); }

    size_t count() const {
        size_t n = 0;
        for (uint8_t b : bits) n += b;
        return n;
    }
    bool same_shape(const Image& img) const {
        return height == img.height && width == img.width;
    }
};

inline Mask full_mask(int h, int w) { return Mask(h, w, 1); }

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// Map [0,1] intensity to an 8-bit level (round-to-nearest).
inline int to_level(float v) {
    int l = static_cast<int>(clamp01(v) * 255.0f + 0.5f);
    return l > 255 ? 255 : l;
}

inline float from_level(int level) { return static_cast<float>(level) / 255.0f; }

}  // namespace xray
