#pragma once

// Synthetic radiograph-style fixtures: a bright carrier rectangle on a dark
// frame, a smooth gaussian blob ("hand") on the carrier, and optionally a
// high-intensity 6x6 square anomaly inside the blob. Used by the CLI tests
// and the acceptance suite.

#include <filesystem>
#include <string>
#include <vector>

#include "xray/image.hpp"
#include "xray/png_io.hpp"
#include "xray/rng.hpp"

namespace synthetic {

struct Fixture {
    xray::Image image;
    xray::Mask anomaly;   // 6x6 square, empty extent when normal
    bool positive = false;
};

struct FixtureOptions {
    int size = 64;
    bool clutter = false;  // bright specks and border streaks outside the carrier
};

inline Fixture make_fixture(xray::Rng& rng, bool anomalous, const FixtureOptions& opt = {}) {
    const int n = opt.size;
    Fixture fx;
    fx.image = xray::Image(n, n, 0.0f);
    fx.anomaly = xray::Mask(n, n, 0);
    fx.positive = anomalous;

    // dark frame with mild sensor noise
    for (float& v : fx.image.data)
        v = static_cast<float>(0.02 + 0.01 * xray::rand_uniform(rng));

    // carrier rectangle with a jittered margin
    int top = 2 + static_cast<int>(xray::rand_below(rng, 3));
    int left = 3 + static_cast<int>(xray::rand_below(rng, 3));
    int bottom = n - 3 - static_cast<int>(xray::rand_below(rng, 3));
    int right = n - 4 - static_cast<int>(xray::rand_below(rng, 3));
    for (int r = top; r <= bottom; ++r)
        for (int c = left; c <= right; ++c)
            fx.image.at(r, c) = static_cast<float>(0.25 + 0.02 * xray::rand_uniform(rng));

    // smooth bright blob
    double cy = n / 2.0 + xray::rand_uniform(rng, -5.0, 5.0);
    double cx = n / 2.0 + xray::rand_uniform(rng, -5.0, 5.0);
    double radius = xray::rand_uniform(rng, 9.0, 13.0);
    double peak = xray::rand_uniform(rng, 0.55, 0.65);
    for (int r = top; r <= bottom; ++r)
        for (int c = left; c <= right; ++c) {
            double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
            double v = peak * std::exp(-d2 / (2.0 * radius * radius / 4.0));
            fx.image.at(r, c) = xray::clamp01(fx.image.at(r, c) + static_cast<float>(v));
        }

    if (anomalous) {
        // 6x6 high-intensity square inside the blob core
        int ar = static_cast<int>(cy + xray::rand_uniform(rng, -radius / 3.0, radius / 3.0)) - 3;
        int ac = static_cast<int>(cx + xray::rand_uniform(rng, -radius / 3.0, radius / 3.0)) - 3;
        ar = std::clamp(ar, top, bottom - 5);
        ac = std::clamp(ac, left, right - 5);
        for (int r = ar; r < ar + 6; ++r)
            for (int c = ac; c < ac + 6; ++c) {
                fx.image.at(r, c) = 1.0f;
                fx.anomaly.at(r, c) = 1;
            }
    }

    if (opt.clutter) {
        // bright specks in the off-carrier margin
        int specks = static_cast<int>(xray::rand_below(rng, 14));
        for (int s = 0; s < specks; ++s) {
            int sz = 3 + static_cast<int>(xray::rand_below(rng, 3));
            bool vertical_band = xray::rand_uniform(rng) < 0.5;
            int r0, c0;
            if (vertical_band) {
                r0 = static_cast<int>(xray::rand_below(rng, static_cast<uint32_t>(n - sz)));
                c0 = xray::rand_uniform(rng) < 0.5 ? 0 : n - sz;
            } else {
                r0 = xray::rand_uniform(rng) < 0.5 ? 0 : n - sz;
                c0 = static_cast<int>(xray::rand_below(rng, static_cast<uint32_t>(n - sz)));
            }
            float val = static_cast<float>(xray::rand_uniform(rng, 0.7, 1.0));
            for (int r = r0; r < r0 + sz; ++r)
                for (int c = c0; c < c0 + sz; ++c) fx.image.at(r, c) = val;
        }
        // border streak of random brightness
        float border = static_cast<float>(xray::rand_uniform(rng, 0.0, 0.9));
        for (int c = 0; c < n; ++c) {
            fx.image.at(0, c) = border;
            fx.image.at(n - 1, c) = border;
        }
    }
    return fx;
}

// Writes a MURA-layout dataset: <root>/<patient>/<study>_<label>/<image>.png,
// one study with one image per patient. Returns the generated fixtures in
// patient order (p0000, p0001, ...), normals first.
inline std::vector<Fixture> write_dataset(const std::string& root, int normals, int anomalies,
                                          uint32_t seed, const FixtureOptions& opt = {}) {
    namespace fs = std::filesystem;
    xray::Rng rng(seed);
    std::vector<Fixture> fixtures;
    int patient = 0;
    auto emit = [&](bool anomalous) {
        Fixture fx = make_fixture(rng, anomalous, opt);
        char pid[16];
        std::snprintf(pid, sizeof(pid), "p%04d", patient++);
        std::string dir = root + "/" + pid + "/study1_" + (anomalous ? "positive" : "negative");
        fs::create_directories(dir);
        xray::io::write_image(dir + "/image1.png", fx.image);
        fixtures.push_back(std::move(fx));
    };
    for (int i = 0; i < normals; ++i) emit(false);
    for (int i = 0; i < anomalies; ++i) emit(true);
    return fixtures;
}

}  // namespace synthetic
