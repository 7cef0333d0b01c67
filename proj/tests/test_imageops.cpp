#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "xray/imageops.hpp"
#include "xray/rng.hpp"

using namespace xray;
using namespace xray::imageops;

namespace {

Image const_image(int h, int w, float v) { return Image(h, w, v); }

Histogram random_histogram(Rng& rng, int nonzero_bins) {
    Histogram h;
    for (int i = 0; i < nonzero_bins; ++i)
        h.bins[rand_below(rng, 256)] += 1 + rand_below(rng, 1000);
    return h;
}

}  // namespace

TEST_CASE("otsu on two equal delta spikes picks the lowest separating level") {
    Histogram h;
    h.bins[50] = 1000;
    h.bins[200] = 1000;
    auto r = otsu_threshold(h);
    CHECK_FALSE(r.degenerate);
    CHECK(r.level >= 50);
    CHECK(r.level <= 199);
    CHECK(r.level == 50);  // lowest-tie rule
}

TEST_CASE("otsu on a constant image is degenerate") {
    Histogram h;
    h.bins[137] = 4096;
    auto r = otsu_threshold(h);
    CHECK(r.degenerate);
    CHECK(r.level == 137);
}

TEST_CASE("otsu on a bimodal gaussian mixture lands between the modes") {
    Rng rng(7);
    Histogram h;
    for (int i = 0; i < 20000; ++i) {
        double v = 60.0 + 20.0 * rand_normal(rng);
        int l = std::clamp(static_cast<int>(std::lround(v)), 0, 255);
        h.bins[l] += 1;
        v = 180.0 + 20.0 * rand_normal(rng);
        l = std::clamp(static_cast<int>(std::lround(v)), 0, 255);
        h.bins[l] += 1;
    }
    auto r = otsu_threshold(h);
    CHECK(r.level == oracles::otsu_exhaustive(h));
    CHECK(r.level >= 110);
    CHECK(r.level <= 130);
}

TEST_CASE("otsu matches the exhaustive search on random histograms") {
    Rng rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        Histogram h = random_histogram(rng, 2 + rand_below(rng, 40));
        auto r = otsu_threshold(h);
        if (r.degenerate) continue;
        CHECK(r.level == oracles::otsu_exhaustive(h));
    }
}

TEST_CASE("histogram bins sum to the (masked) pixel count") {
    Rng rng(12);
    Image img(9, 11);
    for (float& v : img.data) v = static_cast<float>(rand_uniform(rng));
    CHECK(compute_histogram(img).total() == img.size());

    Mask m(9, 11, 0);
    for (size_t i = 0; i < m.bits.size(); i += 3) m.bits[i] = 1;
    CHECK(compute_histogram(img, &m).total() == m.count());
}

TEST_CASE("binarize") {
    CHECK(binarize(const_image(4, 4, 1.0f), 0.5).count() == 16);
    CHECK(binarize(const_image(4, 4, 0.0f), 0.5).count() == 0);

    Image checker(4, 4, 0.0f);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) checker.at(r, c) = (r + c) % 2 ? 1.0f : 0.0f;
    Mask m = binarize(checker, 0.5);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) CHECK(m.at(r, c) == ((r + c) % 2 ? 1 : 0));
}

TEST_CASE("largest_component keeps the biggest blob, identity on one blob") {
    Mask single(8, 8, 0);
    for (int r = 2; r < 5; ++r)
        for (int c = 2; c < 5; ++c) single.at(r, c) = 1;
    Mask out = largest_component(single);
    CHECK(out.bits == single.bits);

    Mask two(8, 16, 0);
    for (int r = 1; r < 6; ++r)
        for (int c = 1; c < 3; ++c) two.at(r, c) = 1;  // 10 pixels
    two.at(7, 12) = two.at(7, 13) = two.at(7, 14) = 1;  // 3 pixels
    out = largest_component(two);
    CHECK(out.count() == 10);
    CHECK(out.at(1, 1) == 1);
    CHECK(out.at(7, 12) == 0);

    Mask ones(5, 5, 1);
    CHECK(largest_component(ones).count() == 25);

    Mask zero(4, 4, 0);
    CHECK_THROWS(largest_component(zero));
}

TEST_CASE("min_area_rect on an axis-aligned box") {
    std::vector<Point2d> pts = {{0, 0}, {2, 0}, {2, 1}, {0, 1}};
    RotatedRect r = min_area_rect(pts);
    CHECK_FALSE(r.degenerate);
    CHECK(r.center.x == Catch::Approx(1.0));
    CHECK(r.center.y == Catch::Approx(0.5));
    CHECK(r.width == Catch::Approx(2.0));
    CHECK(r.height == Catch::Approx(1.0));
    CHECK(r.angle_deg == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("min_area_rect on a rotated unit square") {
    double s = std::sqrt(2.0) / 2.0;
    std::vector<Point2d> pts = {{0, 0}, {s, s}, {0, 2 * s}, {-s, s}};
    RotatedRect r = min_area_rect(pts);
    CHECK(r.area() == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(r.width == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(r.height == Catch::Approx(1.0).epsilon(1e-9));
    CHECK(r.angle_deg == Catch::Approx(-45.0).margin(1e-6));
}

TEST_CASE("min_area_rect never beats nor misses the brute-force area") {
    Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Point2d> pts;
        int n = 4 + rand_below(rng, 60);
        for (int i = 0; i < n; ++i)
            pts.push_back({rand_uniform(rng, -50, 50), rand_uniform(rng, -50, 50)});
        RotatedRect r = min_area_rect(pts);

        double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
        for (const auto& p : pts) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
        double aabb = (max_x - min_x) * (max_y - min_y);
        CHECK(r.area() <= aabb * (1 + 1e-9));

        double brute = oracles::min_rect_area_bruteforce(pts);
        CHECK(std::fabs(r.area() - brute) <= 1e-6 * std::max(1.0, brute));
    }
}

TEST_CASE("min_area_rect flags collinear input") {
    std::vector<Point2d> pts = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    RotatedRect r = min_area_rect(pts);
    CHECK(r.degenerate);
    CHECK(r.height == Catch::Approx(0.0));
}

TEST_CASE("crop_rotated at angle zero is an exact slice") {
    Rng rng(3);
    Image img(12, 16);
    for (float& v : img.data) v = static_cast<float>(rand_uniform(rng));
    // rows 3..8, cols 5..12 (6x8 region)
    RotatedRect rect;
    rect.center = {8.5, 5.5};
    rect.width = 8;
    rect.height = 6;
    rect.angle_deg = 0;
    Image out = crop_rotated(img, rect);
    REQUIRE(out.height == 6);
    REQUIRE(out.width == 8);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 8; ++c) CHECK(out.at(r, c) == img.at(3 + r, 5 + c));
}

TEST_CASE("crop_rotated at -90 degrees matches the transpose oracle") {
    Rng rng(5);
    Image img(9, 9);
    for (float& v : img.data) v = static_cast<float>(rand_uniform(rng));
    RotatedRect rect;
    rect.center = {4.0, 4.0};
    rect.width = 9;
    rect.height = 9;
    rect.angle_deg = -90;
    Image out = crop_rotated(img, rect);
    // width direction points along -y: the crop walks the source transposed
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c) CHECK(out.at(r, c) == Catch::Approx(img.at(8 - c, r)).margin(1e-6));
}

TEST_CASE("crop_rotated pads out-of-bounds samples with zero") {
    Image img(6, 6, 1.0f);
    RotatedRect rect;
    rect.center = {0.0, 2.5};  // half outside on the left
    rect.width = 6;
    rect.height = 6;
    rect.angle_deg = 0;
    Image out = crop_rotated(img, rect);
    CHECK(out.at(2, 0) == 0.0f);
    CHECK(out.at(2, 5) == 1.0f);

    RotatedRect degenerate;
    degenerate.center = {2, 2};
    degenerate.width = 0.2;
    degenerate.height = 0;
    CHECK_THROWS(crop_rotated(img, degenerate));
}

TEST_CASE("histogram_equalize maps a two-level image onto its cdf") {
    Image img(2, 2);
    img.at(0, 0) = img.at(0, 1) = 0.2f;
    img.at(1, 0) = img.at(1, 1) = 0.4f;
    Image out = histogram_equalize(img);
    CHECK(out.at(0, 0) == Catch::Approx(0.5).margin(0.01));
    CHECK(out.at(1, 0) == Catch::Approx(1.0).margin(0.01));
}

TEST_CASE("histogram_equalize is a fixed point on uniform data and constants") {
    Image uniform(16, 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 16; ++c) uniform.at(r, c) = from_level(r * 16 + c);
    Image out = histogram_equalize(uniform);
    for (size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data[i] == Catch::Approx(uniform.data[i]).margin(1.0 / 128.0));

    Image constant(4, 4, 0.3f);
    Image cout_ = histogram_equalize(constant);
    for (float v : cout_.data) CHECK(v == cout_.data[0]);
}

TEST_CASE("histogram_equalize preserves intensity ordering") {
    Rng rng(17);
    Image img(20, 20);
    for (float& v : img.data) v = static_cast<float>(rand_uniform(rng));
    Image out = histogram_equalize(img);
    for (size_t i = 0; i < img.data.size(); ++i)
        for (size_t j = 0; j < img.data.size(); j += 37)
            if (img.data[i] <= img.data[j]) CHECK(out.data[i] <= out.data[j]);
}

TEST_CASE("min_max_normalize maps the range onto [0,1] and is idempotent") {
    Image img(2, 3);
    float vals[] = {0.2f, 0.45f, 0.7f, 0.3f, 0.55f, 0.6f};
    std::copy(vals, vals + 6, img.data.begin());
    Image out = min_max_normalize(img);
    for (size_t i = 0; i < out.data.size(); ++i) {
        float expect = (vals[i] - 0.2f) / 0.5f;  // affine oracle
        CHECK(out.data[i] == Catch::Approx(expect).margin(1e-6));
    }
    Image twice = min_max_normalize(out);
    for (size_t i = 0; i < out.data.size(); ++i)
        CHECK(twice.data[i] == Catch::Approx(out.data[i]).margin(1e-6));

    Image spanning(1, 3);
    spanning.data = {0.0f, 0.5f, 1.0f};
    Image same = min_max_normalize(spanning);
    for (size_t i = 0; i < 3; ++i) CHECK(same.data[i] == Catch::Approx(spanning.data[i]).margin(1e-6));

    Image constant(3, 3, 0.5f);
    Image zeros = min_max_normalize(constant);
    for (float v : zeros.data) CHECK(v == 0.0f);
}

TEST_CASE("min_max_normalize respects the mask") {
    Image img(1, 4);
    img.data = {0.0f, 0.2f, 0.7f, 1.0f};
    Mask m(1, 4, 0);
    m.bits = {0, 1, 1, 0};
    Image out = min_max_normalize(img, &m);
    CHECK(out.data[1] == Catch::Approx(0.0));
    CHECK(out.data[2] == Catch::Approx(1.0));
    CHECK(out.data[0] == 0.0f);  // below masked min, clamped
    CHECK(out.data[3] == 1.0f);  // above masked max, clamped
}

TEST_CASE("resize_keep_aspect hits the documented shapes") {
    CHECK(resize_keep_aspect(Image(512, 256, 0.5f), 128).width == 64);
    CHECK(resize_keep_aspect(Image(512, 256, 0.5f), 128).height == 128);
    Image same = resize_keep_aspect(Image(128, 128, 0.25f), 128);
    CHECK(same.height == 128);
    CHECK(same.width == 128);
    Image thin = resize_keep_aspect(Image(512, 160, 0.5f), 128);
    CHECK(thin.height == 128);
    CHECK(thin.width == 40);  // round(160*128/512)
    for (float v : thin.data) CHECK(v == Catch::Approx(0.5f).margin(1e-6));
}

TEST_CASE("pad_center offsets and round trip") {
    auto [p1, off1] = pad_center(Image(128, 64, 1.0f), 128, 128);
    CHECK(off1.row == 0);
    CHECK(off1.col == 32);
    CHECK(p1.at(0, 31) == 0.0f);
    CHECK(p1.at(0, 32) == 1.0f);

    auto [p2, off2] = pad_center(Image(4, 4, 0.7f), 4, 4);
    CHECK(off2.row == 0);
    CHECK(off2.col == 0);

    auto [p3, off3] = pad_center(Image(510, 400, 0.1f), 512, 512);
    CHECK(off3.row == 1);
    CHECK(off3.col == 56);

    CHECK_THROWS(pad_center(Image(10, 10, 0.0f), 8, 12));

    // pad followed by center crop is the identity
    Rng rng(29);
    Image img(11, 7);
    for (float& v : img.data) v = static_cast<float>(rand_uniform(rng));
    auto [padded, off] = pad_center(img, 16, 16);
    for (int r = 0; r < 11; ++r)
        for (int c = 0; c < 7; ++c) CHECK(padded.at(r + off.row, c + off.col) == img.at(r, c));
}

TEST_CASE("morphology: closing and hole filling") {
    Mask blob(12, 12, 0);
    for (int r = 3; r < 9; ++r)
        for (int c = 3; c < 9; ++c) blob.at(r, c) = 1;
    blob.at(5, 5) = blob.at(5, 6) = 0;  // 2-pixel interior hole
    Mask filled = fill_holes(blob);
    CHECK(filled.at(5, 5) == 1);
    CHECK(filled.at(5, 6) == 1);
    CHECK(filled.at(0, 0) == 0);

    Mask closed = morph_close(blob, 2);
    CHECK(closed.at(5, 5) == 1);  // closing bridges the small hole too
}
