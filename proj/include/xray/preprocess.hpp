#pragma once

// Offline stages (carrier cropping, hand localization, foreground
// segmentation) and online stages (equalization, augmentation, padding,
// normalization) of the preprocessing pipeline. Offline results are meant to
// be stored to disk once; online steps run while loading data.

#include <cmath>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/image.hpp"
#include "xray/imageops.hpp"
#include "xray/rng.hpp"

namespace xray::preprocess {

using imageops::Point2d;
using imageops::RotatedRect;

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

struct BoundingBox {
    int x = 0;
    int y = 0;
    int width = 0;
    int height = 0;
    double confidence = 0.0;
};

struct AugmentationPolicy {
    std::string name = "default";
    double p_hflip = 0.5;
    double p_vflip = 0.5;
    double p_brightness = 0.0;
    double brightness_lo = 0.8, brightness_hi = 1.2;  // multiplicative
    double p_scale = 0.0;
    double scale_lo = 0.8, scale_hi = 1.2;            // per-axis, independent
    double p_rotate = 0.0;
    double rotate_deg = 20.0;                         // U(-deg, +deg)
};

// Horizontal/vertical flips only.
inline AugmentationPolicy default_policy() {
    AugmentationPolicy p;
    p.name = "default";
    return p;
}

// Flips plus brightness, per-axis scaling and rotation.
inline AugmentationPolicy advanced_policy() {
    AugmentationPolicy p;
    p.name = "advanced";
    p.p_brightness = 0.5;
    p.p_scale = 0.5;
    p.p_rotate = 0.5;
    return p;
}

inline AugmentationPolicy no_augmentation() {
    AugmentationPolicy p;
    p.name = "none";
    p.p_hflip = p.p_vflip = 0.0;
    return p;
}

inline AugmentationPolicy policy_by_name(const std::string& name) {
    if (name == "default") return default_policy();
    if (name == "advanced") return advanced_policy();
    if (name == "none") return no_augmentation();
    throw std::invalid_argument("unknown augmentation policy: " + name);
}

struct PreprocessedRecord {
    Image pixels;
    Mask mask;
    std::vector<std::string> provenance;  // applied steps with parameters
};

// ---------------------------------------------------------------------------
// Carrier cropping
// ---------------------------------------------------------------------------

struct CropResult {
    Image image;
    RotatedRect rect;
    bool applied = false;
    std::string warning;  // empty when everything worked
};

// Detects the X-ray image carrier (Otsu -> binarize -> largest component ->
// minimum-area rectangle over the component pixels) and extracts it upright.
// If the rectangle covers more than 98% of the frame the carrier already
// fills the image and the input is returned unchanged.
inline CropResult crop_carrier(const Image& img) {
    CropResult res;
    auto hist = imageops::compute_histogram(img);
    auto otsu = imageops::otsu_threshold(hist);
    if (otsu.degenerate) {
        res.image = img;
        res.warning = "carrier detection failed: uniform image";
        return res;
    }
    Mask fg = imageops::binarize(img, imageops::level_to_threshold01(otsu.level));
    if (fg.count() == 0) {
        res.image = img;
        res.warning = "carrier detection failed: no foreground";
        return res;
    }
    Mask comp = imageops::largest_component(fg);

    std::vector<Point2d> pts;
    pts.reserve(comp.count());
    for (int r = 0; r < comp.height; ++r)
        for (int c = 0; c < comp.width; ++c)
            if (comp.at(r, c)) pts.push_back({static_cast<double>(c), static_cast<double>(r)});

    RotatedRect rect = imageops::min_area_rect(pts);
    if (rect.degenerate) {
        res.image = img;
        res.warning = "carrier detection failed: degenerate rectangle";
        return res;
    }
    // Pixel centers were used as points. For a pixel-axis-aligned component
    // the centers stop half a pixel short of the region edge on each side;
    // at other orientations the staircase corners already reach it.
    double off_axis = std::fabs(std::remainder(rect.angle_deg, 90.0));
    double grow = off_axis < 0.1 ? 1.0 : 0.3;
    rect.width += grow;
    rect.height += grow;

    double frame_area = static_cast<double>(img.height) * img.width;
    if (rect.area() > 0.98 * frame_area) {
        res.image = img;
        res.rect = rect;
        return res;
    }

    res.image = imageops::crop_rotated(img, rect);
    res.rect = rect;
    res.applied = true;
    return res;
}

// ---------------------------------------------------------------------------
// Hand localization
// ---------------------------------------------------------------------------

// Pluggable detector; a learned model can be swapped in behind this interface.
class HandDetector {
public:
    virtual ~HandDetector() = default;
    virtual std::vector<BoundingBox> detect(const Image& img) const = 0;
};

// Otsu foreground, up to two components exceeding 5% of the frame area,
// axis-aligned boxes dilated by 5% per side.
class HeuristicHandDetector final : public HandDetector {
public:
    std::vector<BoundingBox> detect(const Image& img) const override {
        auto hist = imageops::compute_histogram(img);
        auto otsu = imageops::otsu_threshold(hist);
        if (otsu.degenerate) return {};
        Mask fg = imageops::binarize(img, imageops::level_to_threshold01(otsu.level));
        auto comps = imageops::all_components(fg);

        double frame_area = static_cast<double>(img.height) * img.width;
        std::vector<std::pair<size_t, size_t>> big;  // (pixel count, comp idx)
        for (size_t i = 0; i < comps.size(); ++i)
            if (comps[i].second > 0.05 * frame_area) big.push_back({comps[i].second, i});
        std::sort(big.begin(), big.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        if (big.size() > 2) big.resize(2);

        std::vector<BoundingBox> boxes;
        for (const auto& [count, ci] : big) {
            const Mask& m = comps[ci].first;
            int min_r = m.height, max_r = -1, min_c = m.width, max_c = -1;
            for (int r = 0; r < m.height; ++r)
                for (int c = 0; c < m.width; ++c)
                    if (m.at(r, c)) {
                        min_r = std::min(min_r, r);
                        max_r = std::max(max_r, r);
                        min_c = std::min(min_c, c);
                        max_c = std::max(max_c, c);
                    }
            int bw = max_c - min_c + 1, bh = max_r - min_r + 1;
            int grow_w = static_cast<int>(std::lround(bw * 0.05));
            int grow_h = static_cast<int>(std::lround(bh * 0.05));
            BoundingBox b;
            b.x = std::max(0, min_c - grow_w);
            b.y = std::max(0, min_r - grow_h);
            b.width = std::min(img.width, max_c + 1 + grow_w) - b.x;
            b.height = std::min(img.height, max_r + 1 + grow_h) - b.y;
            b.confidence = static_cast<double>(count) / (static_cast<double>(bw) * bh);
            boxes.push_back(b);
        }
        return boxes;
    }
};

// Runs the detector and normalizes its output: one or two boxes sorted
// left-to-right; zero detections fall back to the whole frame, confidence 0.
inline std::vector<BoundingBox> detect_hands(const Image& img, const HandDetector& detector) {
    std::vector<BoundingBox> boxes = detector.detect(img);
    if (boxes.empty()) {
        BoundingBox full;
        full.x = 0;
        full.y = 0;
        full.width = img.width;
        full.height = img.height;
        full.confidence = 0.0;
        return {full};
    }
    if (boxes.size() > 2) {
        std::sort(boxes.begin(), boxes.end(),
                  [](const BoundingBox& a, const BoundingBox& b) { return a.confidence > b.confidence; });
        boxes.resize(2);
    }
    std::sort(boxes.begin(), boxes.end(), [](const BoundingBox& a, const BoundingBox& b) { return a.x < b.x; });
    return boxes;
}

inline Image crop_box(const Image& img, const BoundingBox& box) {
    int x0 = std::clamp(box.x, 0, img.width - 1);
    int y0 = std::clamp(box.y, 0, img.height - 1);
    int x1 = std::clamp(box.x + box.width, x0 + 1, img.width);
    int y1 = std::clamp(box.y + box.height, y0 + 1, img.height);
    Image out(y1 - y0, x1 - x0);
    for (int r = y0; r < y1; ++r)
        for (int c = x0; c < x1; ++c) out.at(r - y0, c - x0) = img.at(r, c);
    return out;
}

// ---------------------------------------------------------------------------
// Foreground segmentation
// ---------------------------------------------------------------------------

struct SegmentResult {
    Mask mask;
    std::string warning;
};

// Otsu binarization on the hand crop, largest component, morphological
// closing (radius 3) and hole filling. Degenerate thresholds yield an
// all-ones mask with a warning.
inline SegmentResult segment_foreground(const Image& img) {
    SegmentResult res;
    auto hist = imageops::compute_histogram(img);
    auto otsu = imageops::otsu_threshold(hist);
    if (otsu.degenerate) {
        res.mask = full_mask(img.height, img.width);
        res.warning = "segmentation failed: uniform image";
        return res;
    }
    Mask fg = imageops::binarize(img, imageops::level_to_threshold01(otsu.level));
    if (fg.count() == 0) {
        res.mask = full_mask(img.height, img.width);
        res.warning = "segmentation failed: no foreground";
        return res;
    }
    Mask comp = imageops::largest_component(fg);
    Mask closed = imageops::morph_close(comp, 3);
    res.mask = imageops::fill_holes(closed);
    return res;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

namespace detail {

inline void flip_horizontal(Image& img) {
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width / 2; ++c) std::swap(img.at(r, c), img.at(r, img.width - 1 - c));
}

inline void flip_horizontal(Mask& m) {
    for (int r = 0; r < m.height; ++r)
        for (int c = 0; c < m.width / 2; ++c) std::swap(m.at(r, c), m.at(r, m.width - 1 - c));
}

inline void flip_vertical(Image& img) {
    for (int r = 0; r < img.height / 2; ++r)
        for (int c = 0; c < img.width; ++c) std::swap(img.at(r, c), img.at(img.height - 1 - r, c));
}

inline void flip_vertical(Mask& m) {
    for (int r = 0; r < m.height / 2; ++r)
        for (int c = 0; c < m.width; ++c) std::swap(m.at(r, c), m.at(m.height - 1 - r, c));
}

// Inverse-mapped affine warp about the image center: output(r,c) samples the
// input at the pre-image of (c,r). Image uses bilinear, mask nearest-neighbor.
inline void warp_affine(Image& img, Mask& mask, double scale_x, double scale_y, double angle_deg) {
    const int h = img.height, w = img.width;
    double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    double theta = angle_deg * imageops::kPi / 180.0;
    double cos_t = std::cos(theta), sin_t = std::sin(theta);

    Image out_img(h, w, 0.0f);
    Mask out_mask(h, w, 0);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            // Invert rotate-then-scale: unrotate, then unscale.
            double dx = c - cx, dy = r - cy;
            double rx = cos_t * dx + sin_t * dy;
            double ry = -sin_t * dx + cos_t * dy;
            double sx = cx + rx / scale_x;
            double sy = cy + ry / scale_y;
            out_img.at(r, c) = img.sample_bilinear(sx, sy);
            int nr = static_cast<int>(std::lround(sy));
            int nc = static_cast<int>(std::lround(sx));
            if (nr >= 0 && nr < h && nc >= 0 && nc < w) out_mask.at(r, c) = mask.at(nr, nc);
        }
    }
    img = std::move(out_img);
    mask = std::move(out_mask);
}

}  // namespace detail

struct AugmentOutcome {
    Image pixels;
    Mask mask;
    std::vector<std::string> steps;
};

// Applies the policy's transforms in a fixed order (hflip, vflip, brightness,
// scale, rotate). Geometric transforms hit image and mask identically (mask
// via nearest-neighbor); the brightness multiplication touches pixels only and
// clips at 1. The draw order is fixed so a given rng state always produces the
// same outcome.
inline AugmentOutcome augment(const Image& pixels, const Mask& mask, const AugmentationPolicy& policy,
                              Rng& rng) {
    if (!mask.same_shape(pixels)) throw std::invalid_argument("augment: mask/pixels shape mismatch");
    AugmentOutcome out;
    out.pixels = pixels;
    out.mask = mask;

    if (rand_uniform(rng) < policy.p_hflip) {
        detail::flip_horizontal(out.pixels);
        detail::flip_horizontal(out.mask);
        out.steps.push_back("hflip");
    }
    if (rand_uniform(rng) < policy.p_vflip) {
        detail::flip_vertical(out.pixels);
        detail::flip_vertical(out.mask);
        out.steps.push_back("vflip");
    }
    if (rand_uniform(rng) < policy.p_brightness) {
        double f = rand_uniform(rng, policy.brightness_lo, policy.brightness_hi);
        for (float& v : out.pixels.data) v = clamp01(v * static_cast<float>(f));
        std::ostringstream ss;
        ss << "brightness x" << f;
        out.steps.push_back(ss.str());
    }
    double scale_x = 1.0, scale_y = 1.0, angle = 0.0;
    bool warp = false;
    if (rand_uniform(rng) < policy.p_scale) {
        scale_x = rand_uniform(rng, policy.scale_lo, policy.scale_hi);
        scale_y = rand_uniform(rng, policy.scale_lo, policy.scale_hi);
        warp = true;
        std::ostringstream ss;
        ss << "scale x" << scale_x << " y" << scale_y;
        out.steps.push_back(ss.str());
    }
    if (rand_uniform(rng) < policy.p_rotate) {
        angle = rand_uniform(rng, -policy.rotate_deg, policy.rotate_deg);
        warp = true;
        std::ostringstream ss;
        ss << "rotate " << angle;
        out.steps.push_back(ss.str());
    }
    if (warp) detail::warp_affine(out.pixels, out.mask, scale_x, scale_y, angle);
    return out;
}

// ---------------------------------------------------------------------------
// Online pipeline
// ---------------------------------------------------------------------------

// equalize? -> resize to the target's longer side if needed -> augment ->
// center pad -> min-max normalize. The mask follows every geometric step.
inline PreprocessedRecord online_pipeline(const Image& pixels, const Mask& mask,
                                          const AugmentationPolicy& policy, int target_h, int target_w,
                                          bool equalize, Rng& rng) {
    PreprocessedRecord rec;
    Image img = pixels;
    Mask m = mask;

    if (equalize) {
        img = imageops::histogram_equalize(img);
        rec.provenance.push_back("equalize");
    }

    int long_target = std::max(target_h, target_w);
    if (std::max(img.height, img.width) > long_target) {
        img = imageops::resize_keep_aspect(img, long_target);
        m = imageops::resize_nearest(m, img.height, img.width);
        std::ostringstream ss;
        ss << "resize " << img.height << "x" << img.width;
        rec.provenance.push_back(ss.str());
    }

    AugmentOutcome aug = augment(img, m, policy, rng);
    img = std::move(aug.pixels);
    m = std::move(aug.mask);
    for (auto& s : aug.steps) rec.provenance.push_back("augment:" + s);

    auto [padded, off] = imageops::pad_center(img, target_h, target_w);
    m = imageops::pad_center_mask(m, target_h, target_w);
    {
        std::ostringstream ss;
        ss << "pad " << target_h << "x" << target_w << " offset " << off.row << "," << off.col;
        rec.provenance.push_back(ss.str());
    }

    rec.pixels = imageops::min_max_normalize(padded);
    rec.provenance.push_back("minmax");
    rec.mask = std::move(m);
    return rec;
}

}  // namespace xray::preprocess
