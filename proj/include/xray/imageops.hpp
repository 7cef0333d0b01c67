#pragma once

// Pure numeric image kernels used by the preprocessing pipeline: histogram
// thresholding, connected components, minimum-area rotated rectangles,
// rotated cropping, equalization, normalization, resizing and padding.
// All operations are pure functions on value inputs.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

#include "xray/image.hpp"

namespace xray::imageops {

inline constexpr double kPi = 3.14159265358979323846;

// ---------------------------------------------------------------------------
// Histogram and Otsu thresholding
// ---------------------------------------------------------------------------

struct Histogram {
    std::array<uint64_t, 256> bins{};

    uint64_t total() const {
        uint64_t t = 0;
        for (uint64_t b : bins) t += b;
        return t;
    }
};

inline Histogram compute_histogram(const Image& img, const Mask* mask = nullptr) {
    Histogram h;
    for (size_t i = 0; i < img.data.size(); ++i) {
        if (mask && !mask->bits[i]) continue;
        h.bins[to_level(img.data[i])]++;
    }
    return h;
}

struct OtsuResult {
    int level = 0;        // threshold level in [0,255]
    bool degenerate = false;  // all mass in a single bin, no separation possible
};

// Threshold maximizing between-class variance; ties resolved to the lowest
// level. Classes are {levels <= t} and {levels > t}.
inline OtsuResult otsu_threshold(const Histogram& hist) {
    uint64_t total = hist.total();
    if (total == 0) throw std::invalid_argument("otsu_threshold: empty histogram");

    int nonzero = 0, single_level = 0;
    for (int l = 0; l < 256; ++l) {
        if (hist.bins[l] > 0) {
            ++nonzero;
            single_level = l;
        }
    }
    if (nonzero == 1) return {single_level, true};

    double sum_all = 0.0;
    for (int l = 0; l < 256; ++l) sum_all += static_cast<double>(l) * hist.bins[l];

    double best_var = -1.0;
    int best_level = 0;
    uint64_t w0 = 0;
    double sum0 = 0.0;
    for (int t = 0; t < 256; ++t) {
        w0 += hist.bins[t];
        sum0 += static_cast<double>(t) * hist.bins[t];
        uint64_t w1 = total - w0;
        if (w0 == 0 || w1 == 0) continue;
        double mu0 = sum0 / w0;
        double mu1 = (sum_all - sum0) / w1;
        double between = static_cast<double>(w0) * static_cast<double>(w1) * (mu0 - mu1) * (mu0 - mu1);
        if (between > best_var + 1e-12 * std::max(1.0, best_var)) {
            best_var = between;
            best_level = t;
        }
    }
    return {best_level, false};
}

// Maps an 8-bit threshold level to the [0,1] scale such that quantized pixels
// at the level itself fall below the boundary, matching the Otsu class split
// {levels <= t} versus {levels > t}.
inline float level_to_threshold01(int level) { return (static_cast<float>(level) + 0.5f) / 255.0f; }

// bit = 1 iff pixel > threshold (threshold on the [0,1] scale).
inline Mask binarize(const Image& img, double threshold01) {
    Mask m(img.height, img.width, 0);
    for (size_t i = 0; i < img.data.size(); ++i)
        m.bits[i] = img.data[i] > threshold01 ? 1 : 0;
    return m;
}

// ---------------------------------------------------------------------------
// Connected components (8-connectivity)
// ---------------------------------------------------------------------------

// Keeps only the 8-connected foreground component of maximal pixel count.
// Ties go to the component whose first pixel in row-major scan order comes
// first (smallest top-left coordinate).
inline Mask largest_component(const Mask& mask) {
    const int h = mask.height, w = mask.width;
    std::vector<int32_t> label(static_cast<size_t>(h) * w, -1);
    int next_label = 0;
    std::vector<size_t> sizes;
    std::deque<std::pair<int, int>> queue;

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            size_t idx = static_cast<size_t>(r) * w + c;
            if (!mask.bits[idx] || label[idx] >= 0) continue;
            int cur = next_label++;
            sizes.push_back(0);
            label[idx] = cur;
            queue.clear();
            queue.emplace_back(r, c);
            while (!queue.empty()) {
                auto [qr, qc] = queue.front();
                queue.pop_front();
                sizes[cur]++;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        int nr = qr + dr, nc = qc + dc;
                        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                        size_t nidx = static_cast<size_t>(nr) * w + nc;
                        if (mask.bits[nidx] && label[nidx] < 0) {
                            label[nidx] = cur;
                            queue.emplace_back(nr, nc);
                        }
                    }
                }
            }
        }
    }

    if (next_label == 0) throw std::runtime_error("largest_component: no foreground");

    int best = 0;
    for (int l = 1; l < next_label; ++l)
        if (sizes[l] > sizes[best]) best = l;  // strict: earliest scan-order label wins ties

    Mask out(h, w, 0);
    for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = label[i] == best ? 1 : 0;
    return out;
}

inline std::vector<std::pair<Mask, size_t>> all_components(const Mask& mask) {
    // Components in scan order of their first pixel, paired with pixel count.
    const int h = mask.height, w = mask.width;
    std::vector<int32_t> label(static_cast<size_t>(h) * w, -1);
    std::vector<std::pair<Mask, size_t>> comps;
    std::deque<std::pair<int, int>> queue;

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            size_t idx = static_cast<size_t>(r) * w + c;
            if (!mask.bits[idx] || label[idx] >= 0) continue;
            int cur = static_cast<int>(comps.size());
            comps.emplace_back(Mask(h, w, 0), 0);
            label[idx] = cur;
            queue.clear();
            queue.emplace_back(r, c);
            while (!queue.empty()) {
                auto [qr, qc] = queue.front();
                queue.pop_front();
                comps[cur].first.at(qr, qc) = 1;
                comps[cur].second++;
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        int nr = qr + dr, nc = qc + dc;
                        if (nr < 0 || nr >= h || nc < 0 || nc >= w) continue;
                        size_t nidx = static_cast<size_t>(nr) * w + nc;
                        if (mask.bits[nidx] && label[nidx] < 0) {
                            label[nidx] = cur;
                            queue.emplace_back(nr, nc);
                        }
                    }
                }
            }
        }
    }
    return comps;
}

// ---------------------------------------------------------------------------
// Minimum-area rotated rectangle
// ---------------------------------------------------------------------------

struct Point2d {
    double x = 0.0;
    double y = 0.0;
};

// Canonical form: angle is the direction of the `width` side in degrees,
// reduced to the window (-90, 0]. Within one 90-degree window the side
// assignment is unique, so width >= height cannot be forced for every
// orientation; the window rule keeps the representation deterministic.
struct RotatedRect {
    Point2d center;
    double width = 0.0;
    double height = 0.0;
    double angle_deg = 0.0;
    bool degenerate = false;  // built from < 3 points or a collinear set

    double area() const { return width * height; }
};

namespace detail {

inline double cross(const Point2d& o, const Point2d& a, const Point2d& b) {
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain; returns hull in counter-clockwise order.
inline std::vector<Point2d> convex_hull(std::vector<Point2d> pts) {
    std::sort(pts.begin(), pts.end(), [](const Point2d& a, const Point2d& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    pts.erase(std::unique(pts.begin(), pts.end(),
                          [](const Point2d& a, const Point2d& b) {
                              return a.x == b.x && a.y == b.y;
                          }),
              pts.end());
    const size_t n = pts.size();
    if (n < 3) return pts;
    std::vector<Point2d> hull(2 * n);
    size_t k = 0;
    for (size_t i = 0; i < n; ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    size_t lower = k + 1;
    for (size_t i = n - 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

inline RotatedRect canonicalize(Point2d center, double extent_u, double extent_v, double theta_rad) {
    // Reduce the width-side direction into (-90, 0] degrees, swapping the
    // extents for every 90-degree step.
    double deg = theta_rad * 180.0 / kPi;
    while (deg > 0.0) {
        deg -= 90.0;
        std::swap(extent_u, extent_v);
    }
    while (deg <= -90.0) {
        deg += 90.0;
        std::swap(extent_u, extent_v);
    }
    RotatedRect r;
    r.center = center;
    r.width = extent_u;
    r.height = extent_v;
    r.angle_deg = deg;
    return r;
}

}  // namespace detail

// Smallest-area enclosing rectangle over all orientations; one side is
// collinear with a convex-hull edge. Degenerate inputs (< 3 points or all
// collinear) yield a zero-height rectangle with the flag set.
inline RotatedRect min_area_rect(const std::vector<Point2d>& points) {
    using detail::canonicalize;
    if (points.empty()) {
        RotatedRect r;
        r.degenerate = true;
        return r;
    }
    std::vector<Point2d> hull = detail::convex_hull(points);
    if (hull.size() < 3) {
        // Collinear or tiny set: span along the principal segment, zero
        // height. The angle is reduced mod 180 without the extent swap so the
        // width keeps the segment length.
        Point2d a = hull.front(), b = hull.back();
        double best = -1.0;
        for (const auto& p : points)
            for (const auto& q : points) {
                double d = std::hypot(p.x - q.x, p.y - q.y);
                if (d > best) {
                    best = d;
                    a = p;
                    b = q;
                }
            }
        double deg = best > 0 ? std::atan2(b.y - a.y, b.x - a.x) * 180.0 / kPi : 0.0;
        while (deg > 90.0) deg -= 180.0;
        while (deg <= -90.0) deg += 180.0;
        RotatedRect r;
        r.center = {(a.x + b.x) / 2.0, (a.y + b.y) / 2.0};
        r.width = best < 0 ? 0.0 : best;
        r.height = 0.0;
        r.angle_deg = deg;
        r.degenerate = true;
        return r;
    }

    const size_t n = hull.size();
    double best_area = std::numeric_limits<double>::infinity();
    RotatedRect best;

    for (size_t i = 0; i < n; ++i) {
        const Point2d& p0 = hull[i];
        const Point2d& p1 = hull[(i + 1) % n];
        double ex = p1.x - p0.x, ey = p1.y - p0.y;
        double len = std::hypot(ex, ey);
        if (len < 1e-12) continue;
        double ux = ex / len, uy = ey / len;   // edge direction
        double vx = -uy, vy = ux;              // perpendicular

        double min_u = std::numeric_limits<double>::infinity(), max_u = -min_u;
        double min_v = min_u, max_v = -min_u;
        for (const auto& p : hull) {
            double pu = p.x * ux + p.y * uy;
            double pv = p.x * vx + p.y * vy;
            min_u = std::min(min_u, pu);
            max_u = std::max(max_u, pu);
            min_v = std::min(min_v, pv);
            max_v = std::max(max_v, pv);
        }
        double du = max_u - min_u, dv = max_v - min_v;
        double area = du * dv;
        if (area < best_area - 1e-12) {
            best_area = area;
            double cu = (min_u + max_u) / 2.0, cv = (min_v + max_v) / 2.0;
            Point2d center{cu * ux + cv * vx, cu * uy + cv * vy};
            best = canonicalize(center, du, dv, std::atan2(uy, ux));
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Rotated crop
// ---------------------------------------------------------------------------

// Extracts the rectangle content as an upright (height x width) image using
// bilinear resampling; samples outside the source read as zero.
inline Image crop_rotated(const Image& img, const RotatedRect& rect) {
    int out_h = static_cast<int>(std::lround(rect.height));
    int out_w = static_cast<int>(std::lround(rect.width));
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("crop_rotated: zero-area rectangle");

    double theta = rect.angle_deg * kPi / 180.0;
    double ux = std::cos(theta), uy = std::sin(theta);
    double vx = -uy, vy = ux;

    Image out(out_h, out_w, 0.0f);
    for (int r = 0; r < out_h; ++r) {
        double dv = r - (out_h - 1) / 2.0;
        for (int c = 0; c < out_w; ++c) {
            double du = c - (out_w - 1) / 2.0;
            double sx = rect.center.x + du * ux + dv * vx;
            double sy = rect.center.y + du * uy + dv * vy;
            out.at(r, c) = img.sample_bilinear(sx, sy);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Intensity remapping
// ---------------------------------------------------------------------------

// Monotone remapping through the cumulative distribution of the (masked)
// intensities; 256 levels, output in [0,1]. Preserves relative ordering.
inline Image histogram_equalize(const Image& img, const Mask* mask = nullptr) {
    Histogram h = compute_histogram(img, mask);
    uint64_t total = h.total();
    if (total == 0) return img;  // fully masked-out frame: nothing to remap from

    std::array<double, 256> cdf{};
    uint64_t acc = 0;
    for (int l = 0; l < 256; ++l) {
        acc += h.bins[l];
        cdf[l] = static_cast<double>(acc) / static_cast<double>(total);
    }
    Image out(img.height, img.width);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = static_cast<float>(cdf[to_level(img.data[i])]);
    return out;
}

// Affine map of the masked intensity range onto [0,1]; constant regions map
// to zero. Values outside the mask are mapped with the same affine transform
// and clamped, which keeps the operation idempotent.
inline Image min_max_normalize(const Image& img, const Mask* mask = nullptr) {
    float mn = std::numeric_limits<float>::infinity();
    float mx = -mn;
    bool any = false;
    for (size_t i = 0; i < img.data.size(); ++i) {
        if (mask && !mask->bits[i]) continue;
        any = true;
        mn = std::min(mn, img.data[i]);
        mx = std::max(mx, img.data[i]);
    }
    Image out(img.height, img.width, 0.0f);
    if (!any || mx - mn <= 0.0f) return out;  // degenerate: all zeros
    float scale = 1.0f / (mx - mn);
    for (size_t i = 0; i < img.data.size(); ++i)
        out.data[i] = clamp01((img.data[i] - mn) * scale);
    return out;
}

// ---------------------------------------------------------------------------
// Geometry: resize and pad
// ---------------------------------------------------------------------------

// Bilinear resize to an exact (h, w) target using half-pixel centers.
inline Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("resize_bilinear: bad target");
    if (out_h == img.height && out_w == img.width) return img;
    Image out(out_h, out_w);
    double sy = static_cast<double>(img.height) / out_h;
    double sx = static_cast<double>(img.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        double y = (r + 0.5) * sy - 0.5;
        y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
        for (int c = 0; c < out_w; ++c) {
            double x = (c + 0.5) * sx - 0.5;
            x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
            out.at(r, c) = img.sample_bilinear(x, y);
        }
    }
    return out;
}

inline Mask resize_nearest(const Mask& mask, int out_h, int out_w) {
    if (out_h == mask.height && out_w == mask.width) return mask;
    Mask out(out_h, out_w, 0);
    double sy = static_cast<double>(mask.height) / out_h;
    double sx = static_cast<double>(mask.width) / out_w;
    for (int r = 0; r < out_h; ++r) {
        int src_r = std::clamp(static_cast<int>((r + 0.5) * sy), 0, mask.height - 1);
        for (int c = 0; c < out_w; ++c) {
            int src_c = std::clamp(static_cast<int>((c + 0.5) * sx), 0, mask.width - 1);
            out.at(r, c) = mask.at(src_r, src_c);
        }
    }
    return out;
}

// Longer output side becomes long_side, aspect ratio kept to the nearest pixel.
inline Image resize_keep_aspect(const Image& img, int long_side) {
    if (long_side < 1) throw std::invalid_argument("resize_keep_aspect: long_side must be >= 1");
    int h = img.height, w = img.width;
    int out_h, out_w;
    if (h >= w) {
        out_h = long_side;
        out_w = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * long_side / h)));
    } else {
        out_w = long_side;
        out_h = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) * long_side / w)));
    }
    return resize_bilinear(img, out_h, out_w);
}

struct PadOffset {
    int row = 0;
    int col = 0;
};

// Centers the input in a zero frame of the target shape (floor-division
// offsets). The offset is returned so masks can be aligned the same way.
inline std::pair<Image, PadOffset> pad_center(const Image& img, int target_h, int target_w) {
    if (img.height > target_h || img.width > target_w)
        throw std::invalid_argument("pad_center: input larger than target");
    PadOffset off{(target_h - img.height) / 2, (target_w - img.width) / 2};
    Image out(target_h, target_w, 0.0f);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) out.at(r + off.row, c + off.col) = img.at(r, c);
    return {out, off};
}

inline Mask pad_center_mask(const Mask& mask, int target_h, int target_w) {
    if (mask.height > target_h || mask.width > target_w)
        throw std::invalid_argument("pad_center_mask: input larger than target");
    PadOffset off{(target_h - mask.height) / 2, (target_w - mask.width) / 2};
    Mask out(target_h, target_w, 0);
    for (int r = 0; r < mask.height; ++r)
        for (int c = 0; c < mask.width; ++c) out.at(r + off.row, c + off.col) = mask.at(r, c);
    return out;
}

// ---------------------------------------------------------------------------
// Morphology (disk structuring element)
// ---------------------------------------------------------------------------

inline Mask dilate(const Mask& mask, int radius) {
    const int h = mask.height, w = mask.width;
    Mask out(h, w, 0);
    int r2 = radius * radius;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!mask.at(r, c)) continue;
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    if (dr * dr + dc * dc > r2) continue;
                    int nr = r + dr, nc = c + dc;
                    if (nr >= 0 && nr < h && nc >= 0 && nc < w) out.at(nr, nc) = 1;
                }
        }
    return out;
}

inline Mask erode(const Mask& mask, int radius) {
    const int h = mask.height, w = mask.width;
    Mask out(h, w, 0);
    int r2 = radius * radius;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            bool keep = true;
            for (int dr = -radius; keep && dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    if (dr * dr + dc * dc > r2) continue;
                    int nr = r + dr, nc = c + dc;
                    if (nr < 0 || nr >= h || nc < 0 || nc >= w || !mask.at(nr, nc)) {
                        keep = false;
                        break;
                    }
                }
            out.at(r, c) = keep ? 1 : 0;
        }
    return out;
}

inline Mask morph_close(const Mask& mask, int radius) { return erode(dilate(mask, radius), radius); }

// Fills interior holes: background not reachable from the border becomes
// foreground.
inline Mask fill_holes(const Mask& mask) {
    const int h = mask.height, w = mask.width;
    std::vector<uint8_t> outside(static_cast<size_t>(h) * w, 0);
    std::deque<std::pair<int, int>> queue;
    auto push = [&](int r, int c) {
        size_t idx = static_cast<size_t>(r) * w + c;
        if (!mask.bits[idx] && !outside[idx]) {
            outside[idx] = 1;
            queue.emplace_back(r, c);
        }
    };
    for (int c = 0; c < w; ++c) {
        push(0, c);
        push(h - 1, c);
    }
    for (int r = 0; r < h; ++r) {
        push(r, 0);
        push(r, w - 1);
    }
    while (!queue.empty()) {
        auto [r, c] = queue.front();
        queue.pop_front();
        if (r > 0) push(r - 1, c);
        if (r + 1 < h) push(r + 1, c);
        if (c > 0) push(r, c - 1);
        if (c + 1 < w) push(r, c + 1);
    }
    Mask out(h, w, 0);
    for (size_t i = 0; i < out.bits.size(); ++i) out.bits[i] = (mask.bits[i] || !outside[i]) ? 1 : 0;
    return out;
}

}  // namespace xray::imageops
