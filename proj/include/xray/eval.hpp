#pragma once

// ROC-AUC computation (rank statistic, ties at 0.5), multi-seed aggregation,
// and report/overlay rendering following the experimental protocol: per-model
// rows over the {raw, crop, full} x {w/o HE, w/ HE} grid.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/core.hpp"
#include "xray/image.hpp"
#include "xray/png_io.hpp"
#include "xray/scoring.hpp"

namespace xray::eval {

// ---------------------------------------------------------------------------
// ROC-AUC
// ---------------------------------------------------------------------------

// Mann-Whitney statistic: the fraction of (positive, negative) pairs where
// the positive scores higher, ties counted 0.5. Computed via average ranks.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("roc_auc: shape mismatch");
    size_t n_pos = 0, n_neg = 0;
    for (int l : labels) {
        if (l == 1) ++n_pos;
        else if (l == 0) ++n_neg;
        else throw std::invalid_argument("roc_auc: labels must be 0 or 1");
    }
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc_auc: both classes required");

    std::vector<size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0.0;
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
        double avg_rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;  // 1-based
        for (size_t k = i; k <= j; ++k)
            if (labels[idx[k]] == 1) pos_rank_sum += avg_rank;
        i = j + 1;
    }
    double auc = (pos_rank_sum - static_cast<double>(n_pos) * (n_pos + 1) / 2.0) /
                 (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    return auc;
}

// ---------------------------------------------------------------------------
// Per-run evaluation
// ---------------------------------------------------------------------------

// AUC per metric over the rows of one split part. Rows are filtered through
// the patient-level split assignment; model selection reads the validation
// part, reporting reads test.
inline std::map<std::string, double> evaluate_run(const scoring::ScoreTable& table,
                                                  const core::SplitAssignment& split,
                                                  core::SplitPart part, bool flip_scores = false) {
    std::map<std::string, std::pair<std::vector<double>, std::vector<int>>> by_metric;
    for (const auto& r : table.rows) {
        if (split.part_of(r.patient_id) != part) continue;
        auto& [scores, labels] = by_metric[r.metric];
        scores.push_back(flip_scores ? -r.score : r.score);
        labels.push_back(r.label);
    }
    if (by_metric.empty()) throw std::runtime_error("evaluate_run: no rows in requested split part");
    std::map<std::string, double> auc;
    for (auto& [metric, data] : by_metric) auc[metric] = roc_auc(data.first, data.second);
    return auc;
}

// ---------------------------------------------------------------------------
// Multi-seed aggregation
// ---------------------------------------------------------------------------

struct EvalRow {
    std::string model;
    std::string metric;
    std::string variant;   // raw | crop | full
    bool equalized = false;
    std::vector<double> aucs;  // one per seed
    double mean = 0.0;
    double stddev = 0.0;       // sample (n-1) estimator
};

inline EvalRow aggregate_seeds(EvalRow row) {
    if (row.aucs.size() < 2) throw std::invalid_argument("aggregate_seeds: need >= 2 seeds");
    double sum = 0.0;
    for (double a : row.aucs) sum += a;
    row.mean = sum / row.aucs.size();
    double sq = 0.0;
    for (double a : row.aucs) sq += (a - row.mean) * (a - row.mean);
    row.stddev = std::sqrt(sq / (row.aucs.size() - 1));
    return row;
}

inline std::string variant_he_key(const std::string& variant, bool he) {
    return variant + (he ? "+he" : "-he");
}

// CSV report: one line per (model, metric, variant, he).
inline void write_report_csv(const std::vector<EvalRow>& rows, std::ostream& os) {
    os << "model,metric,variant,equalize,seeds,mean_auc,std_auc\n";
    for (const auto& r : rows) {
        os << r.model << "," << r.metric << "," << r.variant << "," << (r.equalized ? "on" : "off") << ",";
        for (size_t i = 0; i < r.aucs.size(); ++i) {
            if (i) os << ";";
            os << std::fixed << std::setprecision(4) << r.aucs[i];
        }
        os << "," << std::fixed << std::setprecision(4) << r.mean << "," << std::setprecision(4)
           << r.stddev << "\n";
    }
}

// Text table shaped like the quantitative-results grid: rows are model/metric,
// columns are the preprocessing variants with and without equalization.
inline void write_report_table(const std::vector<EvalRow>& rows, std::ostream& os) {
    const std::vector<std::string> variants = {"raw", "crop", "full"};
    std::map<std::string, std::map<std::string, const EvalRow*>> grid;  // model/metric -> cell
    std::vector<std::string> row_order;
    for (const auto& r : rows) {
        std::string key = r.model + "  " + r.metric;
        if (!grid.count(key)) row_order.push_back(key);
        grid[key][variant_he_key(r.variant, r.equalized)] = &r;
    }

    os << std::left << std::setw(28) << "model/metric";
    for (const auto& v : variants) {
        os << std::setw(16) << (v + " w/o HE");
        os << std::setw(16) << (v + " w/ HE");
    }
    os << "\n";
    for (const auto& key : row_order) {
        os << std::left << std::setw(28) << key;
        for (const auto& v : variants) {
            for (bool he : {false, true}) {
                auto it = grid[key].find(variant_he_key(v, he));
                if (it == grid[key].end()) {
                    os << std::setw(16) << "-";
                } else {
                    std::ostringstream cell;
                    cell << std::fixed << std::setprecision(3) << it->second->mean << " +/- "
                         << std::setprecision(3) << it->second->stddev;
                    os << std::setw(16) << cell.str();
                }
            }
        }
        os << "\n";
    }
}

// ---------------------------------------------------------------------------
// Heatmap overlays
// ---------------------------------------------------------------------------

namespace detail {

// "hot" color ramp: black -> red -> yellow -> white.
inline void hot_color(float t, float& r, float& g, float& b) {
    r = clamp01(3.0f * t);
    g = clamp01(3.0f * t - 1.0f);
    b = clamp01(3.0f * t - 2.0f);
}

}  // namespace detail

// Writes a side-by-side PNG: grayscale input on the left, color-mapped
// heatmap (per-image max normalization) on the right.
inline void render_overlay(const Image& image, const scoring::Heatmap& heat, const std::string& path) {
    if (image.height != heat.height || image.width != heat.width)
        throw std::invalid_argument("render_overlay: shape mismatch");
    const int h = image.height, w = image.width;
    float peak = 0.0f;
    for (float v : heat.values) peak = std::max(peak, v);
    float inv = peak > 0.0f ? 1.0f / peak : 0.0f;

    std::vector<float> rgb(static_cast<size_t>(h) * (2 * w) * 3, 0.0f);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            float gray = image.at(r, c);
            size_t li = (static_cast<size_t>(r) * 2 * w + c) * 3;
            rgb[li] = rgb[li + 1] = rgb[li + 2] = gray;
            float t = heat.at(r, c) * inv;
            float cr, cg, cb;
            detail::hot_color(t, cr, cg, cb);
            size_t ri = (static_cast<size_t>(r) * 2 * w + w + c) * 3;
            rgb[ri] = cr;
            rgb[ri + 1] = cg;
            rgb[ri + 2] = cb;
        }
    }
    io::write_rgb(path, rgb, h, 2 * w);
}

// Raw heatmap sidecar: "XRAYHEAT1\n", i32 height, i32 width, then f32 values
// row-major.
inline void write_heatmap_raw(const scoring::Heatmap& heat, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write heatmap: " + path);
    const char magic[] = "XRAYHEAT1\n";
    f.write(magic, sizeof(magic) - 1);
    int32_t dims[2] = {heat.height, heat.width};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(heat.values.data()),
            static_cast<std::streamsize>(heat.values.size() * sizeof(float)));
}

// 8-bit heatmap PNG after per-image max normalization.
inline void write_heatmap_png(const scoring::Heatmap& heat, const std::string& path) {
    float peak = 0.0f;
    for (float v : heat.values) peak = std::max(peak, v);
    float inv = peak > 0.0f ? 1.0f / peak : 0.0f;
    Image img(heat.height, heat.width);
    for (size_t i = 0; i < heat.values.size(); ++i) img.data[i] = heat.values[i] * inv;
    io::write_image(path, img);
}

}  // namespace xray::eval
