#pragma once

// Image-level anomaly scores and pixel-level heatmaps from trained models.
// Convention: higher score = more anomalous. Discriminator real-probabilities
// are inverted accordingly; an optional flip is applied at evaluation level.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/core.hpp"
#include "xray/image.hpp"
#include "xray/nets.hpp"
#include "xray/tensor.hpp"

namespace xray::scoring {

// ---------------------------------------------------------------------------
// Heatmaps
// ---------------------------------------------------------------------------

struct Heatmap {
    int height = 0;
    int width = 0;
    std::vector<float> values;  // >= 0, exactly 0 outside the mask

    float& at(int r, int c) { return values[static_cast<size_t>(r) * width + c]; }
    float at(int r, int c) const { return values[static_cast<size_t>(r) * width + c]; }
};

enum class ErrorKind { squared, absolute };

// Per-pixel reconstruction error, zeroed outside the mask.
inline Heatmap pixel_heatmap(const Image& x, const Image& xhat, const Mask& mask, ErrorKind kind) {
    if (x.height != xhat.height || x.width != xhat.width || !mask.same_shape(x))
        throw std::invalid_argument("pixel_heatmap: shape mismatch");
    Heatmap h;
    h.height = x.height;
    h.width = x.width;
    h.values.assign(x.data.size(), 0.0f);
    for (size_t i = 0; i < x.data.size(); ++i) {
        if (!mask.bits[i]) continue;
        float d = x.data[i] - xhat.data[i];
        h.values[i] = kind == ErrorKind::squared ? d * d : std::fabs(d);
    }
    return h;
}

// Average over masked locations: sum(h) / ||mask||_1.
inline double aggregate_mean(const Heatmap& h, const Mask& mask) {
    if (h.height != mask.height || h.width != mask.width)
        throw std::invalid_argument("aggregate_mean: shape mismatch");
    size_t count = mask.count();
    if (count == 0) throw std::invalid_argument("aggregate_mean: empty mask");
    double acc = 0.0;
    for (size_t i = 0; i < h.values.size(); ++i)
        if (mask.bits[i]) acc += h.values[i];
    return acc / static_cast<double>(count);
}

// Mean of the min(k, masked-count) largest masked values.
inline double aggregate_topk(const Heatmap& h, const Mask& mask, size_t k) {
    if (k < 1) throw std::invalid_argument("aggregate_topk: k must be >= 1");
    if (h.height != mask.height || h.width != mask.width)
        throw std::invalid_argument("aggregate_topk: shape mismatch");
    std::vector<float> vals;
    vals.reserve(mask.count());
    for (size_t i = 0; i < h.values.size(); ++i)
        if (mask.bits[i]) vals.push_back(h.values[i]);
    if (vals.empty()) throw std::invalid_argument("aggregate_topk: empty mask");
    size_t take = std::min(k, vals.size());
    std::nth_element(vals.begin(), vals.begin() + (take - 1), vals.end(), std::greater<float>());
    double acc = 0.0;
    for (size_t i = 0; i < take; ++i) acc += vals[i];
    return acc / static_cast<double>(take);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

enum class MetricKind {
    mse,
    mse_topk,
    l1,
    l1_topk,
    kld,
    l1_plus_kld,
    mse_plus_kld,
    discriminator,
    code_discriminator,
    c_plus_d,
};

struct ScoreMetric {
    MetricKind kind = MetricKind::mse;
    size_t k = 200;     // top-k variants only
    std::string label;  // reporting name override (set when k is rescaled)

    std::string name() const {
        if (!label.empty()) return label;
        switch (kind) {
            case MetricKind::mse: return "mse";
            case MetricKind::mse_topk: return "mse_top" + std::to_string(k);
            case MetricKind::l1: return "l1";
            case MetricKind::l1_topk: return "l1_top" + std::to_string(k);
            case MetricKind::kld: return "kld";
            case MetricKind::l1_plus_kld: return "l1+kld";
            case MetricKind::mse_plus_kld: return "mse+kld";
            case MetricKind::discriminator: return "disc";
            case MetricKind::code_discriminator: return "code_disc";
            case MetricKind::c_plus_d: return "c+d";
        }
        return "?";
    }
};

inline ScoreMetric parse_metric(const std::string& s) {
    ScoreMetric m;
    auto topk = [&](const std::string& prefix) -> bool {
        if (s.rfind(prefix, 0) != 0) return false;
        m.k = static_cast<size_t>(std::stoul(s.substr(prefix.size())));
        if (m.k < 1) throw std::invalid_argument("metric k must be >= 1");
        return true;
    };
    if (s == "mse") m.kind = MetricKind::mse;
    else if (topk("mse_top")) m.kind = MetricKind::mse_topk;
    else if (s == "l1") m.kind = MetricKind::l1;
    else if (topk("l1_top")) m.kind = MetricKind::l1_topk;
    else if (s == "kld") m.kind = MetricKind::kld;
    else if (s == "l1+kld") m.kind = MetricKind::l1_plus_kld;
    else if (s == "mse+kld") m.kind = MetricKind::mse_plus_kld;
    else if (s == "disc") m.kind = MetricKind::discriminator;
    else if (s == "code_disc") m.kind = MetricKind::code_discriminator;
    else if (s == "c+d") m.kind = MetricKind::c_plus_d;
    else throw std::invalid_argument("unknown metric: " + s);
    return m;
}

// Top-k defaults to k = 200 at 512x512; scale with the pixel count at other
// resolutions.
inline size_t scaled_topk(size_t k_at_512, int resolution) {
    double scale = static_cast<double>(resolution) * resolution / (512.0 * 512.0);
    return std::max<size_t>(1, static_cast<size_t>(std::lround(k_at_512 * scale)));
}

inline bool metric_needs_reconstruction(MetricKind k) {
    switch (k) {
        case MetricKind::mse:
        case MetricKind::mse_topk:
        case MetricKind::l1:
        case MetricKind::l1_topk:
        case MetricKind::l1_plus_kld:
        case MetricKind::mse_plus_kld: return true;
        default: return false;
    }
}

inline bool metric_compatible(const models::ModelNet& net, MetricKind k) {
    switch (k) {
        case MetricKind::mse:
        case MetricKind::mse_topk:
        case MetricKind::l1:
        case MetricKind::l1_topk: return net.can_reconstruct();
        case MetricKind::kld: return net.has_gaussian_latent();
        case MetricKind::l1_plus_kld:
        case MetricKind::mse_plus_kld: return net.can_reconstruct() && net.has_gaussian_latent();
        case MetricKind::discriminator: return net.has_discriminator();
        case MetricKind::code_discriminator: return net.has_code_discriminator();
        case MetricKind::c_plus_d: return net.has_discriminator() && net.has_code_discriminator();
    }
    return false;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---------------------------------------------------------------------------
// score_image
// ---------------------------------------------------------------------------

// Higher = more anomalous. Reconstruction metrics aggregate pixel heatmaps
// under the mask; discriminator probabilities are squashed with a logistic
// map and inverted (1 - P(real)).
inline double score_image(models::ModelNet& net, const Image& pixels, const Mask& mask,
                          const ScoreMetric& metric) {
    if (!metric_compatible(net, metric.kind))
        throw std::invalid_argument("metric " + metric.name() + " incompatible with model " +
                                    models::model_name(net.kind()));

    std::vector<Image> one{pixels};
    models::Tensor x = models::image_batch(one);

    auto recon_score = [&](ErrorKind ek, bool topk, size_t k) {
        models::Tensor y = net.reconstruct(x);
        Image xhat = models::tensor_to_image(y, 0);
        Heatmap h = pixel_heatmap(pixels, xhat, mask, ek);
        return topk ? aggregate_topk(h, mask, k) : aggregate_mean(h, mask);
    };
    auto kld_score = [&]() {
        std::vector<std::vector<float>> mu, sigma;
        net.encode_gaussian(x, mu, sigma);
        std::vector<double> m(mu[0].begin(), mu[0].end()), s(sigma[0].begin(), sigma[0].end());
        return models::kld_diag_gaussian(m, s);
    };
    auto disc_score = [&]() { return 1.0 - sigmoid(net.discriminator_logits(x)[0]); };
    auto code_disc_score = [&]() { return 1.0 - sigmoid(net.code_discriminator_logits(x)[0]); };

    switch (metric.kind) {
        case MetricKind::mse: return recon_score(ErrorKind::squared, false, 0);
        case MetricKind::mse_topk: return recon_score(ErrorKind::squared, true, metric.k);
        case MetricKind::l1: return recon_score(ErrorKind::absolute, false, 0);
        case MetricKind::l1_topk: return recon_score(ErrorKind::absolute, true, metric.k);
        case MetricKind::kld: return kld_score();
        case MetricKind::l1_plus_kld: return recon_score(ErrorKind::absolute, false, 0) + kld_score();
        case MetricKind::mse_plus_kld: return recon_score(ErrorKind::squared, false, 0) + kld_score();
        case MetricKind::discriminator: return disc_score();
        case MetricKind::code_discriminator: return code_disc_score();
        case MetricKind::c_plus_d: return (code_disc_score() + disc_score()) / 2.0;
    }
    throw std::invalid_argument("score_image: unknown metric");
}

// ---------------------------------------------------------------------------
// ScoreTable
// ---------------------------------------------------------------------------

struct ScoreRow {
    std::string image_id;
    std::string patient_id;
    int label = 0;  // 0 negative, 1 positive (study-level)
    std::string metric;
    double score = 0.0;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
};

struct ScoreRecord {
    std::string image_id;
    std::string patient_id;
    core::Label label = core::Label::negative;
    Image pixels;  // already preprocessed to model resolution, no augmentation
    Mask mask;
};

inline ScoreTable score_dataset(models::ModelNet& net, const std::vector<ScoreRecord>& records,
                                const std::vector<ScoreMetric>& metrics) {
    ScoreTable table;
    for (const auto& rec : records) {
        for (const auto& metric : metrics) {
            ScoreRow row;
            row.image_id = rec.image_id;
            row.patient_id = rec.patient_id;
            row.label = rec.label == core::Label::positive ? 1 : 0;
            row.metric = metric.name();
            row.score = score_image(net, rec.pixels, rec.mask, metric);
            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

// CSV: image_id, patient_id, label, metric, score.
inline void write_score_table(const ScoreTable& table, std::ostream& os) {
    os << "image_id,patient_id,label,metric,score\n";
    char buf[32];
    for (const auto& r : table.rows) {
        std::snprintf(buf, sizeof(buf), "%.9g", r.score);
        os << r.image_id << "," << r.patient_id << "," << r.label << "," << r.metric << "," << buf << "\n";
    }
}

inline void write_score_table_file(const ScoreTable& table, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write score table: " + path);
    write_score_table(table, f);
}

inline ScoreTable read_score_table(std::istream& is) {
    ScoreTable table;
    std::string line;
    if (!std::getline(is, line)) return table;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        ScoreRow r;
        std::string label, score;
        if (!std::getline(ss, r.image_id, ',') || !std::getline(ss, r.patient_id, ',') ||
            !std::getline(ss, label, ',') || !std::getline(ss, r.metric, ',') ||
            !std::getline(ss, score, ','))
            throw std::runtime_error("malformed score row: " + line);
        r.label = std::stoi(label);
        r.score = std::stod(score);
        table.rows.push_back(std::move(r));
    }
    return table;
}

inline ScoreTable read_score_table_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read score table: " + path);
    return read_score_table(f);
}

}  // namespace xray::scoring
