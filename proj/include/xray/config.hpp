#pragma once

// Run configuration: a flat hierarchical key-value text format ("a.b = c")
// with full round-trip serialization. Flags override parsed values at the
// CLI layer; the XRAY_DATA_ROOT environment variable supplies the data root
// when the config leaves it empty.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/models.hpp"
#include "xray/preprocess.hpp"

namespace xray::cli {

struct RunConfig {
    std::string data_root;
    std::string output_root = "out";
    std::string model = "cae";       // cae | bae | vae | dcgan | bigan | alphagan
    std::string variant = "full";    // raw | crop | full
    bool equalize = false;
    std::string policy = "advanced"; // default | advanced | none
    std::vector<std::string> metrics = {"mse"};
    std::vector<uint32_t> seeds = {42, 4242, 424242, 42424242};
    int workers = 1;
    bool flip_scores = false;        // optional anomaly-decision flip
    bool grid = false;               // evaluate the whole variant/HE grid
    models::TrainConfig train;

    models::ModelKind kind() const { return models::parse_model_kind(model); }
};

inline bool operator==(const models::TrainConfig& a, const models::TrainConfig& b) {
    return a.batch_size == b.batch_size && a.resolution == b.resolution && a.epochs == b.epochs &&
           a.lr == b.lr && a.lr_generator == b.lr_generator &&
           a.lr_discriminator == b.lr_discriminator && a.seed == b.seed &&
           a.batch_norm == b.batch_norm && a.spectral_norm == b.spectral_norm &&
           a.soft_label_delta == b.soft_label_delta && a.minibatch_disc == b.minibatch_disc &&
           a.hinge_loss == b.hinge_loss && a.masked_loss == b.masked_loss &&
           a.masked_loss_unsquared == b.masked_loss_unsquared && a.kld_weight == b.kld_weight &&
           a.recon_weight == b.recon_weight && a.z_dim == b.z_dim;
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.data_root == b.data_root && a.output_root == b.output_root && a.model == b.model &&
           a.variant == b.variant && a.equalize == b.equalize && a.policy == b.policy &&
           a.metrics == b.metrics && a.seeds == b.seeds && a.workers == b.workers &&
           a.flip_scores == b.flip_scores && a.grid == b.grid && a.train == b.train;
}

// Augmentation policy and training defaults per model: advanced policy for
// CAE/BAE, default for VAE and the GANs.
inline RunConfig default_run_config(const std::string& model) {
    RunConfig c;
    c.model = model;
    models::ModelKind kind = models::parse_model_kind(model);
    c.train = models::desk_config(kind);
    c.policy = (model == "cae" || model == "bae") ? "advanced" : "default";
    switch (kind) {
        case models::ModelKind::cae: c.metrics = {"mse", "mse_top200"}; break;
        case models::ModelKind::vae:
            c.metrics = {"kld", "l1", "l1+kld", "l1_top200", "mse", "mse+kld", "mse_top200"};
            break;
        case models::ModelKind::dcgan: c.metrics = {"disc"}; break;
        case models::ModelKind::bigan: c.metrics = {"mse", "mse_top200", "disc"}; break;
        case models::ModelKind::alphagan:
            c.metrics = {"code_disc", "mse", "mse_top200", "disc", "c+d"};
            break;
    }
    return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_bool(bool v) { return v ? "on" : "off"; }

inline bool parse_bool(const std::string& s) {
    if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
    if (s == "off" || s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("invalid boolean value: " + s);
}

template <typename T>
std::string join(const std::vector<T>& v) {
    std::ostringstream ss;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) ss << ",";
        ss << v[i];
    }
    return ss.str();
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace detail

inline std::map<std::string, std::string> parse_key_values(std::istream& is) {
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": missing '='");
        kv[detail::trim(t.substr(0, eq))] = detail::trim(t.substr(eq + 1));
    }
    return kv;
}

inline void serialize_run_config(const RunConfig& c, std::ostream& os) {
    using detail::fmt_bool;
    using detail::fmt_double;
    os << "data_root = " << c.data_root << "\n";
    os << "output_root = " << c.output_root << "\n";
    os << "model = " << c.model << "\n";
    os << "variant = " << c.variant << "\n";
    os << "equalize = " << fmt_bool(c.equalize) << "\n";
    os << "policy = " << c.policy << "\n";
    os << "metrics = " << detail::join(c.metrics) << "\n";
    os << "seeds = " << detail::join(c.seeds) << "\n";
    os << "workers = " << c.workers << "\n";
    os << "flip_scores = " << fmt_bool(c.flip_scores) << "\n";
    os << "grid = " << fmt_bool(c.grid) << "\n";
    os << "train.batch_size = " << c.train.batch_size << "\n";
    os << "train.resolution = " << c.train.resolution << "\n";
    os << "train.epochs = " << c.train.epochs << "\n";
    os << "train.lr = " << fmt_double(c.train.lr) << "\n";
    os << "train.lr_generator = " << fmt_double(c.train.lr_generator) << "\n";
    os << "train.lr_discriminator = " << fmt_double(c.train.lr_discriminator) << "\n";
    os << "train.batch_norm = " << fmt_bool(c.train.batch_norm) << "\n";
    os << "train.spectral_norm = " << fmt_bool(c.train.spectral_norm) << "\n";
    os << "train.soft_label_delta = " << fmt_double(c.train.soft_label_delta) << "\n";
    os << "train.minibatch_disc = " << fmt_bool(c.train.minibatch_disc) << "\n";
    os << "train.hinge_loss = " << fmt_bool(c.train.hinge_loss) << "\n";
    os << "train.masked_loss = " << fmt_bool(c.train.masked_loss) << "\n";
    os << "train.masked_loss_unsquared = " << fmt_bool(c.train.masked_loss_unsquared) << "\n";
    os << "train.kld_weight = " << fmt_double(c.train.kld_weight) << "\n";
    os << "train.recon_weight = " << fmt_double(c.train.recon_weight) << "\n";
    os << "train.z_dim = " << c.train.z_dim << "\n";
}

inline std::string serialize_run_config(const RunConfig& c) {
    std::ostringstream ss;
    serialize_run_config(c, ss);
    return ss.str();
}

// Keys are applied in a fixed order: the model is read first so the family's
// training defaults load, then every explicit key overrides them.
inline RunConfig parse_run_config(const std::map<std::string, std::string>& kv) {
    std::string model = "cae";
    if (auto it = kv.find("model"); it != kv.end()) model = it->second;
    RunConfig c = default_run_config(model);

    auto str = [&](const char* key, std::string& dst) {
        if (auto it = kv.find(key); it != kv.end()) dst = it->second;
    };
    auto boolean = [&](const char* key, bool& dst) {
        if (auto it = kv.find(key); it != kv.end()) dst = detail::parse_bool(it->second);
    };
    auto integer = [&](const char* key, int& dst) {
        if (auto it = kv.find(key); it != kv.end()) dst = std::stoi(it->second);
    };
    auto real = [&](const char* key, double& dst) {
        if (auto it = kv.find(key); it != kv.end()) dst = std::stod(it->second);
    };

    str("data_root", c.data_root);
    str("output_root", c.output_root);
    str("variant", c.variant);
    boolean("equalize", c.equalize);
    str("policy", c.policy);
    if (auto it = kv.find("metrics"); it != kv.end()) c.metrics = detail::split_list(it->second);
    if (auto it = kv.find("seeds"); it != kv.end()) {
        c.seeds.clear();
        for (const auto& s : detail::split_list(it->second))
            c.seeds.push_back(static_cast<uint32_t>(std::stoul(s)));
    }
    integer("workers", c.workers);
    boolean("flip_scores", c.flip_scores);
    boolean("grid", c.grid);
    integer("train.batch_size", c.train.batch_size);
    integer("train.resolution", c.train.resolution);
    integer("train.epochs", c.train.epochs);
    real("train.lr", c.train.lr);
    real("train.lr_generator", c.train.lr_generator);
    real("train.lr_discriminator", c.train.lr_discriminator);
    boolean("train.batch_norm", c.train.batch_norm);
    boolean("train.spectral_norm", c.train.spectral_norm);
    real("train.soft_label_delta", c.train.soft_label_delta);
    boolean("train.minibatch_disc", c.train.minibatch_disc);
    boolean("train.hinge_loss", c.train.hinge_loss);
    boolean("train.masked_loss", c.train.masked_loss);
    boolean("train.masked_loss_unsquared", c.train.masked_loss_unsquared);
    real("train.kld_weight", c.train.kld_weight);
    real("train.recon_weight", c.train.recon_weight);
    integer("train.z_dim", c.train.z_dim);
    return c;
}

inline RunConfig parse_run_config(std::istream& is) { return parse_run_config(parse_key_values(is)); }

inline RunConfig parse_run_config_string(const std::string& text) {
    std::istringstream ss(text);
    return parse_run_config(ss);
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file: " + path);
    return parse_run_config(f);
}

// Validation shared by all commands. The data root may come from the
// XRAY_DATA_ROOT environment variable.
inline void resolve_and_validate(RunConfig& c, bool need_data_root) {
    if (c.data_root.empty()) {
        const char* env = std::getenv("XRAY_DATA_ROOT");
        if (env) c.data_root = env;
    }
    if (need_data_root && c.data_root.empty())
        throw std::invalid_argument("no data root: set data_root or XRAY_DATA_ROOT");
    if (need_data_root && !std::filesystem::exists(c.data_root))
        throw std::invalid_argument("data root does not exist: " + c.data_root);
    if (c.variant != "raw" && c.variant != "crop" && c.variant != "full")
        throw std::invalid_argument("variant must be raw, crop or full");
    if (c.seeds.empty()) throw std::invalid_argument("seed list must be non-empty");
    if (c.workers < 1) throw std::invalid_argument("workers must be >= 1");
    models::parse_model_kind(c.model);
    preprocess::policy_by_name(c.policy);
}

}  // namespace xray::cli
