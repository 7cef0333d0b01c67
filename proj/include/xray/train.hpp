#pragma once

// Training loops for the five model families, loss history recording, and
// checkpoint serialization. Training is unsupervised: only images from
// negative studies are accepted (leakage guard).

#include <json.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/core.hpp"
#include "xray/nets.hpp"
#include "xray/preprocess.hpp"

namespace xray::models {

struct TrainExample {
    std::string id;
    core::Label label = core::Label::negative;
    Image pixels;
    Mask mask;
};

struct LossHistory {
    std::vector<std::string> components;           // column names
    std::vector<std::vector<double>> per_epoch;    // one row per epoch
};

struct TrainedModel {
    ModelKind kind_value = ModelKind::cae;
    ArchitectureSpec arch;
    TrainConfig config;
    std::shared_ptr<ModelNet> net;
    LossHistory history;

    ModelKind kind() const { return kind_value; }
};

namespace detail {

// Online view of one example during training: augment + pad + normalize.
// The rng stream is derived from (seed, running sample counter), so loading
// is reproducible regardless of worker layout.
inline std::pair<Image, Mask> load_view(const TrainExample& ex, const preprocess::AugmentationPolicy& policy,
                                        const TrainConfig& cfg, bool equalize, uint64_t sample_counter) {
    Rng rng(derive_seed(cfg.seed, 0xD0, sample_counter));
    auto rec = preprocess::online_pipeline(ex.pixels, ex.mask, policy, cfg.resolution, cfg.resolution,
                                           equalize, rng);
    return {std::move(rec.pixels), std::move(rec.mask)};
}

inline Tensor mask_batch(const std::vector<Mask>& masks) {
    Tensor t(static_cast<int>(masks.size()), 1, masks[0].height, masks[0].width);
    for (size_t i = 0; i < masks.size(); ++i)
        for (size_t k = 0; k < masks[i].bits.size(); ++k)
            t.sample(static_cast<int>(i))[k] = masks[i].bits[k];
    return t;
}

// Batch reconstruction loss and its gradient; masked or plain, mean over the
// batch of per-image losses.
inline double recon_loss_and_grad(const Tensor& x, const Tensor& y, const Tensor& m, bool masked,
                                  bool unsquared, Tensor& gy) {
    const int n = x.n;
    const size_t sz = x.sample_size();
    gy = Tensor(y.n, y.c, y.h, y.w);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const float* xi = x.sample(i);
        const float* yi = y.sample(i);
        float* gi = gy.sample(i);
        if (masked) {
            const float* mi = m.sample(i);
            double mass = 0.0, acc = 0.0;
            for (size_t k = 0; k < sz; ++k) {
                if (mi[k] <= 0.5f) continue;
                mass += 1.0;
                double d = yi[k] - xi[k];
                acc += d * d;
            }
            if (mass <= 0.0) continue;  // nothing under the mask: contributes zero
            if (unsquared) {
                double norm = std::sqrt(acc);
                total += norm / mass;
                if (norm > 0.0) {
                    double scale = 1.0 / (norm * mass * n);
                    for (size_t k = 0; k < sz; ++k)
                        if (mi[k] > 0.5f) gi[k] = static_cast<float>((yi[k] - xi[k]) * scale);
                }
            } else {
                total += acc / mass;
                double scale = 2.0 / (mass * n);
                for (size_t k = 0; k < sz; ++k)
                    if (mi[k] > 0.5f) gi[k] = static_cast<float>((yi[k] - xi[k]) * scale);
            }
        } else {
            double acc = 0.0;
            double scale = 2.0 / (static_cast<double>(sz) * n);
            for (size_t k = 0; k < sz; ++k) {
                double d = yi[k] - xi[k];
                acc += d * d;
                gi[k] = static_cast<float>(d * scale);
            }
            total += acc / static_cast<double>(sz);
        }
    }
    return total / n;
}

inline Tensor sample_noise(int n, int z_dim, Rng& rng) {
    Tensor z(n, z_dim, 1, 1);
    for (float& v : z.v) v = static_cast<float>(rand_normal(rng));
    return z;
}

inline void zero_all(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

struct EpochAccumulator {
    std::vector<double> sums;
    int batches = 0;
    void add(const std::vector<double>& components) {
        if (sums.empty()) sums.assign(components.size(), 0.0);
        for (size_t i = 0; i < components.size(); ++i) sums[i] += components[i];
        ++batches;
    }
    std::vector<double> mean() const {
        std::vector<double> out(sums.size(), 0.0);
        for (size_t i = 0; i < sums.size(); ++i) out[i] = batches ? sums[i] / batches : 0.0;
        return out;
    }
};

}  // namespace detail

// ---------------------------------------------------------------------------
// train_model
// ---------------------------------------------------------------------------

inline TrainedModel train_model(ModelKind kind, const std::vector<TrainExample>& records,
                                const TrainConfig& config,
                                const preprocess::AugmentationPolicy& policy,
                                bool equalize = false, std::ostream* log = nullptr) {
    validate_config(kind, config);
    if (records.empty()) throw std::invalid_argument("train_model: no training records");
    for (const auto& r : records)
        if (r.label == core::Label::positive)
            throw std::runtime_error("train_model: positive-study image in training input (leakage)");

    TrainedModel model;
    model.kind_value = kind;
    model.config = config;
    model.arch = build_architecture(kind, config.resolution, build_options_from(config));
    model.net = make_net(model.arch, config.seed);

    const int n = static_cast<int>(records.size());
    const int bs = std::min(config.batch_size, n);
    Rng order_rng(derive_seed(config.seed, 0x0E));
    Rng noise_rng(derive_seed(config.seed, 0x7A));
    Rng label_rng(derive_seed(config.seed, 0x5F));
    uint64_t sample_counter = 0;

    auto make_batches = [&](std::vector<int>& order) {
        order.resize(n);
        std::iota(order.begin(), order.end(), 0);
        shuffle_vec(order, order_rng);
    };

    auto load_batch = [&](const std::vector<int>& order, int start, int count, Tensor& x, Tensor& m) {
        std::vector<Image> imgs;
        std::vector<Mask> masks;
        imgs.reserve(count);
        masks.reserve(count);
        for (int k = 0; k < count; ++k) {
            const TrainExample& ex = records[order[start + k]];
            auto [img, mask] = detail::load_view(ex, policy, config, equalize, sample_counter++);
            imgs.push_back(std::move(img));
            masks.push_back(std::move(mask));
        }
        x = image_batch(imgs);
        m = detail::mask_batch(masks);
    };

    // --- family-specific loops ---
    if (kind == ModelKind::cae) {
        auto* net = static_cast<CaeNet*>(model.net.get());
        Adam adam(net->parameters(), config.lr);
        model.history.components = {"recon"};
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::vector<int> order;
            make_batches(order);
            detail::EpochAccumulator acc;
            for (int start = 0; start + bs <= n; start += bs) {
                Tensor x, m, gy;
                load_batch(order, start, bs, x, m);
                Tensor y = net->forward(x, true);
                double loss = detail::recon_loss_and_grad(x, y, m, config.masked_loss,
                                                          config.masked_loss_unsquared, gy);
                adam.zero_grad();
                net->backward(gy);
                adam.step();
                acc.add({loss});
            }
            model.history.per_epoch.push_back(acc.mean());
            if (log) *log << "epoch " << epoch << " recon " << acc.mean()[0] << "\n";
        }
    } else if (kind == ModelKind::vae) {
        auto* net = static_cast<VaeNet*>(model.net.get());
        Adam adam(net->parameters(), config.lr);
        model.history.components = {"recon", "kld"};
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::vector<int> order;
            make_batches(order);
            detail::EpochAccumulator acc;
            for (int start = 0; start + bs <= n; start += bs) {
                Tensor x, m, gy;
                load_batch(order, start, bs, x, m);
                Tensor eps = detail::sample_noise(bs, net->latent, noise_rng);
                Tensor y = net->forward_train(x, eps);
                double recon = detail::recon_loss_and_grad(x, y, m, config.masked_loss,
                                                           config.masked_loss_unsquared, gy);
                double kld = net->kld_value();
                adam.zero_grad();
                net->backward_train(gy, config.kld_weight);
                adam.step();
                acc.add({recon, kld});
            }
            model.history.per_epoch.push_back(acc.mean());
            if (log)
                *log << "epoch " << epoch << " recon " << acc.mean()[0] << " kld " << acc.mean()[1] << "\n";
        }
    } else if (kind == ModelKind::dcgan) {
        auto* net = static_cast<DcganNet*>(model.net.get());
        auto g_params = net->generator_params();
        auto d_params = net->discriminator_params();
        auto all_params = net->parameters();
        Adam adam_g(g_params, config.lr_generator);
        Adam adam_d(d_params, config.lr_discriminator);
        model.history.components = {"d_loss", "g_loss"};
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::vector<int> order;
            make_batches(order);
            detail::EpochAccumulator acc;
            for (int start = 0; start + bs <= n; start += bs) {
                Tensor x, m;
                load_batch(order, start, bs, x, m);

                // Discriminator step on [real; fake] in one pass.
                Tensor z = detail::sample_noise(bs, net->z_dim, noise_rng);
                Tensor fake = net->generator.forward(z, true);
                Tensor joint(2 * bs, x.c, x.h, x.w);
                std::copy(x.v.begin(), x.v.end(), joint.v.begin());
                std::copy(fake.v.begin(), fake.v.end(), joint.v.begin() + x.v.size());
                Tensor logits = net->discriminator.forward(joint, true);
                Tensor glog(logits.n, 1, 1, 1);
                double d_loss = 0.0;
                for (int i = 0; i < 2 * bs; ++i) {
                    double target = i < bs ? soften_labels(1, config.soft_label_delta, label_rng)
                                           : soften_labels(0, config.soft_label_delta, label_rng);
                    double l = logits.v[i];
                    d_loss += bce_with_logits(l, target);
                    double sig = 1.0 / (1.0 + std::exp(-l));
                    glog.v[i] = static_cast<float>((sig - target) / (2.0 * bs));
                }
                d_loss /= 2.0 * bs;
                detail::zero_all(all_params);
                net->discriminator.backward(glog);
                adam_d.step();

                // Generator step: make fresh fakes look real.
                Tensor z2 = detail::sample_noise(bs, net->z_dim, noise_rng);
                Tensor fake2 = net->generator.forward(z2, true);
                Tensor logits2 = net->discriminator.forward(fake2, true);
                Tensor glog2(bs, 1, 1, 1);
                double g_loss = 0.0;
                for (int i = 0; i < bs; ++i) {
                    double l = logits2.v[i];
                    g_loss += bce_with_logits(l, 1.0);
                    double sig = 1.0 / (1.0 + std::exp(-l));
                    glog2.v[i] = static_cast<float>((sig - 1.0) / bs);
                }
                g_loss /= bs;
                detail::zero_all(all_params);
                Tensor gfake = net->discriminator.backward(glog2);
                net->generator.backward(gfake);
                adam_g.step();

                acc.add({d_loss, g_loss});
            }
            model.history.per_epoch.push_back(acc.mean());
            if (log)
                *log << "epoch " << epoch << " d " << acc.mean()[0] << " g " << acc.mean()[1] << "\n";
        }
    } else if (kind == ModelKind::bigan) {
        auto* net = static_cast<BiganNet*>(model.net.get());
        auto ge_params = net->ge_params();
        auto d_params = net->d_params();
        auto all_params = net->parameters();
        Adam adam_ge(ge_params, config.lr_generator);
        Adam adam_d(d_params, config.lr_discriminator);
        model.history.components = {"d_loss", "ge_loss"};
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::vector<int> order;
            make_batches(order);
            detail::EpochAccumulator acc;
            for (int start = 0; start + bs <= n; start += bs) {
                Tensor x, m;
                load_batch(order, start, bs, x, m);

                auto run_joint = [&](Tensor& images, Tensor& codes) {
                    Tensor z = detail::sample_noise(bs, net->z_dim, noise_rng);
                    Tensor ex = net->encoder.forward(x, true);
                    Tensor gz = net->generator.forward(z, true);
                    images = Tensor(2 * bs, x.c, x.h, x.w);
                    std::copy(x.v.begin(), x.v.end(), images.v.begin());
                    std::copy(gz.v.begin(), gz.v.end(), images.v.begin() + x.v.size());
                    codes = Tensor(2 * bs, net->z_dim, 1, 1);
                    std::copy(ex.v.begin(), ex.v.end(), codes.v.begin());
                    std::copy(z.v.begin(), z.v.end(), codes.v.begin() + ex.v.size());
                };

                // Discriminator step: reals are (x, E(x)), fakes are (G(z), z).
                Tensor images, codes;
                run_joint(images, codes);
                Tensor logits = net->discriminate(images, codes, true);
                Tensor glog(2 * bs, 1, 1, 1);
                double d_loss = 0.0;
                for (int i = 0; i < 2 * bs; ++i) {
                    double l = logits.v[i];
                    if (i < bs) {
                        d_loss += std::max(0.0, 1.0 - l) / bs;
                        glog.v[i] = l < 1.0 ? static_cast<float>(-1.0 / bs) : 0.0f;
                    } else {
                        d_loss += std::max(0.0, 1.0 + l) / bs;
                        glog.v[i] = l > -1.0 ? static_cast<float>(1.0 / bs) : 0.0f;
                    }
                }
                detail::zero_all(all_params);
                net->discriminate_backward(glog);
                adam_d.step();

                // Generator + encoder step: -mean(D(fake)) + mean(D(real)).
                run_joint(images, codes);
                logits = net->discriminate(images, codes, true);
                double ge_loss = 0.0;
                Tensor glog2(2 * bs, 1, 1, 1);
                for (int i = 0; i < 2 * bs; ++i) {
                    double l = logits.v[i];
                    if (i < bs) {
                        ge_loss += l / bs;
                        glog2.v[i] = static_cast<float>(1.0 / bs);
                    } else {
                        ge_loss += -l / bs;
                        glog2.v[i] = static_cast<float>(-1.0 / bs);
                    }
                }
                detail::zero_all(all_params);
                auto [gimages, gcodes] = net->discriminate_backward(glog2);
                // real-image gradient flows into E via its code; fake path into G
                Tensor g_ex(bs, net->z_dim, 1, 1), g_z(bs, net->z_dim, 1, 1);
                detail::split_batch(gcodes, g_ex, g_z);
                Tensor g_gz(bs, x.c, x.h, x.w);
                std::copy(gimages.v.begin() + x.v.size(), gimages.v.end(), g_gz.v.begin());
                net->generator.backward(g_gz);
                net->encoder.backward(g_ex);
                adam_ge.step();

                acc.add({d_loss, ge_loss});
            }
            model.history.per_epoch.push_back(acc.mean());
            if (log)
                *log << "epoch " << epoch << " d " << acc.mean()[0] << " ge " << acc.mean()[1] << "\n";
        }
    } else {  // alphagan
        auto* net = static_cast<AlphaGanNet*>(model.net.get());
        auto ge_params = net->ge_params();
        auto d_params = net->d_params();
        auto co_params = net->co_params();
        auto all_params = net->parameters();
        Adam adam_ge(ge_params, config.lr_generator);
        Adam adam_d(d_params, config.lr_discriminator);
        Adam adam_co(co_params, config.lr_discriminator);
        model.history.components = {"d_loss", "co_loss", "ge_adv", "recon"};
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::vector<int> order;
            make_batches(order);
            detail::EpochAccumulator acc;
            for (int start = 0; start + bs <= n; start += bs) {
                Tensor x, m;
                load_batch(order, start, bs, x, m);

                // Shared forward: z_enc from E(x), z_pr from the prior,
                // fakes [G(z_enc); G(z_pr)] in one generator pass.
                auto forward_fakes = [&](Tensor& fakes, Tensor& z_prior, Tensor& eps) {
                    net->encode_heads(x, true);
                    eps = detail::sample_noise(bs, net->z_dim, noise_rng);
                    Tensor z_enc = net->sample_latent(eps);
                    z_prior = detail::sample_noise(bs, net->z_dim, noise_rng);
                    Tensor z_joint(2 * bs, net->z_dim, 1, 1);
                    std::copy(z_enc.v.begin(), z_enc.v.end(), z_joint.v.begin());
                    std::copy(z_prior.v.begin(), z_prior.v.end(), z_joint.v.begin() + z_enc.v.size());
                    fakes = net->generator.forward(z_joint, true);
                };

                // Discriminator: real x versus both kinds of fakes.
                Tensor fakes, z_prior, eps;
                forward_fakes(fakes, z_prior, eps);
                Tensor dj(3 * bs, x.c, x.h, x.w);
                std::copy(x.v.begin(), x.v.end(), dj.v.begin());
                std::copy(fakes.v.begin(), fakes.v.end(), dj.v.begin() + x.v.size());
                Tensor dlogits = net->discriminator.forward(dj, true);
                Tensor gdl(3 * bs, 1, 1, 1);
                double d_loss = 0.0;
                for (int i = 0; i < 3 * bs; ++i) {
                    double l = dlogits.v[i];
                    if (i < bs) {
                        d_loss += std::max(0.0, 1.0 - l) / bs;
                        gdl.v[i] = l < 1.0 ? static_cast<float>(-1.0 / bs) : 0.0f;
                    } else {
                        d_loss += std::max(0.0, 1.0 + l) / (2.0 * bs);
                        gdl.v[i] = l > -1.0 ? static_cast<float>(1.0 / (2.0 * bs)) : 0.0f;
                    }
                }
                detail::zero_all(all_params);
                net->discriminator.backward(gdl);
                adam_d.step();

                // Code discriminator: prior codes real, encoded codes fake.
                net->encode_heads(x, true);
                Tensor eps2 = detail::sample_noise(bs, net->z_dim, noise_rng);
                Tensor z_enc = net->sample_latent(eps2);
                Tensor z_pr2 = detail::sample_noise(bs, net->z_dim, noise_rng);
                Tensor cj(2 * bs, net->z_dim, 1, 1);
                std::copy(z_pr2.v.begin(), z_pr2.v.end(), cj.v.begin());
                std::copy(z_enc.v.begin(), z_enc.v.end(), cj.v.begin() + z_pr2.v.size());
                Tensor clogits = net->code_discriminator.forward(cj, true);
                Tensor gcl(2 * bs, 1, 1, 1);
                double co_loss = 0.0;
                for (int i = 0; i < 2 * bs; ++i) {
                    double l = clogits.v[i];
                    if (i < bs) {
                        co_loss += std::max(0.0, 1.0 - l) / bs;
                        gcl.v[i] = l < 1.0 ? static_cast<float>(-1.0 / bs) : 0.0f;
                    } else {
                        co_loss += std::max(0.0, 1.0 + l) / bs;
                        gcl.v[i] = l > -1.0 ? static_cast<float>(1.0 / bs) : 0.0f;
                    }
                }
                detail::zero_all(all_params);
                net->code_discriminator.backward(gcl);
                adam_co.step();

                // Encoder + generator step: reconstruction + adversarial terms.
                forward_fakes(fakes, z_prior, eps);
                Tensor x_rec(bs, x.c, x.h, x.w), x_gen(bs, x.c, x.h, x.w);
                detail::split_batch(fakes, x_rec, x_gen);
                Tensor grec;
                double recon = detail::recon_loss_and_grad(x, x_rec, m, config.masked_loss,
                                                           config.masked_loss_unsquared, grec);
                Tensor dlogits2 = net->discriminator.forward(fakes, true);
                double ge_adv = 0.0;
                Tensor gdl2(2 * bs, 1, 1, 1);
                for (int i = 0; i < 2 * bs; ++i) {
                    ge_adv += -dlogits2.v[i] / (2.0 * bs);
                    gdl2.v[i] = static_cast<float>(-1.0 / (2.0 * bs));
                }
                detail::zero_all(all_params);
                Tensor gfakes_adv = net->discriminator.backward(gdl2);
                // combine adversarial and reconstruction gradients on the fakes
                for (size_t k = 0; k < grec.v.size(); ++k)
                    gfakes_adv.v[k] += static_cast<float>(config.recon_weight) * grec.v[k];
                Tensor gz_joint = net->generator.backward(gfakes_adv);
                Tensor gz_enc(bs, net->z_dim, 1, 1), gz_pr(bs, net->z_dim, 1, 1);
                detail::split_batch(gz_joint, gz_enc, gz_pr);
                // code-adversarial term: encoder wants CO to accept its codes
                Tensor z_enc2 = net->sample_latent(eps);
                Tensor clogits2 = net->code_discriminator.forward(z_enc2, true);
                Tensor gcl2(bs, 1, 1, 1);
                for (int i = 0; i < bs; ++i) gcl2.v[i] = static_cast<float>(-1.0 / bs);
                Tensor gz_from_co = net->code_discriminator.backward(gcl2);
                for (size_t k = 0; k < gz_enc.v.size(); ++k) gz_enc.v[k] += gz_from_co.v[k];
                net->encode_backward(gz_enc);
                adam_ge.step();

                acc.add({d_loss, co_loss, ge_adv, recon});
            }
            model.history.per_epoch.push_back(acc.mean());
            if (log)
                *log << "epoch " << epoch << " d " << acc.mean()[0] << " co " << acc.mean()[1] << " ge "
                     << acc.mean()[2] << " recon " << acc.mean()[3] << "\n";
        }
    }
    return model;
}

// ---------------------------------------------------------------------------
// Loss history CSV
// ---------------------------------------------------------------------------

inline void write_loss_history(const LossHistory& h, std::ostream& os) {
    os << "epoch";
    for (const auto& c : h.components) os << "," << c;
    os << "\n";
    for (size_t e = 0; e < h.per_epoch.size(); ++e) {
        os << e;
        char buf[32];
        for (double v : h.per_epoch[e]) {
            std::snprintf(buf, sizeof(buf), "%.9g", v);
            os << "," << buf;
        }
        os << "\n";
    }
}

inline void write_loss_history_file(const LossHistory& h, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write loss history: " + path);
    write_loss_history(h, f);
}

inline LossHistory read_loss_history_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read loss history: " + path);
    LossHistory h;
    std::string line;
    if (!std::getline(f, line)) return h;
    std::istringstream hdr(line);
    std::string col;
    bool first = true;
    while (std::getline(hdr, col, ',')) {
        if (!first) h.components.push_back(col);
        first = false;
    }
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        std::vector<double> vals;
        first = true;
        while (std::getline(row, cell, ',')) {
            if (!first) vals.push_back(std::stod(cell));
            first = false;
        }
        h.per_epoch.push_back(vals);
    }
    return h;
}

// ---------------------------------------------------------------------------
// Checkpoints: magic, JSON header (model/config/tensor directory), raw floats
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "XRAYCKPT1\n";

inline nlohmann::ordered_json config_to_json(const TrainConfig& c) {
    return nlohmann::ordered_json{{"batch_size", c.batch_size},
                                  {"resolution", c.resolution},
                                  {"epochs", c.epochs},
                                  {"lr", c.lr},
                                  {"lr_generator", c.lr_generator},
                                  {"lr_discriminator", c.lr_discriminator},
                                  {"seed", c.seed},
                                  {"batch_norm", c.batch_norm},
                                  {"spectral_norm", c.spectral_norm},
                                  {"soft_label_delta", c.soft_label_delta},
                                  {"minibatch_disc", c.minibatch_disc},
                                  {"hinge_loss", c.hinge_loss},
                                  {"masked_loss", c.masked_loss},
                                  {"masked_loss_unsquared", c.masked_loss_unsquared},
                                  {"kld_weight", c.kld_weight},
                                  {"recon_weight", c.recon_weight},
                                  {"z_dim", c.z_dim}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.batch_size = j.at("batch_size");
    c.resolution = j.at("resolution");
    c.epochs = j.at("epochs");
    c.lr = j.at("lr");
    c.lr_generator = j.at("lr_generator");
    c.lr_discriminator = j.at("lr_discriminator");
    c.seed = j.at("seed");
    c.batch_norm = j.at("batch_norm");
    c.spectral_norm = j.at("spectral_norm");
    c.soft_label_delta = j.at("soft_label_delta");
    c.minibatch_disc = j.at("minibatch_disc");
    c.hinge_loss = j.at("hinge_loss");
    c.masked_loss = j.at("masked_loss");
    c.masked_loss_unsquared = j.at("masked_loss_unsquared");
    c.kld_weight = j.at("kld_weight");
    c.recon_weight = j.at("recon_weight");
    c.z_dim = j.at("z_dim");
    return c;
}

inline nlohmann::ordered_json arch_to_json(const ArchitectureSpec& a) {
    nlohmann::ordered_json subnets = nlohmann::ordered_json::array();
    for (const auto& net : a.subnets) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& r : net.rows) {
            rows.push_back({{"kind", layer_kind_name(r.kind)},
                            {"kernel", r.kernel},
                            {"stride", r.stride},
                            {"pad", r.pad},
                            {"out", r.out.str()},
                            {"batch_norm", r.batch_norm},
                            {"activation", act_name(r.activation)},
                            {"spectral_norm", r.spectral_norm},
                            {"attention", r.attention},
                            {"mbd", r.mbd_kernels},
                            {"gaussian_head", r.gaussian_head}});
        }
        subnets.push_back({{"name", net.name}, {"input", net.input.str()}, {"rows", rows}});
    }
    return nlohmann::ordered_json{{"name", model_name(a.kind)},
                                  {"resolution", a.resolution},
                                  {"z_dim", a.z_dim},
                                  {"subnets", subnets}};
}

inline void save_checkpoint(const TrainedModel& model, const std::string& path) {
    std::vector<Param*> params;
    std::vector<NamedBuffer> buffers;
    model.net->collect(params, buffers);

    nlohmann::ordered_json header;
    header["model"] = model_name(model.kind());
    header["config"] = config_to_json(model.config);
    header["seed"] = model.config.seed;
    header["architecture"] = arch_to_json(model.arch);
    nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
    uint64_t offset = 0;
    for (Param* p : params) {
        tensors.push_back({{"name", p->name}, {"offset", offset}, {"count", p->value.size()}});
        offset += p->value.size();
    }
    for (const auto& b : buffers) {
        tensors.push_back({{"name", b.name}, {"offset", offset}, {"count", b.data->size()}});
        offset += b.data->size();
    }
    header["tensors"] = tensors;

    std::string hs = header.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (Param* p : params)
        f.write(reinterpret_cast<const char*>(p->value.data()),
                static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    for (const auto& b : buffers)
        f.write(reinterpret_cast<const char*>(b.data->data()),
                static_cast<std::streamsize>(b.data->size() * sizeof(float)));
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

inline TrainedModel load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[sizeof(kCheckpointMagic) - 1];
    f.read(magic, sizeof(magic));
    if (f.gcount() != static_cast<std::streamsize>(sizeof(magic)) ||
        std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header = nlohmann::json::parse(hs);

    TrainedModel model;
    model.kind_value = parse_model_kind(header.at("model"));
    model.config = config_from_json(header.at("config"));
    model.arch = build_architecture(model.kind_value, model.config.resolution,
                                    build_options_from(model.config));
    if (header.contains("architecture") &&
        nlohmann::json(arch_to_json(model.arch)) != header.at("architecture"))
        throw std::runtime_error("checkpoint architecture does not match its configuration: " + path);
    model.net = make_net(model.arch, model.config.seed);

    std::vector<Param*> params;
    std::vector<NamedBuffer> buffers;
    model.net->collect(params, buffers);
    std::map<std::string, std::pair<uint64_t, uint64_t>> directory;
    for (const auto& t : header.at("tensors"))
        directory[t.at("name")] = {t.at("offset"), t.at("count")};

    std::streampos payload = f.tellg();
    auto read_into = [&](const std::string& name, std::vector<float>& dst) {
        auto it = directory.find(name);
        if (it == directory.end()) throw std::runtime_error("checkpoint misses tensor " + name);
        if (it->second.second != dst.size())
            throw std::runtime_error("checkpoint tensor size mismatch for " + name);
        f.seekg(payload + static_cast<std::streamoff>(it->second.first * sizeof(float)));
        f.read(reinterpret_cast<char*>(dst.data()),
               static_cast<std::streamsize>(dst.size() * sizeof(float)));
    };
    for (Param* p : params) read_into(p->name, p->value);
    for (const auto& b : buffers) read_into(b.name, *b.data);
    if (!f) throw std::runtime_error("checkpoint read failed: " + path);
    return model;
}

}  // namespace xray::models
