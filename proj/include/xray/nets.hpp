#pragma once

// Runtime networks assembled from ArchitectureSpec rows. Each model family
// gets a small composite class exposing the forward paths scoring needs
// (reconstruction, gaussian latent, discriminator logits).

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/layers.hpp"
#include "xray/models.hpp"
#include "xray/tensor.hpp"

namespace xray::models {

namespace detail {

// Expands declarative rows into runtime layers. `in_c` tracks channels.
inline Sequential expand_rows(const Subnet& net, Rng& rng) {
    Sequential seq;
    Shape cur = net.input;
    int in_c = cur.d.size() == 3 ? cur.c() : cur.d[0];
    long long flat = cur.count();

    for (const auto& row : net.rows) {
        switch (row.kind) {
            case LayerKind::conv:
                seq.add(std::make_unique<Conv2D>(in_c, row.out_channels, row.kernel, row.kernel,
                                                 row.stride, row.pad, rng, row.spectral_norm));
                in_c = row.out_channels;
                break;
            case LayerKind::transposed_conv:
                seq.add(std::make_unique<ConvTranspose2D>(in_c, row.out_channels, row.kernel, row.kernel,
                                                          row.stride, row.pad, rng));
                in_c = row.out_channels;
                break;
            case LayerKind::fully_connected:
                seq.add(std::make_unique<FullyConnected>(static_cast<int>(flat), row.out_channels, rng,
                                                         row.spectral_norm));
                in_c = row.out_channels;
                break;
            case LayerKind::reshape: {
                const auto& d = row.out.d;
                if (d.size() == 3)
                    seq.add(std::make_unique<Reshape>(d[2], d[0], d[1]));
                else
                    seq.add(std::make_unique<Reshape>(d[0], 1, 1));
                in_c = d.size() == 3 ? d[2] : d[0];
                break;
            }
            case LayerKind::minibatch_discrimination:
                seq.add(std::make_unique<MinibatchDiscrimination>(in_c, row.mbd_kernels, row.mbd_dims, rng));
                in_c += row.mbd_kernels;
                break;
            case LayerKind::upsample:
                seq.add(std::make_unique<NearestUpsample2>());
                break;
            case LayerKind::pool:
                seq.add(std::make_unique<MaxPool2>());
                break;
            case LayerKind::reparameterize:
                throw std::runtime_error("reparameterize rows are assembled by the VAE wrapper");
            default:
                throw std::runtime_error("expand_rows: unsupported row kind");
        }
        if (row.batch_norm) seq.add(std::make_unique<BatchNorm2d>(in_c));
        if (row.activation != Act::none) seq.add(std::make_unique<Activation>(row.activation));
        if (row.attention) seq.add(std::make_unique<SelfAttention>(in_c, rng));
        cur = propagate(cur, row);
        flat = cur.count();
    }
    return seq;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w) throw std::runtime_error("concat_channels: shape mismatch");
    Tensor out(a.n, a.c + b.c, a.h, a.w);
    for (int i = 0; i < a.n; ++i) {
        std::copy(a.sample(i), a.sample(i) + a.sample_size(), out.sample(i));
        std::copy(b.sample(i), b.sample(i) + b.sample_size(), out.sample(i) + a.sample_size());
    }
    return out;
}

inline void split_channels(const Tensor& joint, Tensor& a, Tensor& b) {
    for (int i = 0; i < joint.n; ++i) {
        std::copy(joint.sample(i), joint.sample(i) + a.sample_size(), a.sample(i));
        std::copy(joint.sample(i) + a.sample_size(), joint.sample(i) + joint.sample_size(), b.sample(i));
    }
}

// Splits along the batch dimension: a gets the first a.n samples.
inline void split_batch(const Tensor& joint, Tensor& a, Tensor& b) {
    std::copy(joint.v.begin(), joint.v.begin() + a.v.size(), a.v.begin());
    std::copy(joint.v.begin() + a.v.size(), joint.v.end(), b.v.begin());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model nets
// ---------------------------------------------------------------------------

class ModelNet {
public:
    virtual ~ModelNet() = default;
    virtual ModelKind kind() const = 0;
    virtual void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) = 0;

    virtual bool can_reconstruct() const { return false; }
    virtual Tensor reconstruct(const Tensor&) { throw std::runtime_error("model has no reconstruction path"); }

    virtual bool has_gaussian_latent() const { return false; }
    // mu/sigma per sample
    virtual void encode_gaussian(const Tensor&, std::vector<std::vector<float>>&,
                                 std::vector<std::vector<float>>&) {
        throw std::runtime_error("model has no gaussian latent");
    }

    virtual bool has_discriminator() const { return false; }
    virtual std::vector<float> discriminator_logits(const Tensor&) {
        throw std::runtime_error("model has no discriminator");
    }

    virtual bool has_code_discriminator() const { return false; }
    virtual std::vector<float> code_discriminator_logits(const Tensor&) {
        throw std::runtime_error("model has no code discriminator");
    }

    std::vector<Param*> parameters() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        collect(p, b);
        return p;
    }
};

inline std::vector<float> logits_to_vector(const Tensor& t) {
    if (t.sample_size() != 1) throw std::runtime_error("expected scalar logits per sample");
    return t.v;
}

struct CaeNet final : ModelNet {
    Sequential encoder, decoder;

    CaeNet(const ArchitectureSpec& arch, Rng& rng) {
        encoder = detail::expand_rows(arch.subnet("encoder"), rng);
        decoder = detail::expand_rows(arch.subnet("decoder"), rng);
    }

    ModelKind kind() const override { return ModelKind::cae; }
    bool can_reconstruct() const override { return true; }

    Tensor forward(const Tensor& x, bool train) { return decoder.forward(encoder.forward(x, train), train); }
    Tensor reconstruct(const Tensor& x) override { return forward(x, false); }
    void backward(const Tensor& gy) { encoder.backward(decoder.backward(gy)); }

    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) override {
        encoder.collect("encoder", params, buffers);
        decoder.collect("decoder", params, buffers);
    }
};

struct VaeNet final : ModelNet {
    Sequential encoder, decoder;
    Reshape flatten, unflatten;
    std::unique_ptr<FullyConnected> fc_mu, fc_logvar, fc_decode;
    Activation decode_act{Act::relu};
    int latent = 0;
    int flat = 0;

    // caches for the training step
    Tensor mu_t, logvar_t, eps_t, sigma_t;

    VaeNet(const ArchitectureSpec& arch, Rng& rng)
        : flatten(0, 0, 0), unflatten(0, 0, 0) {
        const Subnet& enc = arch.subnet("encoder");
        const Subnet& mid = arch.subnet("bottleneck");
        const Subnet& dec = arch.subnet("decoder");

        encoder = detail::expand_rows(enc, rng);
        latent = arch.z_dim;
        flat = static_cast<int>(mid.input.count());
        flatten = Reshape(flat, 1, 1);
        fc_mu = std::make_unique<FullyConnected>(flat, latent, rng);
        fc_logvar = std::make_unique<FullyConnected>(flat, latent, rng);
        fc_decode = std::make_unique<FullyConnected>(latent, flat, rng);
        const auto& din = dec.input.d;
        unflatten = Reshape(din[2], din[0], din[1]);
        decoder = detail::expand_rows(dec, rng);
    }

    ModelKind kind() const override { return ModelKind::vae; }
    bool can_reconstruct() const override { return true; }
    bool has_gaussian_latent() const override { return true; }

    // Training forward: z = mu + exp(0.5*logvar) * eps.
    Tensor forward_train(const Tensor& x, const Tensor& eps) {
        Tensor h = encoder.forward(x, true);
        Tensor f = flatten.forward(h, true);
        mu_t = fc_mu->forward(f, true);
        logvar_t = fc_logvar->forward(f, true);
        eps_t = eps;
        sigma_t = logvar_t;
        for (size_t i = 0; i < sigma_t.v.size(); ++i) sigma_t.v[i] = std::exp(0.5f * logvar_t.v[i]);
        Tensor z = mu_t;
        for (size_t i = 0; i < z.v.size(); ++i) z.v[i] = mu_t.v[i] + sigma_t.v[i] * eps.v[i];
        Tensor d = decode_act.forward(fc_decode->forward(z, true), true);
        return decoder.forward(unflatten.forward(d, true), true);
    }

    // Backward from reconstruction gradient plus explicit KLD gradients.
    void backward_train(const Tensor& gy, double kld_weight) {
        Tensor gd = unflatten.backward(decoder.backward(gy));
        Tensor gz = fc_decode->backward(decode_act.backward(gd));
        // z = mu + sigma*eps, sigma = exp(0.5*logvar)
        Tensor gmu = gz;
        Tensor glogvar = gz;
        for (size_t i = 0; i < gz.v.size(); ++i)
            glogvar.v[i] = gz.v[i] * eps_t.v[i] * sigma_t.v[i] * 0.5f;
        // KLD = 1/2 sum(exp(lv) + mu^2 - 1 - lv), averaged over the batch
        float kw = static_cast<float>(kld_weight) / static_cast<float>(mu_t.n);
        for (size_t i = 0; i < gmu.v.size(); ++i) {
            gmu.v[i] += kw * mu_t.v[i];
            glogvar.v[i] += kw * 0.5f * (std::exp(logvar_t.v[i]) - 1.0f);
        }
        Tensor gf = fc_mu->backward(gmu);
        Tensor gf2 = fc_logvar->backward(glogvar);
        for (size_t i = 0; i < gf.v.size(); ++i) gf.v[i] += gf2.v[i];
        encoder.backward(flatten.backward(gf));
    }

    double kld_value() const {
        double acc = 0.0;
        for (size_t i = 0; i < mu_t.v.size(); ++i) {
            double lv = logvar_t.v[i];
            acc += std::exp(lv) + static_cast<double>(mu_t.v[i]) * mu_t.v[i] - 1.0 - lv;
        }
        return 0.5 * acc / mu_t.n;
    }

    Tensor reconstruct(const Tensor& x) override {
        Tensor h = encoder.forward(x, false);
        Tensor f = flatten.forward(h, false);
        Tensor mu = fc_mu->forward(f, false);
        Tensor d = decode_act.forward(fc_decode->forward(mu, false), false);
        return decoder.forward(unflatten.forward(d, false), false);
    }

    void encode_gaussian(const Tensor& x, std::vector<std::vector<float>>& mu,
                         std::vector<std::vector<float>>& sigma) override {
        Tensor h = encoder.forward(x, false);
        Tensor f = flatten.forward(h, false);
        Tensor m = fc_mu->forward(f, false);
        Tensor lv = fc_logvar->forward(f, false);
        mu.assign(x.n, std::vector<float>(latent));
        sigma.assign(x.n, std::vector<float>(latent));
        for (int i = 0; i < x.n; ++i)
            for (int k = 0; k < latent; ++k) {
                mu[i][k] = m.v[static_cast<size_t>(i) * latent + k];
                sigma[i][k] = std::exp(0.5f * lv.v[static_cast<size_t>(i) * latent + k]);
            }
    }

    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) override {
        encoder.collect("encoder", params, buffers);
        fc_mu->collect("fc_mu", params, buffers);
        fc_logvar->collect("fc_logvar", params, buffers);
        fc_decode->collect("fc_decode", params, buffers);
        decoder.collect("decoder", params, buffers);
    }
};

struct DcganNet final : ModelNet {
    Sequential generator, discriminator;
    int z_dim = 0;

    DcganNet(const ArchitectureSpec& arch, Rng& rng) : z_dim(arch.z_dim) {
        generator = detail::expand_rows(arch.subnet("generator"), rng);
        discriminator = detail::expand_rows(arch.subnet("discriminator"), rng);
    }

    ModelKind kind() const override { return ModelKind::dcgan; }
    bool has_discriminator() const override { return true; }

    std::vector<float> discriminator_logits(const Tensor& x) override {
        return logits_to_vector(discriminator.forward(x, false));
    }

    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) override {
        generator.collect("generator", params, buffers);
        discriminator.collect("discriminator", params, buffers);
    }

    std::vector<Param*> generator_params() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        generator.collect("generator", p, b);
        return p;
    }
    std::vector<Param*> discriminator_params() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        discriminator.collect("discriminator", p, b);
        return p;
    }
};

struct BiganNet final : ModelNet {
    Sequential generator, encoder, d_image, d_code, d_joint;
    int z_dim = 0;
    int img_feat = 0, code_feat = 0;

    BiganNet(const ArchitectureSpec& arch, Rng& rng) : z_dim(arch.z_dim) {
        generator = detail::expand_rows(arch.subnet("generator"), rng);
        encoder = detail::expand_rows(arch.subnet("encoder"), rng);
        d_image = detail::expand_rows(arch.subnet("discriminator_image"), rng);
        d_code = detail::expand_rows(arch.subnet("discriminator_code"), rng);
        d_joint = detail::expand_rows(arch.subnet("discriminator_joint"), rng);
        img_feat = arch.subnet("discriminator_image").rows.back().out.c();
        code_feat = arch.subnet("discriminator_code").rows.back().out.c();
    }

    ModelKind kind() const override { return ModelKind::bigan; }
    bool can_reconstruct() const override { return true; }
    bool has_discriminator() const override { return true; }

    Tensor reconstruct(const Tensor& x) override {
        Tensor z = encoder.forward(x, false);
        return generator.forward(z, false);
    }

    // Joint discriminator on (image, code) pairs.
    Tensor discriminate(const Tensor& images, const Tensor& codes, bool train) {
        Tensor fi = d_image.forward(images, train);
        Tensor fc = d_code.forward(codes, train);
        return d_joint.forward(detail::concat_channels(fi, fc), train);
    }

    // Backward through the joint head; returns gradients for images and codes.
    std::pair<Tensor, Tensor> discriminate_backward(const Tensor& glogits) {
        Tensor gjoint = d_joint.backward(glogits);
        Tensor gi(glogits.n, img_feat, 1, 1), gc(glogits.n, code_feat, 1, 1);
        detail::split_channels(gjoint, gi, gc);
        return {d_image.backward(gi), d_code.backward(gc)};
    }

    std::vector<float> discriminator_logits(const Tensor& x) override {
        Tensor z = encoder.forward(x, false);
        return logits_to_vector(discriminate(x, z, false));
    }

    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) override {
        generator.collect("generator", params, buffers);
        encoder.collect("encoder", params, buffers);
        d_image.collect("d_image", params, buffers);
        d_code.collect("d_code", params, buffers);
        d_joint.collect("d_joint", params, buffers);
    }

    std::vector<Param*> ge_params() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        generator.collect("generator", p, b);
        encoder.collect("encoder", p, b);
        return p;
    }
    std::vector<Param*> d_params() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        d_image.collect("d_image", p, b);
        d_code.collect("d_code", p, b);
        d_joint.collect("d_joint", p, b);
        return p;
    }
};

struct AlphaGanNet final : ModelNet {
    Sequential encoder, generator, discriminator, code_discriminator;
    int z_dim = 0;

    // caches for training
    Tensor mu_t, logvar_t, sigma_t, eps_t;

    AlphaGanNet(const ArchitectureSpec& arch, Rng& rng) : z_dim(arch.z_dim) {
        generator = detail::expand_rows(arch.subnet("generator"), rng);
        encoder = detail::expand_rows(arch.subnet("encoder"), rng);
        discriminator = detail::expand_rows(arch.subnet("discriminator"), rng);
        code_discriminator = detail::expand_rows(arch.subnet("code_discriminator"), rng);
    }

    ModelKind kind() const override { return ModelKind::alphagan; }
    bool can_reconstruct() const override { return true; }
    bool has_discriminator() const override { return true; }
    bool has_code_discriminator() const override { return true; }
    bool has_gaussian_latent() const override { return true; }

    // Encoder head emits (mu, logvar) stacked along channels.
    void encode_heads(const Tensor& x, bool train) {
        Tensor out = encoder.forward(x, train);
        mu_t = Tensor(out.n, z_dim, 1, 1);
        logvar_t = Tensor(out.n, z_dim, 1, 1);
        detail::split_channels(out, mu_t, logvar_t);
        sigma_t = logvar_t;
        for (size_t i = 0; i < sigma_t.v.size(); ++i) sigma_t.v[i] = std::exp(0.5f * logvar_t.v[i]);
    }

    Tensor sample_latent(const Tensor& eps) {
        eps_t = eps;
        Tensor z = mu_t;
        for (size_t i = 0; i < z.v.size(); ++i) z.v[i] = mu_t.v[i] + sigma_t.v[i] * eps.v[i];
        return z;
    }

    // Backward through the reparameterized latent into the encoder.
    void encode_backward(const Tensor& gz) {
        Tensor glogvar = gz;
        for (size_t i = 0; i < gz.v.size(); ++i)
            glogvar.v[i] = gz.v[i] * eps_t.v[i] * sigma_t.v[i] * 0.5f;
        encoder.backward(detail::concat_channels(gz, glogvar));
    }

    Tensor reconstruct(const Tensor& x) override {
        encode_heads(x, false);
        return generator.forward(mu_t, false);
    }

    std::vector<float> discriminator_logits(const Tensor& x) override {
        return logits_to_vector(discriminator.forward(x, false));
    }

    std::vector<float> code_discriminator_logits(const Tensor& x) override {
        encode_heads(x, false);
        return logits_to_vector(code_discriminator.forward(mu_t, false));
    }

    void encode_gaussian(const Tensor& x, std::vector<std::vector<float>>& mu,
                         std::vector<std::vector<float>>& sigma) override {
        encode_heads(x, false);
        mu.assign(x.n, std::vector<float>(z_dim));
        sigma.assign(x.n, std::vector<float>(z_dim));
        for (int i = 0; i < x.n; ++i)
            for (int k = 0; k < z_dim; ++k) {
                mu[i][k] = mu_t.v[static_cast<size_t>(i) * z_dim + k];
                sigma[i][k] = sigma_t.v[static_cast<size_t>(i) * z_dim + k];
            }
    }

    void collect(std::vector<Param*>& params, std::vector<NamedBuffer>& buffers) override {
        encoder.collect("encoder", params, buffers);
        generator.collect("generator", params, buffers);
        discriminator.collect("discriminator", params, buffers);
        code_discriminator.collect("code_discriminator", params, buffers);
    }

    std::vector<Param*> ge_params() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        encoder.collect("encoder", p, b);
        generator.collect("generator", p, b);
        return p;
    }
    std::vector<Param*> d_params() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        discriminator.collect("discriminator", p, b);
        return p;
    }
    std::vector<Param*> co_params() {
        std::vector<Param*> p;
        std::vector<NamedBuffer> b;
        code_discriminator.collect("code_discriminator", p, b);
        return p;
    }
};

inline std::unique_ptr<ModelNet> make_net(const ArchitectureSpec& arch, uint32_t seed) {
    Rng rng(derive_seed(seed, 0x1217));
    switch (arch.kind) {
        case ModelKind::cae: return std::make_unique<CaeNet>(arch, rng);
        case ModelKind::vae: return std::make_unique<VaeNet>(arch, rng);
        case ModelKind::dcgan: return std::make_unique<DcganNet>(arch, rng);
        case ModelKind::bigan: return std::make_unique<BiganNet>(arch, rng);
        case ModelKind::alphagan: return std::make_unique<AlphaGanNet>(arch, rng);
    }
    throw std::invalid_argument("make_net: unknown model kind");
}

}  // namespace xray::models
