#include <catch_amalgamated.hpp>

#include <cmath>

#include "xray/nets.hpp"
#include "xray/train.hpp"

using namespace xray;
using namespace xray::models;

// End-to-end finite-difference checks through the composite model wrappers.
// The per-layer backward passes are checked in test_layers.cpp; these cover
// the hand-wired seams: the VAE reparameterization chain, the BiGAN joint
// discriminator split, and the alpha-GAN gaussian encoder head.

namespace {

Tensor random_tensor(int n, int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t(n, c, h, w);
    for (float& v : t.v) v = static_cast<float>(rand_uniform(rng, lo, hi));
    return t;
}

bool close(double analytic, double numeric, double rel_tol, double abs_tol) {
    double err = std::fabs(analytic - numeric);
    return err <= abs_tol || err <= rel_tol * std::max(std::fabs(analytic), std::fabs(numeric));
}

// Central finite differences over a sample of each parameter's coordinates,
// compared as vectors (cosine and norm ratio). Per-coordinate comparison is
// too noisy through deep leaky-relu stacks, while structural defects (wrong
// split order, transposed products, dropped scale factors) still destroy the
// aggregate agreement.
template <typename LossFn>
void check_param_grads(const std::vector<Param*>& params, LossFn loss, double eps = 2e-3,
                       size_t samples = 8, bool weights_only = false) {
    for (Param* p : params) {
        // deep-stack bias gradients sit at the float32 finite-difference noise
        // floor; the weight matrices carry the same structural information
        if (weights_only && p->name.find(".bias") != std::string::npos) continue;
        size_t stride = std::max<size_t>(1, p->value.size() / samples);
        std::vector<double> analytic, numeric;
        for (size_t i = 0; i < p->value.size(); i += stride) {
            float keep = p->value[i];
            p->value[i] = keep + static_cast<float>(eps);
            double hi = loss();
            p->value[i] = keep - static_cast<float>(eps);
            double lo = loss();
            p->value[i] = keep;
            analytic.push_back(p->grad[i]);
            numeric.push_back((hi - lo) / (2 * eps));
        }
        double dot = 0, na = 0, nf = 0;
        for (size_t k = 0; k < analytic.size(); ++k) {
            dot += analytic[k] * numeric[k];
            na += analytic[k] * analytic[k];
            nf += numeric[k] * numeric[k];
        }
        na = std::sqrt(na);
        nf = std::sqrt(nf);
        if (na < 1e-5 && nf < 1e-5) continue;  // gradient vanishes here
        INFO(p->name << " |analytic| " << na << " |fd| " << nf << " dot " << dot);
        CHECK(dot / std::max(na * nf, 1e-30) > 0.98);
        CHECK(na / std::max(nf, 1e-30) > 0.75);
        CHECK(na / std::max(nf, 1e-30) < 1.33);
    }
}

}  // namespace

TEST_CASE("VAE training backward matches finite differences end to end") {
    BuildOptions opt;
    opt.z_dim = 8;
    ArchitectureSpec arch = build_architecture(ModelKind::vae, 64, opt);
    Rng rng(derive_seed(5, 1));
    VaeNet net(arch, rng);

    Rng data_rng(17);
    Tensor x = random_tensor(2, 1, 64, 64, data_rng);
    Tensor eps = random_tensor(2, 8, 1, 1, data_rng, -1.0, 1.0);
    Tensor mask(2, 1, 64, 64, 1.0f);
    const double kld_weight = 0.05;

    auto loss = [&]() {
        Tensor y = net.forward_train(x, eps);
        Tensor gy;
        double recon = detail::recon_loss_and_grad(x, y, mask, false, false, gy);
        return recon + kld_weight * net.kld_value();
    };

    std::vector<Param*> params = net.parameters();
    for (Param* p : params) p->zero_grad();
    Tensor y = net.forward_train(x, eps);
    Tensor gy;
    detail::recon_loss_and_grad(x, y, mask, false, false, gy);
    net.backward_train(gy, kld_weight);

    check_param_grads(params, loss);
}

TEST_CASE("BiGAN joint discriminator backward matches finite differences") {
    BuildOptions opt;
    opt.z_dim = 8;
    ArchitectureSpec arch = build_architecture(ModelKind::bigan, 32, opt);
    Rng rng(derive_seed(6, 1));
    BiganNet net(arch, rng);

    Rng data_rng(23);
    Tensor images = random_tensor(2, 1, 32, 32, data_rng);
    Tensor codes = random_tensor(2, 8, 1, 1, data_rng, -1.0, 1.0);
    std::vector<float> w = {0.7f, -1.3f};

    auto loss = [&]() {
        Tensor logits = net.discriminate(images, codes, true);
        return static_cast<double>(logits.v[0]) * w[0] + static_cast<double>(logits.v[1]) * w[1];
    };

    std::vector<Param*> d_params = net.d_params();
    for (Param* p : net.parameters()) p->zero_grad();
    net.discriminate(images, codes, true);
    Tensor glog(2, 1, 1, 1);
    glog.v = w;
    auto [gimages, gcodes] = net.discriminate_backward(glog);

    check_param_grads(d_params, loss, 2e-3, 8, true);

    // input gradients through the channel split
    for (size_t i = 0; i < images.size(); i += 131) {
        float keep = images.v[i];
        images.v[i] = keep + 5e-3f;
        double hi = loss();
        images.v[i] = keep - 5e-3f;
        double lo = loss();
        images.v[i] = keep;
        double fd = (hi - lo) / 1e-2;
        INFO("image coordinate " << i);
        CHECK(close(gimages.v[i], fd, 0.12, 5e-3));
    }
    for (size_t i = 0; i < codes.size(); ++i) {
        float keep = codes.v[i];
        codes.v[i] = keep + 5e-3f;
        double hi = loss();
        codes.v[i] = keep - 5e-3f;
        double lo = loss();
        codes.v[i] = keep;
        double fd = (hi - lo) / 1e-2;
        INFO("code coordinate " << i);
        CHECK(close(gcodes.v[i], fd, 0.12, 5e-3));
    }
}

TEST_CASE("alpha-GAN encoder-generator backward matches finite differences") {
    BuildOptions opt;
    opt.z_dim = 8;
    ArchitectureSpec arch = build_architecture(ModelKind::alphagan, 32, opt);
    Rng rng(derive_seed(7, 1));
    AlphaGanNet net(arch, rng);

    Rng data_rng(29);
    Tensor x = random_tensor(2, 1, 32, 32, data_rng);
    Tensor eps = random_tensor(2, 8, 1, 1, data_rng, -1.0, 1.0);
    Rng wrng(31);
    std::vector<float> w(2 * 32 * 32);
    for (float& v : w) v = static_cast<float>(rand_uniform(wrng, -1, 1));

    // loss = <w, G(mu + sigma*eps)> with eps held fixed
    auto loss = [&]() {
        net.encode_heads(x, true);
        Tensor z = net.sample_latent(eps);
        Tensor fake = net.generator.forward(z, true);
        double acc = 0.0;
        for (size_t i = 0; i < fake.v.size(); ++i) acc += static_cast<double>(fake.v[i]) * w[i];
        return acc;
    };

    for (Param* p : net.parameters()) p->zero_grad();
    net.encode_heads(x, true);
    Tensor z = net.sample_latent(eps);
    Tensor fake = net.generator.forward(z, true);
    Tensor gfake(2, 1, 32, 32);
    std::copy(w.begin(), w.end(), gfake.v.begin());
    Tensor gz = net.generator.backward(gfake);
    net.encode_backward(gz);

    check_param_grads(net.ge_params(), loss, 2e-3, 8, true);
}
