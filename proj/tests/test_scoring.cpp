#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "xray/scoring.hpp"

using namespace xray;
using namespace xray::scoring;

namespace {

// Scoring-surface stand-ins with exactly controlled outputs.
struct IdentityNet final : models::ModelNet {
    models::ModelKind kind() const override { return models::ModelKind::cae; }
    bool can_reconstruct() const override { return true; }
    models::Tensor reconstruct(const models::Tensor& x) override { return x; }
    void collect(std::vector<models::Param*>&, std::vector<models::NamedBuffer>&) override {}
};

struct FixedNet final : models::ModelNet {
    models::Tensor recon;
    float disc_logit = 0.0f;
    float code_logit = 0.0f;
    std::vector<float> mu, sigma;

    models::ModelKind kind() const override { return models::ModelKind::alphagan; }
    bool can_reconstruct() const override { return recon.size() > 0; }
    models::Tensor reconstruct(const models::Tensor&) override { return recon; }
    bool has_discriminator() const override { return true; }
    std::vector<float> discriminator_logits(const models::Tensor& x) override {
        return std::vector<float>(x.n, disc_logit);
    }
    bool has_code_discriminator() const override { return true; }
    std::vector<float> code_discriminator_logits(const models::Tensor& x) override {
        return std::vector<float>(x.n, code_logit);
    }
    bool has_gaussian_latent() const override { return !mu.empty(); }
    void encode_gaussian(const models::Tensor& x, std::vector<std::vector<float>>& m,
                         std::vector<std::vector<float>>& s) override {
        m.assign(x.n, mu);
        s.assign(x.n, sigma);
    }
    void collect(std::vector<models::Param*>&, std::vector<models::NamedBuffer>&) override {}
};

double logit_of(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

TEST_CASE("pixel_heatmap") {
    Image x(1, 2), xhat(1, 2, 0.0f);
    x.data = {1.0f, 0.0f};
    Mask m(1, 2, 1);
    Heatmap h = pixel_heatmap(x, xhat, m, ErrorKind::squared);
    CHECK(h.values[0] == 1.0f);
    CHECK(h.values[1] == 0.0f);

    SECTION("perfect reconstruction gives all zeros") {
        Heatmap zero = pixel_heatmap(x, x, m, ErrorKind::squared);
        for (float v : zero.values) CHECK(v == 0.0f);
    }
    SECTION("a single corrupted pixel is the only nonzero entry") {
        Image a(4, 4, 0.5f), b(4, 4, 0.5f);
        b.at(2, 3) = 0.9f;
        Heatmap hm = pixel_heatmap(a, b, full_mask(4, 4), ErrorKind::absolute);
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) {
                if (r == 2 && c == 3)
                    CHECK(hm.at(r, c) == Catch::Approx(0.4f));
                else
                    CHECK(hm.at(r, c) == 0.0f);
            }
    }
    SECTION("values outside the mask are exactly zero") {
        Mask half(1, 2, 0);
        half.bits = {0, 1};
        Heatmap hm = pixel_heatmap(x, xhat, half, ErrorKind::squared);
        CHECK(hm.values[0] == 0.0f);
    }
    SECTION("shape mismatch") {
        Image other(2, 2, 0.0f);
        CHECK_THROWS(pixel_heatmap(x, other, m, ErrorKind::squared));
    }
}

TEST_CASE("aggregate_mean") {
    Heatmap h;
    h.height = 1;
    h.width = 2;
    h.values = {1.0f, 0.0f};
    Mask both(1, 2, 1);
    CHECK(aggregate_mean(h, both) == Catch::Approx(0.5));

    Heatmap zero;
    zero.height = 1;
    zero.width = 2;
    zero.values = {0.0f, 0.0f};
    CHECK(aggregate_mean(zero, both) == 0.0);

    Mask first(1, 2, 0);
    first.bits = {1, 0};
    CHECK(aggregate_mean(h, first) == Catch::Approx(1.0));

    Mask none(1, 2, 0);
    CHECK_THROWS(aggregate_mean(h, none));
}

TEST_CASE("aggregate_topk") {
    Heatmap h;
    h.height = 1;
    h.width = 4;
    h.values = {4.0f, 3.0f, 2.0f, 1.0f};
    Mask m(1, 4, 1);
    CHECK(aggregate_topk(h, m, 2) == Catch::Approx(3.5));
    CHECK(aggregate_topk(h, m, 4) == Catch::Approx(aggregate_mean(h, m)));
    CHECK(aggregate_topk(h, m, 200) == Catch::Approx(aggregate_mean(h, m)));  // k > count
    CHECK_THROWS(aggregate_topk(h, m, 0));

    SECTION("matches the sort oracle and is non-increasing in k") {
        Rng rng(3);
        for (int trial = 0; trial < 20; ++trial) {
            Heatmap hm;
            hm.height = 1;
            hm.width = 30;
            hm.values.resize(30);
            for (float& v : hm.values) v = static_cast<float>(rand_uniform(rng));
            Mask mm(1, 30, 1);
            double prev = 1e300;
            for (size_t k = 1; k <= 30; ++k) {
                double got = aggregate_topk(hm, mm, k);
                CHECK(got == Catch::Approx(oracles::topk_sorted(hm.values, k)));
                CHECK(got <= prev + 1e-12);
                prev = got;
            }
        }
    }
}

TEST_CASE("score_image on controlled models") {
    Image img(2, 2, 0.5f);
    Mask mask = full_mask(2, 2);

    SECTION("perfect reconstruction scores zero MSE") {
        IdentityNet net;
        CHECK(score_image(net, img, mask, parse_metric("mse")) == 0.0);
        CHECK(score_image(net, img, mask, parse_metric("l1")) == 0.0);
    }
    SECTION("KLD at the standard normal scores zero") {
        FixedNet net;
        net.mu = {0.0f, 0.0f};
        net.sigma = {1.0f, 1.0f};
        CHECK(score_image(net, img, mask, parse_metric("kld")) == 0.0);
    }
    SECTION("discriminator probabilities are inverted and averaged") {
        FixedNet net;
        net.disc_logit = static_cast<float>(logit_of(0.3));   // 1 - P(real) = 0.7
        net.code_logit = 0.0f;                                // 1 - 0.5 = 0.5
        CHECK(score_image(net, img, mask, parse_metric("disc")) == Catch::Approx(0.7).margin(1e-6));
        CHECK(score_image(net, img, mask, parse_metric("code_disc")) == Catch::Approx(0.5).margin(1e-6));
        CHECK(score_image(net, img, mask, parse_metric("c+d")) == Catch::Approx(0.6).margin(1e-6));
    }
    SECTION("incompatible metric and model is an error") {
        IdentityNet net;
        CHECK_THROWS(score_image(net, img, mask, parse_metric("kld")));
        CHECK_THROWS(score_image(net, img, mask, parse_metric("disc")));
    }
    SECTION("reconstruction scores ignore pixels outside the mask") {
        FixedNet net;
        net.recon = models::Tensor(1, 1, 2, 2, 0.5f);
        net.recon.at(0, 0, 0, 0) = 0.9f;  // error only at a masked-out pixel
        Mask partial(2, 2, 1);
        partial.at(0, 0) = 0;
        CHECK(score_image(net, img, partial, parse_metric("mse")) == 0.0);
    }
    SECTION("monotonicity: a larger heatmap never scores lower") {
        FixedNet net;
        net.recon = models::Tensor(1, 1, 2, 2, 0.4f);
        double base = score_image(net, img, mask, parse_metric("mse"));
        net.recon.at(0, 0, 1, 1) = 0.1f;  // increase the error at one pixel
        double bigger = score_image(net, img, mask, parse_metric("mse"));
        CHECK(bigger >= base);
    }
}

TEST_CASE("score_dataset cardinality") {
    IdentityNet net;
    std::vector<ScoreRecord> records;
    std::vector<ScoreMetric> metrics = {parse_metric("mse"), parse_metric("l1")};
    CHECK(score_dataset(net, records, metrics).rows.empty());

    for (int i = 0; i < 3; ++i) {
        ScoreRecord r;
        r.image_id = "img" + std::to_string(i);
        r.patient_id = "p" + std::to_string(i);
        r.label = i == 2 ? core::Label::positive : core::Label::negative;
        r.pixels = Image(2, 2, 0.5f);
        r.mask = full_mask(2, 2);
        records.push_back(std::move(r));
    }
    ScoreTable table = score_dataset(net, records, metrics);
    REQUIRE(table.rows.size() == 6);
    CHECK(table.rows[0].metric == "mse");
    CHECK(table.rows[1].metric == "l1");
    CHECK(table.rows[4].label == 1);
}

TEST_CASE("score table CSV round trip") {
    ScoreTable table;
    table.rows = {{"img0", "p0", 0, "mse", 0.125}, {"img1", "p1", 1, "mse_top200", 0.875}};
    std::ostringstream out;
    write_score_table(table, out);
    std::istringstream in(out.str());
    ScoreTable back = read_score_table(in);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[0].image_id == "img0");
    CHECK(back.rows[0].score == Catch::Approx(0.125));
    CHECK(back.rows[1].label == 1);
    CHECK(back.rows[1].metric == "mse_top200");
}

TEST_CASE("metric parsing and top-k scaling") {
    CHECK(parse_metric("mse").kind == MetricKind::mse);
    CHECK(parse_metric("mse_top200").k == 200);
    CHECK(parse_metric("l1_top50").k == 50);
    CHECK(parse_metric("c+d").kind == MetricKind::c_plus_d);
    CHECK_THROWS(parse_metric("nope"));

    CHECK(scaled_topk(200, 512) == 200);
    CHECK(scaled_topk(200, 64) == 3);    // round(200 / 64)
    CHECK(scaled_topk(200, 128) == 13);  // round(200 / 16)
}
