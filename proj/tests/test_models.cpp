#include <catch_amalgamated.hpp>

#include <filesystem>

#include "xray/models.hpp"
#include "xray/nets.hpp"
#include "xray/scoring.hpp"
#include "xray/train.hpp"

using namespace xray;
using namespace xray::models;

namespace {

struct TableRow {
    int kernel;               // 0 = non-conv row (reshape/fc/reparam/mbd)
    const char* shape;
    bool attention = false;
};

void check_table(const Subnet& net, const std::vector<TableRow>& expected) {
    auto shapes = propagate_subnet(net);  // throws on any declared/derived mismatch
    REQUIRE(net.rows.size() == expected.size());
    for (size_t i = 0; i < expected.size(); ++i) {
        INFO(net.name << " row " << i);
        if (expected[i].kernel > 0) CHECK(net.rows[i].kernel == expected[i].kernel);
        CHECK(shapes[i].str() == expected[i].shape);
        CHECK(net.rows[i].attention == expected[i].attention);
    }
}

std::vector<TrainExample> blob_examples(int count, int size, bool with_positive = false) {
    std::vector<TrainExample> out;
    Rng rng(4711);
    for (int i = 0; i < count; ++i) {
        TrainExample ex;
        ex.id = "fx" + std::to_string(i);
        ex.label = (with_positive && i == 0) ? core::Label::positive : core::Label::negative;
        ex.pixels = Image(size, size, 0.0f);
        double cy = size / 2.0 + rand_uniform(rng, -3, 3);
        double cx = size / 2.0 + rand_uniform(rng, -3, 3);
        for (int r = 0; r < size; ++r)
            for (int c = 0; c < size; ++c) {
                double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
                ex.pixels.at(r, c) = static_cast<float>(0.8 * std::exp(-d2 / (2.0 * size)));
            }
        ex.mask = full_mask(size, size);
        out.push_back(std::move(ex));
    }
    return out;
}

std::vector<TrainExample> constant_examples(int count, int size) {
    std::vector<TrainExample> out;
    for (int i = 0; i < count; ++i) {
        TrainExample ex;
        ex.id = "const" + std::to_string(i);
        ex.pixels = Image(size, size, 0.6f);
        ex.mask = full_mask(size, size);
        out.push_back(std::move(ex));
    }
    return out;
}

}  // namespace

TEST_CASE("CAE architecture reproduces the 512x512 layer table") {
    ArchitectureSpec a = build_architecture(ModelKind::cae, 512);
    CHECK(a.z_dim == 16 * 16 * 512);
    check_table(a.subnet("encoder"), {
                                         {3, "(512, 512, 16)"},
                                         {4, "(256, 256, 32)"},
                                         {3, "(256, 256, 32)"},
                                         {4, "(128, 128, 64)"},
                                         {3, "(128, 128, 64)"},
                                         {4, "(64, 64, 128)"},
                                         {3, "(64, 64, 128)"},
                                         {4, "(32, 32, 256)"},
                                         {3, "(32, 32, 256)"},
                                         {4, "(16, 16, 512)"},
                                     });
    check_table(a.subnet("decoder"), {
                                         {4, "(32, 32, 256)"},
                                         {4, "(64, 64, 128)"},
                                         {4, "(128, 128, 64)"},
                                         {4, "(256, 256, 32)"},
                                         {4, "(512, 512, 16)"},
                                         {3, "(512, 512, 1)"},
                                     });
}

TEST_CASE("VAE architecture reproduces the 512x512 layer table") {
    ArchitectureSpec a = build_architecture(ModelKind::vae, 512);
    check_table(a.subnet("encoder"), {
                                         {4, "(255, 255, 8)"},
                                         {4, "(126, 126, 16)"},
                                         {4, "(62, 62, 32)"},
                                         {4, "(30, 30, 64)"},
                                         {4, "(14, 14, 128)"},
                                         {4, "(6, 6, 256)"},
                                         {4, "(2, 2, 512)"},
                                     });
    check_table(a.subnet("bottleneck"), {
                                            {0, "(2048,)"},
                                            {0, "(1024,)"},  // mu = FC(z)
                                            {0, "(1024,)"},  // sigma = FC(z)
                                            {0, "(1024,)"},  // z' = sigma*eps + mu
                                            {0, "(2048,)"},  // z'' = FC(z')
                                            {0, "(2, 2, 512)"},
                                        });
    check_table(a.subnet("decoder"), {
                                         {4, "(6, 6, 256)"},
                                         {4, "(14, 14, 128)"},
                                         {4, "(30, 30, 64)"},
                                         {4, "(62, 62, 32)"},
                                         {4, "(126, 126, 16)"},
                                         {4, "(254, 254, 8)"},
                                         {6, "(512, 512, 1)"},
                                     });
}

TEST_CASE("DCGAN architecture reproduces the 512x512 layer table") {
    ArchitectureSpec a = build_architecture(ModelKind::dcgan, 512);
    CHECK(a.z_dim == 2048);
    check_table(a.subnet("generator"), {
                                           {4, "(4, 4, 1024)"},
                                           {4, "(8, 8, 512)"},
                                           {4, "(16, 16, 256)"},
                                           {4, "(32, 32, 128)"},
                                           {4, "(64, 64, 64)"},
                                           {4, "(128, 128, 32)"},
                                           {4, "(256, 256, 16)"},
                                           {4, "(512, 512, 1)"},
                                       });
    check_table(a.subnet("discriminator"), {
                                               {4, "(256, 256, 4)"},
                                               {4, "(128, 128, 8)"},
                                               {4, "(64, 64, 16)"},
                                               {4, "(32, 32, 32)"},
                                               {4, "(16, 16, 64)"},
                                               {4, "(8, 8, 128)"},
                                               {4, "(4, 4, 256)"},
                                               {4, "(1, 1, 512)"},
                                               {0, "(1, 1, 528)"},  // minibatch discrimination
                                               {0, "(1,)"},         // FC
                                           });
    // minibatch discrimination widens 512 -> 528
    const auto& disc = a.subnet("discriminator").rows;
    CHECK(disc[disc.size() - 2].kind == LayerKind::minibatch_discrimination);
    CHECK(disc[disc.size() - 2].mbd_kernels == 16);
}

TEST_CASE("BiGAN architecture reproduces the 128x128 layer table") {
    ArchitectureSpec a = build_architecture(ModelKind::bigan, 128);
    CHECK(a.z_dim == 100);  // training details win over the table for runtime
    check_table(a.subnet("generator"), {
                                           {4, "(4, 4, 1024)"},
                                           {4, "(8, 8, 512)"},
                                           {4, "(16, 16, 256)"},
                                           {4, "(32, 32, 128)", true},
                                           {4, "(64, 64, 64)", true},
                                           {4, "(128, 128, 1)"},
                                       });
    check_table(a.subnet("encoder"), {
                                         {4, "(64, 64, 64)"},
                                         {4, "(32, 32, 128)"},
                                         {4, "(16, 16, 256)"},
                                         {4, "(8, 8, 512)", true},
                                         {4, "(4, 4, 1024)", true},
                                         {4, "(1, 1, 200)"},  // table alternative to z_dim = 100
                                     });
    check_table(a.subnet("discriminator_image"), {
                                                     {4, "(64, 64, 64)"},
                                                     {4, "(32, 32, 128)"},
                                                     {4, "(16, 16, 256)"},
                                                     {4, "(8, 8, 512)", true},
                                                     {4, "(4, 4, 1024)", true},
                                                     {4, "(1, 1, 1024)"},
                                                 });
    check_table(a.subnet("discriminator_code"), {
                                                    {1, "(1, 1, 512)"},
                                                    {1, "(1, 1, 512)"},
                                                });
    // combination stacks both branches: 1024 + 512 channels in
    CHECK(a.subnet("discriminator_joint").input.str() == "(1, 1, 1536)");
    check_table(a.subnet("discriminator_joint"), {
                                                     {1, "(1, 1, 1024)"},
                                                     {1, "(1, 1, 1024)"},
                                                     {1, "(1, 1, 1)"},
                                                 });
}

TEST_CASE("alpha-GAN architecture reproduces the 128x128 layer table") {
    ArchitectureSpec a = build_architecture(ModelKind::alphagan, 128);
    CHECK(a.z_dim == 100);
    check_table(a.subnet("generator"), {
                                           {4, "(4, 4, 1024)"},
                                           {4, "(8, 8, 512)"},
                                           {4, "(16, 16, 256)"},
                                           {4, "(32, 32, 128)", true},
                                           {4, "(64, 64, 64)", true},
                                           {4, "(128, 128, 1)"},
                                       });
    check_table(a.subnet("encoder"), {
                                         {4, "(64, 64, 64)"},
                                         {4, "(32, 32, 128)"},
                                         {4, "(16, 16, 256)"},
                                         {4, "(8, 8, 512)", true},
                                         {4, "(4, 4, 1024)", true},
                                         {4, "(1, 1, 200)"},  // mean and variance head
                                     });
    CHECK(a.subnet("encoder").rows.back().gaussian_head);
    check_table(a.subnet("discriminator"), {
                                               {4, "(64, 64, 64)"},
                                               {4, "(32, 32, 128)"},
                                               {4, "(16, 16, 256)"},
                                               {4, "(8, 8, 512)", true},
                                               {4, "(4, 4, 1024)", true},
                                               {0, "(4, 4, 1028)"},  // minibatch discrimination
                                               {4, "(1, 1, 1)"},
                                           });
    const auto& disc = a.subnet("discriminator").rows;
    CHECK(disc[disc.size() - 2].mbd_kernels == 4);
    check_table(a.subnet("code_discriminator"), {
                                                    {1, "(1, 1, 100)"},
                                                    {1, "(1, 1, 50)"},
                                                    {1, "(1, 1, 25)"},
                                                    {1, "(1, 1, 1)"},
                                                });
}

TEST_CASE("desk-scale architectures propagate cleanly and instantiate") {
    for (auto kind : {ModelKind::cae, ModelKind::vae, ModelKind::dcgan}) {
        ArchitectureSpec a = build_architecture(kind, 64);
        CHECK_NOTHROW(validate_architecture(a));
        CHECK_NOTHROW(make_net(a, 42));
    }
    for (auto kind : {ModelKind::bigan, ModelKind::alphagan}) {
        ArchitectureSpec a = build_architecture(kind, 32);
        CHECK_NOTHROW(validate_architecture(a));
        CHECK_NOTHROW(make_net(a, 42));
    }
}

TEST_CASE("model kind parsing") {
    CHECK(parse_model_kind("cae") == ModelKind::cae);
    CHECK(parse_model_kind("bae") == ModelKind::cae);
    CHECK(parse_model_kind("alphagan") == ModelKind::alphagan);
    CHECK_THROWS(parse_model_kind("resnet"));
}

TEST_CASE("reference configurations carry the documented training details") {
    TrainConfig cae = reference_config(ModelKind::cae);
    CHECK(cae.batch_size == 32);
    CHECK(cae.resolution == 512);
    CHECK(cae.epochs == 1000);
    CHECK(cae.lr == 1e-4);
    CHECK(cae.batch_norm);
    CHECK(reference_config(ModelKind::cae, true).epochs == 500);  // BAE variant

    TrainConfig dcgan = reference_config(ModelKind::dcgan);
    CHECK(dcgan.batch_size == 80);
    CHECK_FALSE(dcgan.batch_norm);
    CHECK(dcgan.spectral_norm);
    CHECK(dcgan.soft_label_delta == 0.01);
    CHECK(dcgan.z_dim == 2048);
    CHECK(dcgan.lr_generator == 1e-3);
    CHECK(dcgan.lr_discriminator == 1e-5);
    CHECK(dcgan.minibatch_disc);

    TrainConfig bigan = reference_config(ModelKind::bigan);
    CHECK(bigan.batch_size == 16);
    CHECK(bigan.resolution == 128);
    CHECK(bigan.hinge_loss);
    CHECK(bigan.z_dim == 100);
    CHECK(bigan.lr_discriminator == 5e-6);

    CHECK(reference_seeds() == std::vector<uint32_t>{42, 4242, 424242, 42424242});
}

TEST_CASE("config validation enforces flag/model consistency") {
    TrainConfig c = desk_config(ModelKind::cae);
    c.hinge_loss = true;
    CHECK_THROWS(validate_config(ModelKind::cae, c));

    TrainConfig v = desk_config(ModelKind::vae);
    v.minibatch_disc = true;
    CHECK_THROWS(validate_config(ModelKind::vae, v));

    TrainConfig b = desk_config(ModelKind::bigan);
    b.soft_label_delta = 0.01;
    CHECK_THROWS(validate_config(ModelKind::bigan, b));

    TrainConfig d = desk_config(ModelKind::dcgan);
    d.batch_size = 0;
    CHECK_THROWS(validate_config(ModelKind::dcgan, d));
}

TEST_CASE("CAE training reduces the loss on constant fixtures") {
    auto examples = constant_examples(50, 16);
    TrainConfig c = desk_config(ModelKind::cae);
    c.resolution = 16;
    c.epochs = 5;
    c.batch_size = 10;
    TrainedModel model = train_model(ModelKind::cae, examples, c, preprocess::no_augmentation());
    REQUIRE(model.history.per_epoch.size() == 5);
    CHECK(model.history.per_epoch.back()[0] < model.history.per_epoch.front()[0]);
}

TEST_CASE("training rejects positive-study records") {
    auto examples = blob_examples(8, 16, true);
    TrainConfig c = desk_config(ModelKind::cae);
    c.resolution = 16;
    c.epochs = 1;
    c.batch_size = 4;
    CHECK_THROWS_WITH(train_model(ModelKind::cae, examples, c, preprocess::no_augmentation()),
                      Catch::Matchers::ContainsSubstring("leakage"));
}

TEST_CASE("VAE training runs and tracks both loss components") {
    auto examples = blob_examples(16, 64);
    TrainConfig c = desk_config(ModelKind::vae);
    c.epochs = 2;
    c.batch_size = 8;
    TrainedModel model = train_model(ModelKind::vae, examples, c, preprocess::no_augmentation());
    REQUIRE(model.history.components == std::vector<std::string>{"recon", "kld"});
    REQUIRE(model.history.per_epoch.size() == 2);
    for (const auto& row : model.history.per_epoch)
        for (double v : row) CHECK(std::isfinite(v));

    auto* net = static_cast<VaeNet*>(model.net.get());
    std::vector<std::vector<float>> mu, sigma;
    std::vector<Image> one{examples[0].pixels};
    net->encode_gaussian(image_batch(one), mu, sigma);
    REQUIRE(mu.size() == 1);
    REQUIRE(mu[0].size() == static_cast<size_t>(model.arch.z_dim));
    for (float s : sigma[0]) CHECK(s > 0.0f);
}

TEST_CASE("GAN training loops run and expose their scoring heads") {
    SECTION("dcgan") {
        auto examples = blob_examples(16, 32);
        TrainConfig c = desk_config(ModelKind::dcgan);
        c.resolution = 32;
        c.z_dim = 32;
        c.epochs = 2;
        c.batch_size = 8;
        TrainedModel model = train_model(ModelKind::dcgan, examples, c, preprocess::no_augmentation());
        REQUIRE(model.history.per_epoch.size() == 2);
        for (const auto& row : model.history.per_epoch)
            for (double v : row) CHECK(std::isfinite(v));
        std::vector<Image> one{examples[0].pixels};
        auto logits = model.net->discriminator_logits(image_batch(one));
        REQUIRE(logits.size() == 1);
        CHECK(std::isfinite(logits[0]));
        CHECK_FALSE(model.net->can_reconstruct());
    }
    SECTION("bigan") {
        auto examples = blob_examples(16, 32);
        TrainConfig c = desk_config(ModelKind::bigan);
        c.epochs = 2;
        c.batch_size = 8;
        TrainedModel model = train_model(ModelKind::bigan, examples, c, preprocess::no_augmentation());
        for (const auto& row : model.history.per_epoch)
            for (double v : row) CHECK(std::isfinite(v));
        std::vector<Image> one{examples[0].pixels};
        Tensor x = image_batch(one);
        CHECK(model.net->can_reconstruct());
        Tensor rec = model.net->reconstruct(x);
        CHECK(rec.h == 32);
        CHECK(std::isfinite(model.net->discriminator_logits(x)[0]));
    }
    SECTION("alphagan") {
        auto examples = blob_examples(16, 32);
        TrainConfig c = desk_config(ModelKind::alphagan);
        c.epochs = 2;
        c.batch_size = 8;
        TrainedModel model = train_model(ModelKind::alphagan, examples, c, preprocess::no_augmentation());
        REQUIRE(model.history.components ==
                std::vector<std::string>{"d_loss", "co_loss", "ge_adv", "recon"});
        for (const auto& row : model.history.per_epoch)
            for (double v : row) CHECK(std::isfinite(v));
        std::vector<Image> one{examples[0].pixels};
        Tensor x = image_batch(one);
        CHECK(model.net->can_reconstruct());
        CHECK(std::isfinite(model.net->discriminator_logits(x)[0]));
        CHECK(std::isfinite(model.net->code_discriminator_logits(x)[0]));
    }
}

TEST_CASE("a trained DCGAN discriminator ranks off-manifold inputs as more anomalous") {
    auto examples = blob_examples(48, 32);
    TrainConfig c = desk_config(ModelKind::dcgan);
    c.resolution = 32;
    c.z_dim = 32;
    c.epochs = 10;
    c.batch_size = 16;
    TrainedModel model = train_model(ModelKind::dcgan, examples, c, preprocess::no_augmentation());

    auto metric = scoring::parse_metric("disc");
    Rng rng(77);
    int noise_wins = 0;
    for (int i = 0; i < 20; ++i) {
        Image blob(32, 32, 0.0f);
        double cy = 16 + rand_uniform(rng, -3, 3), cx = 16 + rand_uniform(rng, -3, 3);
        for (int r = 0; r < 32; ++r)
            for (int col = 0; col < 32; ++col) {
                double d2 = (r - cy) * (r - cy) + (col - cx) * (col - cx);
                blob.at(r, col) = static_cast<float>(0.8 * std::exp(-d2 / 64.0));
            }
        Image noise(32, 32);
        for (float& v : noise.data) v = static_cast<float>(rand_uniform(rng));
        double real_score = scoring::score_image(*model.net, blob, full_mask(32, 32), metric);
        double noise_score = scoring::score_image(*model.net, noise, full_mask(32, 32), metric);
        noise_wins += noise_score > real_score;
    }
    CHECK(noise_wins >= 16);  // 20/20 observed; margin for retuning
}

TEST_CASE("checkpoints round-trip the trained model") {
    namespace fs = std::filesystem;
    auto examples = blob_examples(8, 16);
    TrainConfig c = desk_config(ModelKind::cae);
    c.resolution = 16;
    c.epochs = 2;
    c.batch_size = 4;
    TrainedModel model = train_model(ModelKind::cae, examples, c, preprocess::no_augmentation());

    std::string path = (fs::temp_directory_path() / "xray_ckpt_test.ckpt").string();
    save_checkpoint(model, path);
    TrainedModel loaded = load_checkpoint(path);
    CHECK(loaded.kind() == ModelKind::cae);
    CHECK(loaded.config.resolution == 16);
    CHECK(loaded.config.seed == c.seed);

    std::vector<Image> one{examples[0].pixels};
    Tensor x = image_batch(one);
    Tensor a = model.net->reconstruct(x);
    Tensor b = loaded.net->reconstruct(x);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a.v[i] == b.v[i]);

    CHECK_THROWS(load_checkpoint(path + ".missing"));
}

TEST_CASE("loss history CSV round trip") {
    namespace fs = std::filesystem;
    LossHistory h;
    h.components = {"recon", "kld"};
    h.per_epoch = {{0.5, 0.125}, {0.25, 0.0625}};
    std::string path = (fs::temp_directory_path() / "xray_loss_test.csv").string();
    write_loss_history_file(h, path);
    LossHistory back = read_loss_history_file(path);
    CHECK(back.components == h.components);
    REQUIRE(back.per_epoch.size() == 2);
    CHECK(back.per_epoch[1][0] == Catch::Approx(0.25));
    CHECK(back.per_epoch[1][1] == Catch::Approx(0.0625));
}
