// Minimal in-memory anomaly-detection loop: train a small convolutional
// autoencoder on smooth blobs, then score blobs with an injected bright
// square. Prints the ROC-AUC of the mean-squared-error score.

#include <cmath>
#include <iostream>
#include <vector>

#include "xray/eval.hpp"
#include "xray/models.hpp"
#include "xray/scoring.hpp"
#include "xray/train.hpp"

using namespace xray;

namespace {

Image blob(Rng& rng, int n, bool anomalous) {
    Image img(n, n, 0.03f);
    double cy = n / 2.0 + rand_uniform(rng, -4, 4);
    double cx = n / 2.0 + rand_uniform(rng, -4, 4);
    double radius = rand_uniform(rng, 6, 9);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
            img.at(r, c) += static_cast<float>(0.7 * std::exp(-d2 / (radius * radius)));
        }
    if (anomalous) {
        int ar = static_cast<int>(cy) - 2, ac = static_cast<int>(cx) - 2;
        for (int r = ar; r < ar + 4; ++r)
            for (int c = ac; c < ac + 4; ++c) img.at(r, c) = 1.0f;
    }
    for (float& v : img.data) v = clamp01(v);
    return img;
}

}  // namespace

int main() {
    const int size = 32;
    Rng rng(7);

    std::vector<models::TrainExample> train;
    for (int i = 0; i < 64; ++i) {
        models::TrainExample ex;
        ex.id = "train" + std::to_string(i);
        ex.pixels = blob(rng, size, false);
        ex.mask = full_mask(size, size);
        train.push_back(std::move(ex));
    }

    models::TrainConfig config = models::desk_config(models::ModelKind::cae);
    config.resolution = size;
    config.epochs = 12;
    config.batch_size = 16;
    std::cout << "training a desk-scale CAE on " << train.size() << " blobs...\n";
    models::TrainedModel model =
        models::train_model(models::ModelKind::cae, train, config, preprocess::no_augmentation());
    std::cout << "recon loss: first epoch " << model.history.per_epoch.front()[0] << ", last epoch "
              << model.history.per_epoch.back()[0] << "\n";

    std::vector<double> scores;
    std::vector<int> labels;
    scoring::ScoreMetric mse = scoring::parse_metric("mse");
    for (int i = 0; i < 60; ++i) {
        bool anomalous = i % 2 == 1;
        Image img = blob(rng, size, anomalous);
        scores.push_back(scoring::score_image(*model.net, img, full_mask(size, size), mse));
        labels.push_back(anomalous ? 1 : 0);
    }
    std::cout << "ROC-AUC (mse score): " << eval::roc_auc(scores, labels) << "\n";
    return 0;
}
