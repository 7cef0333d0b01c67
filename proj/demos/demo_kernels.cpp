// Walks one synthetic radiograph through the offline kernels and prints what
// each stage found. Writes the intermediate images next to the binary.

#include <iostream>

#include "xray/imageops.hpp"
#include "xray/png_io.hpp"
#include "xray/preprocess.hpp"
#include "xray/rng.hpp"

using namespace xray;

int main() {
    // carrier + blob fixture
    Image img(96, 96, 0.02f);
    for (int r = 6; r < 90; ++r)
        for (int c = 10; c < 86; ++c) img.at(r, c) = 0.25f;
    for (int r = 0; r < 96; ++r)
        for (int c = 0; c < 96; ++c) {
            double d2 = (r - 48.0) * (r - 48.0) + (c - 50.0) * (c - 50.0);
            img.at(r, c) = clamp01(img.at(r, c) + static_cast<float>(0.6 * std::exp(-d2 / 220.0)));
        }
    io::write_image("demo_input.png", img);

    auto hist = imageops::compute_histogram(img);
    auto otsu = imageops::otsu_threshold(hist);
    std::cout << "otsu threshold: level " << otsu.level << (otsu.degenerate ? " (degenerate)" : "")
              << "\n";

    preprocess::CropResult crop = preprocess::crop_carrier(img);
    std::cout << "carrier crop: " << crop.image.width << "x" << crop.image.height
              << (crop.applied ? "" : " (skipped)") << "\n";
    io::write_image("demo_crop.png", crop.image);

    preprocess::HeuristicHandDetector detector;
    auto boxes = preprocess::detect_hands(crop.image, detector);
    std::cout << "hand boxes: " << boxes.size() << ", first at (" << boxes[0].x << "," << boxes[0].y
              << ") " << boxes[0].width << "x" << boxes[0].height << "\n";

    Image hand = preprocess::crop_box(crop.image, boxes[0]);
    auto seg = preprocess::segment_foreground(hand);
    std::cout << "foreground mask: " << seg.mask.count() << " of " << seg.mask.size() << " pixels\n";
    io::write_mask("demo_mask.png", seg.mask);

    Rng rng(42);
    auto rec = preprocess::online_pipeline(hand, seg.mask, preprocess::advanced_policy(), 64, 64, true, rng);
    std::cout << "online pipeline steps:";
    for (const auto& s : rec.provenance) std::cout << " [" << s << "]";
    std::cout << "\n";
    io::write_image("demo_online.png", rec.pixels);
    return 0;
}
