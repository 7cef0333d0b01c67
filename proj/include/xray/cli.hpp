#pragma once

// Command implementations behind the CLI subcommands {preprocess, split,
// train, score, evaluate, heatmap}. Commands throw std::invalid_argument for
// validation problems and std::runtime_error for runtime failures; the tool
// entry point maps those to exit codes 1 and 2.

#include <json.hpp>

#include <atomic>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "xray/config.hpp"
#include "xray/core.hpp"
#include "xray/eval.hpp"
#include "xray/png_io.hpp"
#include "xray/preprocess.hpp"
#include "xray/scoring.hpp"
#include "xray/train.hpp"

namespace xray::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Layout helpers
// ---------------------------------------------------------------------------

inline std::string split_path(const RunConfig& c) { return c.output_root + "/split.txt"; }

inline std::string offline_dir(const RunConfig& c, const std::string& variant) {
    return c.output_root + "/offline/" + variant;
}

inline std::string manifest_path(const RunConfig& c, const std::string& variant) {
    return offline_dir(c, variant) + "/manifest.json";
}

inline std::string run_tag(const std::string& model, const std::string& variant, bool equalize,
                           uint32_t seed) {
    return model + "_" + variant + (equalize ? "_he" : "_nohe") + "_s" + std::to_string(seed);
}

inline std::string checkpoint_path(const RunConfig& c, uint32_t seed) {
    return c.output_root + "/models/" + run_tag(c.model, c.variant, c.equalize, seed) + ".ckpt";
}

inline std::string loss_path(const RunConfig& c, uint32_t seed) {
    return c.output_root + "/models/" + run_tag(c.model, c.variant, c.equalize, seed) + "_loss.csv";
}

inline std::string scores_path(const RunConfig& c, uint32_t seed, core::SplitPart part) {
    return c.output_root + "/scores/" + run_tag(c.model, c.variant, c.equalize, seed) + "_" +
           core::split_part_name(part) + ".csv";
}

inline void ensure_dir(const std::string& path) { fs::create_directories(path); }

inline std::string sanitize_id(std::string s) {
    for (char& ch : s)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_')) ch = '_';
    return s;
}

// ---------------------------------------------------------------------------
// Offline manifest
// ---------------------------------------------------------------------------

struct OfflineRecord {
    std::string id;
    std::string patient_id;
    std::string study_id;
    core::Label label = core::Label::negative;
    std::string source;  // relative to data root
    std::vector<std::string> steps;
};

struct OfflineManifest {
    std::string variant;
    std::vector<OfflineRecord> records;
};

inline void write_manifest(const OfflineManifest& m, const std::string& path) {
    nlohmann::ordered_json j;
    j["variant"] = m.variant;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& r : m.records) {
        arr.push_back({{"id", r.id},
                       {"patient", r.patient_id},
                       {"study", r.study_id},
                       {"label", core::label_name(r.label)},
                       {"source", r.source},
                       {"steps", r.steps}});
    }
    j["records"] = arr;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write manifest: " + path);
    f << j.dump(2) << "\n";
}

inline OfflineManifest read_manifest(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read manifest (run preprocess first): " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    OfflineManifest m;
    m.variant = j.at("variant");
    for (const auto& e : j.at("records")) {
        OfflineRecord r;
        r.id = e.at("id");
        r.patient_id = e.at("patient");
        r.study_id = e.at("study");
        r.label = core::parse_label(e.at("label"));
        r.source = e.at("source");
        for (const auto& s : e.at("steps")) r.steps.push_back(s);
        m.records.push_back(std::move(r));
    }
    return m;
}

// ---------------------------------------------------------------------------
// cmd_split
// ---------------------------------------------------------------------------

inline int cmd_split(RunConfig config) {
    resolve_and_validate(config, true);
    core::DatasetIndex index = core::ingest_dataset(config.data_root);
    core::SplitAssignment split = core::patient_split(index, config.seeds.front());
    core::validate_split(split, index);
    ensure_dir(config.output_root);
    core::write_split_file(split, split_path(config));

    size_t images[3] = {0, 0, 0};
    for (const auto& r : index.records)
        images[static_cast<int>(split.part_of(r.patient_id))]++;
    std::cout << "split seed " << split.seed << ": " << images[0] << " train / " << images[1]
              << " validation / " << images[2] << " test images (" << index.patients.size()
              << " patients)\n";
    return 0;
}

// ---------------------------------------------------------------------------
// cmd_preprocess
// ---------------------------------------------------------------------------

namespace detail {

struct OfflineOutput {
    OfflineRecord record;
    Image pixels;
    Mask mask;
};

// Offline stages for one source image under the chosen variant. Returns one
// output per detected hand (crop/full), or a single record (raw).
inline std::vector<OfflineOutput> process_one(const core::DatasetIndex& index,
                                              const core::ImageRecord& rec, const std::string& variant,
                                              const preprocess::HandDetector& detector) {
    Image gray = io::load_record_pixels(index, rec);
    std::string base_id = sanitize_id(rec.patient_id + "_" + rec.study_id + "_" +
                                      fs::path(rec.source_path).stem().string());

    std::vector<OfflineOutput> outs;
    if (variant == "raw") {
        OfflineOutput o;
        o.record.id = base_id;
        o.record.steps = {"grayscale"};
        o.pixels = std::move(gray);
        o.mask = full_mask(o.pixels.height, o.pixels.width);
        outs.push_back(std::move(o));
    } else {
        std::vector<std::string> steps = {"grayscale"};
        preprocess::CropResult crop = preprocess::crop_carrier(gray);
        if (!crop.warning.empty()) {
            steps.push_back("crop_carrier:skipped(" + crop.warning + ")");
        } else if (crop.applied) {
            std::ostringstream ss;
            ss << "crop_carrier:rect(" << crop.rect.center.x << "," << crop.rect.center.y << ","
               << crop.rect.width << "x" << crop.rect.height << "," << crop.rect.angle_deg << "deg)";
            steps.push_back(ss.str());
        } else {
            steps.push_back("crop_carrier:full_frame");
        }

        auto boxes = preprocess::detect_hands(crop.image, detector);
        for (size_t b = 0; b < boxes.size(); ++b) {
            OfflineOutput o;
            o.record.id = boxes.size() > 1 ? base_id + "_h" + std::to_string(b) : base_id;
            o.record.steps = steps;
            {
                std::ostringstream ss;
                ss << "hand_box(" << boxes[b].x << "," << boxes[b].y << "," << boxes[b].width << "x"
                   << boxes[b].height << ",conf=" << boxes[b].confidence << ")";
                o.record.steps.push_back(ss.str());
            }
            o.pixels = preprocess::crop_box(crop.image, boxes[b]);
            if (variant == "full") {
                preprocess::SegmentResult seg = preprocess::segment_foreground(o.pixels);
                o.mask = std::move(seg.mask);
                o.record.steps.push_back(seg.warning.empty() ? "segment_foreground"
                                                             : "segment_foreground:" + seg.warning);
            } else {
                o.mask = full_mask(o.pixels.height, o.pixels.width);
            }
            outs.push_back(std::move(o));
        }
    }
    for (auto& o : outs) {
        o.record.patient_id = rec.patient_id;
        o.record.study_id = rec.study_id;
        o.record.label = rec.label;
        o.record.source = rec.source_path;
    }
    return outs;
}

}  // namespace detail

inline int cmd_preprocess(RunConfig config, bool force = false) {
    resolve_and_validate(config, true);
    core::DatasetIndex index = core::ingest_dataset(config.data_root);
    std::string dir = offline_dir(config, config.variant);
    ensure_dir(dir);

    preprocess::HeuristicHandDetector detector;
    const size_t n = index.records.size();
    std::vector<std::vector<OfflineRecord>> results(n);

    std::atomic<size_t> next{0};
    std::atomic<size_t> written{0}, skipped{0};
    auto worker = [&]() {
        for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            auto outputs = detail::process_one(index, index.records[i], config.variant, detector);
            for (auto& o : outputs) {
                std::string img_path = dir + "/" + o.record.id + ".png";
                std::string mask_path = dir + "/" + o.record.id + ".mask.png";
                if (force || !fs::exists(img_path) || !fs::exists(mask_path)) {
                    io::write_image(img_path, o.pixels);
                    io::write_mask(mask_path, o.mask);
                    written.fetch_add(1);
                } else {
                    skipped.fetch_add(1);
                }
                results[i].push_back(std::move(o.record));
            }
        }
    };
    if (config.workers > 1) {
        std::vector<std::thread> threads;
        for (int t = 0; t < config.workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    } else {
        worker();
    }

    // manifest order follows the (sorted) index regardless of worker layout
    OfflineManifest manifest;
    manifest.variant = config.variant;
    for (auto& group : results)
        for (auto& rec : group) manifest.records.push_back(std::move(rec));
    write_manifest(manifest, manifest_path(config, config.variant));
    std::cout << "preprocess " << config.variant << ": " << written.load() << " written, "
              << skipped.load() << " skipped, " << manifest.records.size() << " records\n";
    return 0;
}

// ---------------------------------------------------------------------------
// cmd_train
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<models::TrainExample> load_train_examples(const RunConfig& config,
                                                             const OfflineManifest& manifest,
                                                             const core::SplitAssignment& split) {
    std::vector<models::TrainExample> examples;
    std::string dir = offline_dir(config, config.variant);
    for (const auto& r : manifest.records) {
        if (split.part_of(r.patient_id) != core::SplitPart::train) continue;
        models::TrainExample ex;
        ex.id = r.id;
        ex.label = r.label;
        ex.pixels = io::read_image(dir + "/" + r.id + ".png");
        ex.mask = io::read_mask(dir + "/" + r.id + ".mask.png");
        examples.push_back(std::move(ex));
    }
    if (examples.empty()) throw std::runtime_error("no training images in split part 'train'");
    return examples;
}

}  // namespace detail

inline int cmd_train(RunConfig config, std::ostream* log = nullptr) {
    resolve_and_validate(config, false);
    if (!fs::exists(split_path(config)))
        throw std::runtime_error("split manifest missing, run `xray split` first: " + split_path(config));
    core::SplitAssignment split = core::read_split_file(split_path(config));
    OfflineManifest manifest = read_manifest(manifest_path(config, config.variant));
    auto examples = detail::load_train_examples(config, manifest, split);
    ensure_dir(config.output_root + "/models");

    models::ModelKind kind = config.kind();
    auto policy = preprocess::policy_by_name(config.policy);
    for (uint32_t seed : config.seeds) {
        models::TrainConfig tc = config.train;
        tc.seed = seed;
        models::TrainedModel model = models::train_model(kind, examples, tc, policy, config.equalize, log);
        models::save_checkpoint(model, checkpoint_path(config, seed));
        models::write_loss_history_file(model.history, loss_path(config, seed));
        std::cout << "trained " << run_tag(config.model, config.variant, config.equalize, seed) << " ("
                  << examples.size() << " images, " << tc.epochs << " epochs)\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// cmd_score
// ---------------------------------------------------------------------------

namespace detail {

// Deterministic evaluation view: equalize? + resize + pad + normalize, no
// augmentation.
inline scoring::ScoreRecord eval_view(const RunConfig& config, const OfflineRecord& rec,
                                      const Image& pixels, const Mask& mask, int resolution) {
    Rng rng(0);  // no stochastic stages in the evaluation policy
    auto pre = preprocess::online_pipeline(pixels, mask, preprocess::no_augmentation(), resolution,
                                           resolution, config.equalize, rng);
    scoring::ScoreRecord out;
    out.image_id = rec.id;
    out.patient_id = rec.patient_id;
    out.label = rec.label;
    out.pixels = std::move(pre.pixels);
    out.mask = std::move(pre.mask);
    return out;
}

inline std::vector<scoring::ScoreMetric> resolve_metrics(const RunConfig& config, int resolution) {
    std::vector<scoring::ScoreMetric> metrics;
    for (const auto& name : config.metrics) {
        scoring::ScoreMetric m = scoring::parse_metric(name);
        m.label = name;
        if (m.kind == scoring::MetricKind::mse_topk || m.kind == scoring::MetricKind::l1_topk)
            m.k = scoring::scaled_topk(m.k, resolution);
        metrics.push_back(m);
    }
    return metrics;
}

inline scoring::ScoreTable score_part(const RunConfig& config, models::TrainedModel& model,
                                      const OfflineManifest& manifest,
                                      const core::SplitAssignment& split, core::SplitPart part) {
    std::string dir = offline_dir(config, config.variant);
    std::vector<scoring::ScoreRecord> records;
    for (const auto& r : manifest.records) {
        if (split.part_of(r.patient_id) != part) continue;
        Image img = io::read_image(dir + "/" + r.id + ".png");
        Mask mask = io::read_mask(dir + "/" + r.id + ".mask.png");
        records.push_back(eval_view(config, r, img, mask, model.config.resolution));
    }
    auto metrics = resolve_metrics(config, model.config.resolution);
    return scoring::score_dataset(*model.net, records, metrics);
}

}  // namespace detail

inline int cmd_score(RunConfig config, const std::string& part_name = "test") {
    resolve_and_validate(config, false);
    core::SplitPart part = core::parse_split_part(part_name);
    core::SplitAssignment split = core::read_split_file(split_path(config));
    OfflineManifest manifest = read_manifest(manifest_path(config, config.variant));
    ensure_dir(config.output_root + "/scores");

    for (uint32_t seed : config.seeds) {
        models::TrainedModel model = models::load_checkpoint(checkpoint_path(config, seed));
        scoring::ScoreTable table = detail::score_part(config, model, manifest, split, part);
        scoring::write_score_table_file(table, scores_path(config, seed, part));
        std::cout << "scored " << run_tag(config.model, config.variant, config.equalize, seed) << " "
                  << part_name << ": " << table.rows.size() << " rows\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// cmd_evaluate
// ---------------------------------------------------------------------------

namespace detail {

// AUC rows for one (model, variant, he) cell, aggregated over seeds.
inline std::vector<eval::EvalRow> evaluate_cell(RunConfig config, const core::SplitAssignment& split) {
    OfflineManifest manifest = read_manifest(manifest_path(config, config.variant));
    std::map<std::string, eval::EvalRow> rows;  // metric -> row
    for (uint32_t seed : config.seeds) {
        std::string spath = scores_path(config, seed, core::SplitPart::test);
        scoring::ScoreTable table;
        if (fs::exists(spath)) {
            table = scoring::read_score_table_file(spath);
        } else {
            models::TrainedModel model = models::load_checkpoint(checkpoint_path(config, seed));
            table = score_part(config, model, manifest, split, core::SplitPart::test);
            ensure_dir(config.output_root + "/scores");
            scoring::write_score_table_file(table, spath);
        }
        auto aucs = eval::evaluate_run(table, split, core::SplitPart::test, config.flip_scores);
        for (const auto& [metric, auc] : aucs) {
            eval::EvalRow& row = rows[metric];
            row.model = config.model;
            row.metric = metric;
            row.variant = config.variant;
            row.equalized = config.equalize;
            row.aucs.push_back(auc);
        }
    }
    std::vector<eval::EvalRow> out;
    for (auto& [metric, row] : rows) {
        if (row.aucs.size() >= 2)
            out.push_back(eval::aggregate_seeds(row));
        else {
            row.mean = row.aucs.at(0);
            row.stddev = 0.0;
            out.push_back(row);
        }
    }
    return out;
}

}  // namespace detail

inline int cmd_evaluate(RunConfig config) {
    resolve_and_validate(config, false);
    core::SplitAssignment split = core::read_split_file(split_path(config));

    std::vector<eval::EvalRow> rows;
    if (config.grid) {
        for (const char* variant : {"raw", "crop", "full"}) {
            for (bool he : {false, true}) {
                RunConfig cell = config;
                cell.variant = variant;
                cell.equalize = he;
                bool complete = fs::exists(manifest_path(cell, variant));
                for (uint32_t seed : cell.seeds)
                    complete = complete && (fs::exists(scores_path(cell, seed, core::SplitPart::test)) ||
                                            fs::exists(checkpoint_path(cell, seed)));
                if (!complete) {
                    std::cerr << "grid cell " << variant << (he ? "+he" : "-he")
                              << " skipped: missing artifacts\n";
                    continue;
                }
                auto cell_rows = detail::evaluate_cell(cell, split);
                rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
            }
        }
        if (rows.empty()) throw std::runtime_error("no grid cell has trained artifacts");
    } else {
        rows = detail::evaluate_cell(config, split);
    }

    ensure_dir(config.output_root);
    {
        std::ofstream f(config.output_root + "/report.csv", std::ios::binary);
        eval::write_report_csv(rows, f);
    }
    {
        std::ofstream f(config.output_root + "/report.txt", std::ios::binary);
        eval::write_report_table(rows, f);
    }
    eval::write_report_table(rows, std::cout);
    return 0;
}

// ---------------------------------------------------------------------------
// cmd_heatmap
// ---------------------------------------------------------------------------

inline int cmd_heatmap(RunConfig config, const std::string& image_id) {
    resolve_and_validate(config, false);
    OfflineManifest manifest = read_manifest(manifest_path(config, config.variant));
    const OfflineRecord* rec = nullptr;
    for (const auto& r : manifest.records)
        if (r.id == image_id) {
            rec = &r;
            break;
        }
    if (!rec) throw std::invalid_argument("image id not found in manifest: " + image_id);

    models::TrainedModel model = models::load_checkpoint(checkpoint_path(config, config.seeds.front()));
    if (!model.net->can_reconstruct())
        throw std::invalid_argument("model " + config.model + " has no reconstruction heatmap");

    std::string dir = offline_dir(config, config.variant);
    Image img = io::read_image(dir + "/" + rec->id + ".png");
    Mask mask = io::read_mask(dir + "/" + rec->id + ".mask.png");
    scoring::ScoreRecord view = detail::eval_view(config, *rec, img, mask, model.config.resolution);

    std::vector<Image> one{view.pixels};
    models::Tensor x = models::image_batch(one);
    models::Tensor y = model.net->reconstruct(x);
    Image xhat = models::tensor_to_image(y, 0);
    scoring::Heatmap heat = scoring::pixel_heatmap(view.pixels, xhat, view.mask, scoring::ErrorKind::squared);

    ensure_dir(config.output_root + "/heatmaps");
    std::string base = config.output_root + "/heatmaps/" + image_id + "_" +
                       run_tag(config.model, config.variant, config.equalize, config.seeds.front());
    eval::render_overlay(view.pixels, heat, base + "_overlay.png");
    eval::write_heatmap_png(heat, base + ".png");
    eval::write_heatmap_raw(heat, base + ".raw");
    std::cout << "heatmap written: " << base << "_overlay.png\n";
    return 0;
}

}  // namespace xray::cli
