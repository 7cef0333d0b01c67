#pragma once

// Dataset ingestion, domain types and the patient-level split procedure.
//
// Directory layout mirrors MURA: <root>/<patient>/<study>_<label>/<image>.png
// with label in {negative, positive}. A study-level positive label marks the
// whole study; a patient is positive if any of its studies is.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xray/image.hpp"
#include "xray/rng.hpp"

namespace xray::core {

enum class Label { negative, positive };

inline const char* label_name(Label l) { return l == Label::positive ? "positive" : "negative"; }

inline Label parse_label(const std::string& s) {
    if (s == "negative") return Label::negative;
    if (s == "positive") return Label::positive;
    throw std::invalid_argument("unknown label: " + s);
}

struct ImageRecord {
    std::string patient_id;
    std::string study_id;
    Label label = Label::negative;
    std::string source_path;  // relative to the dataset root
    int width = 0;
    int height = 0;
    int channels = 1;          // 3 => flagged for grayscale conversion
    Image pixels;              // empty until loaded; intensities in [0,1]
};

struct DatasetIndex {
    std::string root;
    std::vector<ImageRecord> records;
    std::set<std::string> patients;
    std::set<std::string> positive_patients;  // patients with >= 1 positive study

    size_t study_count() const {
        std::set<std::pair<std::string, std::string>> studies;
        for (const auto& r : records) studies.insert({r.patient_id, r.study_id});
        return studies.size();
    }
    size_t positive_image_count() const {
        size_t n = 0;
        for (const auto& r : records) n += r.label == Label::positive;
        return n;
    }
};

enum class SplitPart { train, validation, test };

inline const char* split_part_name(SplitPart p) {
    switch (p) {
        case SplitPart::train: return "train";
        case SplitPart::validation: return "validation";
        case SplitPart::test: return "test";
    }
    return "?";
}

inline SplitPart parse_split_part(const std::string& s) {
    if (s == "train") return SplitPart::train;
    if (s == "validation" || s == "val") return SplitPart::validation;
    if (s == "test") return SplitPart::test;
    throw std::invalid_argument("unknown split part: " + s);
}

struct SplitAssignment {
    std::map<std::string, SplitPart> mapping;  // one entry per patient
    uint32_t seed = 0;

    SplitPart part_of(const std::string& patient) const {
        auto it = mapping.find(patient);
        if (it == mapping.end()) throw std::runtime_error("patient not in split: " + patient);
        return it->second;
    }
};

// ---------------------------------------------------------------------------
// PNG header probing (IHDR only; pixel decoding lives in png_io.hpp)
// ---------------------------------------------------------------------------

struct PngHeader {
    int width = 0;
    int height = 0;
    int channels = 0;
};

inline bool probe_png_header(const std::string& path, PngHeader& out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return false;
    unsigned char buf[33];
    f.read(reinterpret_cast<char*>(buf), 33);
    if (f.gcount() != 33) return false;
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
    if (!std::equal(sig, sig + 8, buf)) return false;
    // bytes 8..15: IHDR chunk length + type
    if (!(buf[12] == 'I' && buf[13] == 'H' && buf[14] == 'D' && buf[15] == 'R')) return false;
    auto u32 = [&](int o) {
        return (uint32_t(buf[o]) << 24) | (uint32_t(buf[o + 1]) << 16) | (uint32_t(buf[o + 2]) << 8) |
               uint32_t(buf[o + 3]);
    };
    out.width = static_cast<int>(u32(16));
    out.height = static_cast<int>(u32(20));
    int color_type = buf[25];
    switch (color_type) {
        case 0: out.channels = 1; break;  // gray
        case 2: out.channels = 3; break;  // rgb
        case 3: out.channels = 3; break;  // palette, expands to rgb
        case 4: out.channels = 1; break;  // gray+alpha (alpha stripped on load)
        case 6: out.channels = 3; break;  // rgba
        default: return false;
    }
    return out.width > 0 && out.height > 0;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

// Scans <root>/<patient>/<study>_<label>/*.png. Unreadable files produce a
// warning and are skipped; an empty result is an error.
inline DatasetIndex ingest_dataset(const std::string& root, std::ostream& warnings = std::cerr) {
    namespace fs = std::filesystem;
    if (!fs::exists(root)) throw std::runtime_error("dataset root does not exist: " + root);

    DatasetIndex index;
    index.root = root;

    std::vector<fs::path> patient_dirs;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) patient_dirs.push_back(e.path());
    std::sort(patient_dirs.begin(), patient_dirs.end());

    for (const auto& pdir : patient_dirs) {
        std::string patient = pdir.filename().string();
        std::vector<fs::path> study_dirs;
        for (const auto& e : fs::directory_iterator(pdir))
            if (e.is_directory()) study_dirs.push_back(e.path());
        std::sort(study_dirs.begin(), study_dirs.end());

        for (const auto& sdir : study_dirs) {
            std::string study_name = sdir.filename().string();
            auto underscore = study_name.rfind('_');
            if (underscore == std::string::npos) {
                warnings << "warning: skipping study without label suffix: " << sdir << "\n";
                continue;
            }
            std::string study = study_name.substr(0, underscore);
            Label label;
            try {
                label = parse_label(study_name.substr(underscore + 1));
            } catch (const std::exception&) {
                warnings << "warning: skipping study with unknown label: " << sdir << "\n";
                continue;
            }

            std::vector<fs::path> images;
            for (const auto& e : fs::directory_iterator(sdir)) {
                if (!e.is_regular_file()) continue;
                std::string ext = e.path().extension().string();
                std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
                if (ext == ".png") images.push_back(e.path());
            }
            std::sort(images.begin(), images.end());

            for (const auto& ipath : images) {
                PngHeader hdr;
                if (!probe_png_header(ipath.string(), hdr)) {
                    warnings << "warning: unreadable image skipped: " << ipath << "\n";
                    continue;
                }
                ImageRecord rec;
                rec.patient_id = patient;
                rec.study_id = study;
                rec.label = label;
                rec.source_path = fs::relative(ipath, root).generic_string();
                rec.width = hdr.width;
                rec.height = hdr.height;
                rec.channels = hdr.channels;
                index.records.push_back(std::move(rec));
                index.patients.insert(patient);
                if (label == Label::positive) index.positive_patients.insert(patient);
            }
        }
    }

    if (index.records.empty()) throw std::runtime_error("no images found under " + root);
    return index;
}

// Channel mean; single-channel input passes through unchanged.
// `interleaved` holds channels*height*width values, pixel-interleaved.
inline Image to_grayscale(const std::vector<float>& interleaved, int height, int width, int channels) {
    if (channels != 1 && channels != 3)
        throw std::invalid_argument("to_grayscale: channel count must be 1 or 3");
    Image out(height, width);
    if (channels == 1) {
        std::copy(interleaved.begin(), interleaved.end(), out.data.begin());
        return out;
    }
    for (size_t i = 0; i < out.data.size(); ++i) {
        float sum = interleaved[3 * i] + interleaved[3 * i + 1] + interleaved[3 * i + 2];
        out.data[i] = sum / 3.0f;
    }
    return out;
}

// Patient-level split. Positive patients are shuffled and alternated across
// validation/test (an odd count leaves the extra one in validation), an equal
// number of negative patients is sampled for each of the two parts, and every
// remaining negative patient goes to train.
inline SplitAssignment patient_split(const DatasetIndex& index, uint32_t seed) {
    if (index.patients.empty()) throw std::invalid_argument("patient_split: empty index");

    std::vector<std::string> positives(index.positive_patients.begin(), index.positive_patients.end());
    std::vector<std::string> negatives;
    for (const auto& p : index.patients)
        if (!index.positive_patients.count(p)) negatives.push_back(p);
    // set iteration is sorted; shuffles below are the only randomness

    SplitAssignment split;
    split.seed = seed;

    if (positives.empty()) {
        for (const auto& p : index.patients) split.mapping[p] = SplitPart::train;
        return split;
    }
    if (negatives.size() < positives.size())
        throw std::runtime_error("patient_split: fewer negative than positive patients");

    Rng rng(seed);
    shuffle_vec(positives, rng);
    size_t val_pos = 0, test_pos = 0;
    for (size_t i = 0; i < positives.size(); ++i) {
        if (i % 2 == 0) {
            split.mapping[positives[i]] = SplitPart::validation;
            ++val_pos;
        } else {
            split.mapping[positives[i]] = SplitPart::test;
            ++test_pos;
        }
    }

    shuffle_vec(negatives, rng);
    size_t k = 0;
    for (size_t i = 0; i < val_pos && k < negatives.size(); ++i, ++k)
        split.mapping[negatives[k]] = SplitPart::validation;
    for (size_t i = 0; i < test_pos && k < negatives.size(); ++i, ++k)
        split.mapping[negatives[k]] = SplitPart::test;
    for (; k < negatives.size(); ++k) split.mapping[negatives[k]] = SplitPart::train;

    return split;
}

// ---------------------------------------------------------------------------
// Split manifest I/O: header line with the seed, then "patient<TAB>part"
// ---------------------------------------------------------------------------

inline void write_split(const SplitAssignment& split, std::ostream& os) {
    os << "# seed " << split.seed << "\n";
    for (const auto& [patient, part] : split.mapping)
        os << patient << "\t" << split_part_name(part) << "\n";
}

inline void write_split_file(const SplitAssignment& split, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write split manifest: " + path);
    write_split(split, f);
}

inline SplitAssignment read_split(std::istream& is) {
    SplitAssignment split;
    std::string line;
    bool have_header = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            std::istringstream ss(line.substr(1));
            std::string word;
            ss >> word;  // "seed"
            ss >> split.seed;
            have_header = true;
            continue;
        }
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("malformed split line: " + line);
        split.mapping[line.substr(0, tab)] = parse_split_part(line.substr(tab + 1));
    }
    if (!have_header) throw std::runtime_error("split manifest missing seed header");
    return split;
}

inline SplitAssignment read_split_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read split manifest: " + path);
    return read_split(f);
}

// Leakage and balance checks; throws on violation.
inline void validate_split(const SplitAssignment& split, const DatasetIndex& index) {
    size_t val_pos = 0, test_pos = 0;
    for (const auto& p : index.patients) {
        auto it = split.mapping.find(p);
        if (it == split.mapping.end()) throw std::runtime_error("split misses patient " + p);
        bool positive = index.positive_patients.count(p) > 0;
        if (positive && it->second == SplitPart::train)
            throw std::runtime_error("positive patient assigned to train: " + p);
        if (positive && it->second == SplitPart::validation) ++val_pos;
        if (positive && it->second == SplitPart::test) ++test_pos;
    }
    size_t diff = val_pos > test_pos ? val_pos - test_pos : test_pos - val_pos;
    if (diff > 1) throw std::runtime_error("positive patients unbalanced across validation/test");
}

}  // namespace xray::core
