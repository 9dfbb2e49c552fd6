#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "inode/errors.hpp"
#include "inode/events/aer.hpp"
#include "inode/events/event.hpp"
#include "inode/log.hpp"

namespace inode {

struct LoadOptions {
    std::size_t truncate_to = 2000;   // 0 keeps every event
    SensorDims dims{34, 34};          // overridden by manifest.json
    aer::Format format = aer::Format::aer;
    std::size_t min_events = 1;       // applied before truncation
    std::size_t max_events = 0;       // 0 = no upper bound
    std::vector<std::string> classes; // class directories to keep; empty keeps all
};

struct Manifest {
    SensorDims dims;
    aer::Format format = aer::Format::aer;
};

// Optional `manifest.json`: {"sensor": [w, h], "format": "aer"|"aer16"}.
inline std::optional<Manifest> read_manifest(const std::filesystem::path& root) {
    const auto path = root / "manifest.json";
    if (!std::filesystem::exists(path)) return std::nullopt;
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DatasetError("manifest " + path.string() + ": " + e.what());
    }
    Manifest m;
    if (j.contains("sensor")) {
        const auto& s = j.at("sensor");
        if (!s.is_array() || s.size() != 2) throw DatasetError("manifest: sensor must be [width, height]");
        m.dims = {s[0].get<std::uint32_t>(), s[1].get<std::uint32_t>()};
    }
    if (j.contains("format")) m.format = aer::format_from_string(j.at("format").get<std::string>());
    return m;
}

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Loads root/<class_name>/<sample>.bin; class indices follow lexicographic
// order of the class directory names, samples follow sorted paths.
inline Dataset load_dataset(const std::filesystem::path& root, LoadOptions opts = {}) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw DatasetError("dataset root " + root.string() + " is not a directory");
    if (auto m = read_manifest(root)) {
        opts.dims = m->dims;
        opts.format = m->format;
    }

    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        const auto name = entry.path().filename().string();
        if (opts.classes.empty() || std::find(opts.classes.begin(), opts.classes.end(), name) != opts.classes.end())
            class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    if (class_dirs.empty()) throw DatasetError("no class directories under " + root.string());

    Dataset ds;
    ds.dims = opts.dims;
    ds.class_count = class_dirs.size();
    for (std::size_t c = 0; c < class_dirs.size(); ++c) {
        ds.class_names.push_back(class_dirs[c].filename().string());
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(class_dirs[c])) {
            if (entry.is_regular_file() && entry.path().extension() == ".bin") files.push_back(entry.path());
        }
        if (files.empty()) throw DatasetError("class directory " + class_dirs[c].string() + " is empty");
        std::sort(files.begin(), files.end());

        for (const auto& file : files) {
            EventSequence seq;
            try {
                const auto bytes = read_file_bytes(file);
                seq = aer::parse(bytes, opts.format);
            } catch (const std::exception& e) {
                warn("skipping " + file.string() + ": " + e.what());
                continue;
            }
            const std::size_t n = seq.events.size();
            if (n < std::max<std::size_t>(opts.min_events, 1) || (opts.max_events > 0 && n > opts.max_events)) {
                continue;
            }
            if (opts.truncate_to > 0 && n > opts.truncate_to) seq.events.resize(opts.truncate_to);
            for (auto& e : seq.events) {
                if (e.x >= opts.dims.width || e.y >= opts.dims.height) {
                    warn(file.string() + ": event outside " + std::to_string(opts.dims.width) + "x" +
                         std::to_string(opts.dims.height) + " sensor");
                    break;
                }
            }
            seq.label = static_cast<int>(c);
            seq.dims = opts.dims;
            seq.id = fs::relative(file, root).generic_string();
            ds.sequences.push_back(std::move(seq));
        }
    }
    return ds;
}

inline std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
}

// First ceil(rho * N) sequences after a seeded shuffle.
inline Dataset subset_fraction(const Dataset& ds, double rho, std::uint64_t seed) {
    if (!(rho > 0.0 && rho <= 1.0)) throw InputError("dataset fraction must be in (0, 1]");
    const auto keep = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(ds.size()) - 1e-9));
    Dataset out = ds;
    out.sequences.clear();
    const auto perm = seeded_permutation(ds.size(), seed);
    for (std::size_t i = 0; i < keep; ++i) out.sequences.push_back(ds.sequences[perm[i]]);
    return out;
}

// The first n sequences after a seeded shuffle (all of them when n is 0 or >= N).
inline Dataset subset_count(const Dataset& ds, std::size_t n, std::uint64_t seed) {
    if (n == 0 || n >= ds.size()) return ds;
    Dataset out = ds;
    out.sequences.clear();
    const auto perm = seeded_permutation(ds.size(), seed);
    for (std::size_t i = 0; i < n; ++i) out.sequences.push_back(ds.sequences[perm[i]]);
    return out;
}

struct TrainTest {
    Dataset train;
    Dataset test;
};

// Seeded split; test receives round(test_fraction * N) sequences.
inline TrainTest split_dataset(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    TrainTest tt{ds, ds};
    tt.train.sequences.clear();
    tt.test.sequences.clear();
    tt.train.split = Split::train;
    tt.test.split = Split::test;
    const auto perm = seeded_permutation(ds.size(), seed);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(ds.size())));
    for (std::size_t i = 0; i < perm.size(); ++i) {
        (i < n_test ? tt.test : tt.train).sequences.push_back(ds.sequences[perm[i]]);
    }
    return tt;
}

// Uses root/Train + root/Test (any case) when present, otherwise a seeded
// 90/10 split of root.
inline TrainTest load_train_test(const std::filesystem::path& root, const LoadOptions& opts, std::uint64_t seed) {
    namespace fs = std::filesystem;
    std::optional<fs::path> train_dir, test_dir;
    if (fs::is_directory(root)) {
        for (const auto& entry : fs::directory_iterator(root)) {
            if (!entry.is_directory()) continue;
            std::string name = entry.path().filename().string();
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
            if (name == "train") train_dir = entry.path();
            if (name == "test") test_dir = entry.path();
        }
    }
    if (train_dir && test_dir) {
        LoadOptions o = opts;
        if (auto m = read_manifest(root)) {
            o.dims = m->dims;
            o.format = m->format;
        }
        TrainTest tt{load_dataset(*train_dir, o), load_dataset(*test_dir, o)};
        if (tt.train.class_names != tt.test.class_names) {
            throw DatasetError("train and test class directories differ");
        }
        tt.test.split = Split::test;
        return tt;
    }
    return split_dataset(load_dataset(root, opts), 0.1, seed);
}

inline void write_sequence_file(const std::filesystem::path& path, const EventSequence& seq, aer::Format f) {
    const auto bytes = aer::write(seq, f);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace inode
