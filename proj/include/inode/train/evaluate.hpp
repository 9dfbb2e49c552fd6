#pragma once

// Accuracy as a function of the number of events seen. Each test item gets one
// seeded offset per repeat; prefixes of a single window of max(lengths) steps
// give the predictions at every length.

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "inode/events/event.hpp"
#include "inode/model/sequence_model.hpp"
#include "inode/numerics/kernels.hpp"
#include "inode/preprocess/features.hpp"
#include "inode/preprocess/time_stats.hpp"

namespace inode {

// Offset seed used for a run's evaluation windows.
inline std::uint64_t eval_seed(std::uint64_t run_seed) { return run_seed ^ 0x5eed5eedULL; }

struct EvalOptions {
    std::vector<std::size_t> lengths{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    std::uint64_t seed = 0;
    std::size_t repeats = 1;
    std::size_t chunk = 250;      // items per forward pass
    std::size_t loss_steps = 0;   // also report the mean loss over this many steps; 0 skips
};

struct ItemPrediction {
    std::string id;
    int label = 0;
    std::size_t offset = 0;
    std::vector<int> predictions;  // one per length
};

struct EvalResult {
    std::vector<std::size_t> lengths;
    std::vector<double> accuracy;  // one per length
    double loss = 0.0;
    std::vector<ItemPrediction> items;  // first repeat only
};

// Offset drawn for item `index` in repeat `repeat`, independent of the model.
inline std::size_t eval_offset(const EventSequence& seq, std::size_t steps, std::uint64_t seed, std::size_t repeat,
                               std::size_t index) {
    std::seed_seq seq_seed{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                           static_cast<std::uint32_t>(repeat), static_cast<std::uint32_t>(index), 0x45u};
    std::mt19937_64 rng(seq_seed);
    std::uniform_int_distribution<std::size_t> pick(0, max_offset(seq.events.size(), steps));
    return pick(rng);
}

inline EvalResult evaluate(const SequenceModel& model, const TimeStats& stats, std::span<const EventSequence> test,
                           const EvalOptions& opts) {
    if (opts.lengths.empty()) throw InputError("no evaluation lengths");
    if (test.empty()) throw DatasetError("empty test set");
    const std::size_t longest = *std::max_element(opts.lengths.begin(), opts.lengths.end());
    const std::size_t steps = std::max(longest, opts.loss_steps);
    EvalResult res;
    res.lengths = opts.lengths;
    std::vector<std::size_t> correct(opts.lengths.size(), 0);
    double loss_sum = 0.0;
    for (std::size_t rep = 0; rep < opts.repeats; ++rep) {
        for (std::size_t begin = 0; begin < test.size(); begin += opts.chunk) {
            const std::size_t end = std::min(test.size(), begin + opts.chunk);
            std::vector<Window> windows;
            std::vector<int> labels;
            for (std::size_t i = begin; i < end; ++i) {
                windows.push_back(window_at(test[i], eval_offset(test[i], steps, opts.seed, rep, i), steps, stats));
                labels.push_back(test[i].label);
            }
            const Batch batch = make_batch(windows, labels, model.uses_dt_feature());
            const auto logits = model.logits_at(batch, opts.lengths);
            if (opts.loss_steps > 0) {
                loss_sum += model.loss(truncate_steps(batch, opts.loss_steps)) * static_cast<double>(end - begin);
            }
            for (std::size_t r = 0; r < windows.size(); ++r) {
                ItemPrediction item;
                for (std::size_t k = 0; k < opts.lengths.size(); ++k) {
                    const int pred = static_cast<int>(kernels::argmax(logits[k].row(r)));
                    if (pred == labels[r]) ++correct[k];
                    item.predictions.push_back(pred);
                }
                if (rep == 0) {
                    item.id = test[begin + r].id;
                    item.label = labels[r];
                    item.offset = windows[r].offset;
                    res.items.push_back(std::move(item));
                }
            }
        }
    }
    const double total = static_cast<double>(test.size() * opts.repeats);
    for (auto c : correct) res.accuracy.push_back(static_cast<double>(c) / total);
    res.loss = loss_sum / total;
    return res;
}

inline EvalResult evaluate(const SequenceModel& model, const TimeStats& stats, const Dataset& test,
                           const EvalOptions& opts) {
    return evaluate(model, stats, std::span<const EventSequence>(test.sequences), opts);
}

}  // namespace inode
