#pragma once

// Training loop: per epoch a seeded shuffle, ceil(N / B) Adam steps on random
// sub-sequences, then evaluation on the test split.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "inode/events/dataset.hpp"
#include "inode/model/checkpoint.hpp"
#include "inode/numerics/adam.hpp"
#include "inode/preprocess/time_stats.hpp"
#include "inode/train/config.hpp"
#include "inode/train/evaluate.hpp"

namespace inode {

struct MetricsRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
    std::vector<double> accuracy;  // one per eval length
    double wall_seconds = 0.0;

    // Equality ignores wall-clock time.
    friend bool operator==(const MetricsRecord& a, const MetricsRecord& b) {
        return a.epoch == b.epoch && a.train_loss == b.train_loss && a.test_loss == b.test_loss &&
               a.accuracy == b.accuracy;
    }
};

struct MetricsLog {
    std::vector<std::size_t> lengths;
    std::vector<MetricsRecord> records;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
          epoch_(epoch),
          batch_(batch) {}

    std::size_t epoch() const noexcept { return epoch_; }
    std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_, batch_;
};

struct TrainResult {
    std::unique_ptr<SequenceModel> final_model;
    std::unique_ptr<SequenceModel> best_model;  // highest accuracy at the longest eval length
    std::size_t best_epoch = 0;
    TimeStats stats;
    MetricsLog log;
    std::size_t steps_taken = 0;
    std::size_t train_size = 0;
};

// Called after each epoch; returning false stops training early.
using EpochObserver = std::function<bool(const MetricsRecord&, const SequenceModel&)>;

inline std::size_t longest_index(const std::vector<std::size_t>& lengths) {
    return static_cast<std::size_t>(std::max_element(lengths.begin(), lengths.end()) - lengths.begin());
}

inline std::unique_ptr<SequenceModel> clone_model(const SequenceModel& m) { return make_model(m.spec(), m.params()); }

inline TrainResult train(const RunConfig& cfg, const TrainTest& data, const EpochObserver& observer = {}) {
    cfg.validate();
    const Dataset train_set = cfg.rho < 1.0 ? subset_fraction(data.train, cfg.rho, cfg.seed) : data.train;
    if (train_set.sequences.empty()) throw DatasetError("empty training set");

    TrainResult res;
    res.train_size = train_set.sequences.size();
    res.stats = compute_dq(train_set, cfg.d_max);
    auto model = create_model(model_spec_for(cfg, data.train.class_count, data.train.dims), cfg.seed);
    AdamOptions adam_opts;
    adam_opts.learning_rate = cfg.lr;
    AdamState adam(model->params(), adam_opts);

    EvalOptions eval_opts;
    eval_opts.lengths = cfg.eval_lengths;
    eval_opts.seed = eval_seed(cfg.seed);
    eval_opts.repeats = cfg.eval_repeats;
    eval_opts.loss_steps = cfg.s_len;
    res.log.lengths = cfg.eval_lengths;

    const std::size_t n = train_set.sequences.size();
    const std::size_t b = cfg.effective_batch();
    const bool dt_feature = model->uses_dt_feature();
    std::mt19937_64 sampler(cfg.seed * 0x9e3779b97f4a7c15ULL + 1);
    const auto start = std::chrono::steady_clock::now();
    double best_acc = 0.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto order = seeded_permutation(n, cfg.seed + epoch);
        double loss_sum = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t begin = 0; begin < n; begin += b, ++batch_index) {
            const std::size_t end = std::min(n, begin + b);
            std::vector<Window> windows;
            std::vector<int> labels;
            for (std::size_t k = begin; k < end; ++k) {
                const auto& seq = train_set.sequences[order[k]];
                windows.push_back(sample_subsequence(seq, cfg.s_len, res.stats, sampler));
                labels.push_back(seq.label);
            }
            auto lg = model->loss_and_gradients(make_batch(windows, labels, dt_feature));
            if (!std::isfinite(lg.loss)) throw TrainingDiverged(epoch, batch_index);
            if (cfg.clip_norm > 0.0) clip_global_norm(lg.gradients, cfg.clip_norm);
            adam_step(model->params(), lg.gradients, adam);
            loss_sum += lg.loss * static_cast<double>(end - begin);
            ++res.steps_taken;
        }

        MetricsRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(n);
        if (!data.test.sequences.empty()) {
            const auto ev = evaluate(*model, res.stats, data.test, eval_opts);
            rec.test_loss = ev.loss;
            rec.accuracy = ev.accuracy;
        }
        rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        res.log.records.push_back(rec);

        const double acc = rec.accuracy.empty() ? -rec.train_loss : rec.accuracy[longest_index(cfg.eval_lengths)];
        if (!res.best_model || acc > best_acc) {
            best_acc = acc;
            res.best_epoch = epoch;
            res.best_model = clone_model(*model);
        }
        if (observer && !observer(rec, *model)) break;
    }
    res.final_model = std::move(model);
    if (!res.best_model) res.best_model = clone_model(*res.final_model);
    return res;
}

}  // namespace inode
