#pragma once

// Event-by-event inference. The arrival of event i+1 integrates the held
// input of event i over the normalized gap, then classifies. The first event
// after a reset only starts the hold and reports g(h0).

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "inode/errors.hpp"
#include "inode/log.hpp"
#include "inode/model/sequence_model.hpp"
#include "inode/numerics/kernels.hpp"
#include "inode/preprocess/features.hpp"
#include "inode/preprocess/time_stats.hpp"

namespace inode {

struct Prediction {
    std::uint64_t t = 0;
    int label = 0;
    std::vector<double> posterior;
    Matrix logits;
};

class OnlineClassifier {
public:
    OnlineClassifier(const SequenceModel& model, TimeStats stats)
        : cell_(model.make_cell()), stats_(stats), dims_(model.spec().dims) {
        if (!cell_) throw UsageError(to_string(model.spec().kind) + " cannot classify event by event");
    }

    Prediction push(const Event& e) {
        const InputVector u = normalize_input(e, dims_);
        if (held_) {
            std::uint64_t dt = 0;
            if (e.t < last_t_) {
                warn("timestamp " + std::to_string(e.t) + " precedes " + std::to_string(last_t_) + "; using dt = 0");
            } else {
                dt = e.t - last_t_;
            }
            cell_->step(*held_, normalize_dt(dt, stats_));
        }
        held_ = u;
        last_t_ = e.t;
        return predict(e.t);
    }

    void reset() {
        cell_->reset();
        held_.reset();
        last_t_ = 0;
    }

    Matrix logits() const { return cell_->logits(); }
    const TimeStats& stats() const noexcept { return stats_; }

private:
    Prediction predict(std::uint64_t t) const {
        Prediction p;
        p.t = t;
        p.logits = cell_->logits();
        const Matrix probs = kernels::softmax_rows(p.logits);
        p.posterior.assign(probs.values().begin(), probs.values().end());
        p.label = static_cast<int>(kernels::argmax(p.logits.row(0)));
        return p;
    }

    std::unique_ptr<RecurrentCell> cell_;
    TimeStats stats_;
    SensorDims dims_;
    std::optional<InputVector> held_;
    std::uint64_t last_t_ = 0;
};

}  // namespace inode
