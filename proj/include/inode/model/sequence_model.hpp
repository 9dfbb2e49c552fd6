#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "inode/errors.hpp"
#include "inode/events/event.hpp"
#include "inode/numerics/matrix.hpp"
#include "inode/numerics/param_store.hpp"
#include "inode/preprocess/features.hpp"

namespace inode {

enum class ModelKind { inode, lstm, bilstm };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::inode: return "inode";
        case ModelKind::lstm: return "lstm";
        case ModelKind::bilstm: return "bilstm";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "inode") return ModelKind::inode;
    if (s == "lstm") return ModelKind::lstm;
    if (s == "bilstm") return ModelKind::bilstm;
    throw InputError("unknown model kind '" + s + "' (expected inode, lstm or bilstm)");
}

// Architecture metadata stored alongside the weights.
struct ModelSpec {
    ModelKind kind = ModelKind::inode;
    std::size_t state_dim = 30;     // INODE h, or LSTM hidden size
    std::size_t hidden_width = 128;  // INODE f-network width (unused by LSTMs)
    std::size_t classes = 10;
    std::size_t input_features = 3;
    bool learn_h0 = false;
    SensorDims dims;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Per-stream recurrent state for event-by-event inference.
class RecurrentCell {
public:
    virtual ~RecurrentCell() = default;
    virtual void reset() = 0;
    // Advances over a normalized step dtau with input u held constant.
    virtual void step(const InputVector& u, double dtau) = 0;
    virtual Matrix logits() const = 0;  // 1 x C
};

struct LossAndGradients {
    double loss = 0.0;
    Gradients gradients;
};

class SequenceModel {
public:
    virtual ~SequenceModel() = default;

    virtual const ModelSpec& spec() const = 0;
    virtual ParamStore& params() = 0;
    virtual const ParamStore& params() const = 0;

    bool uses_dt_feature() const { return spec().input_features == event_features + 1; }

    // Mean training loss of the batch and its exact gradients.
    virtual LossAndGradients loss_and_gradients(const Batch& batch) const = 0;

    virtual double loss(const Batch& batch) const = 0;

    // Logits (B x C) after the first n steps, for each n in `prefix_lengths`.
    virtual std::vector<Matrix> logits_at(const Batch& batch, std::span<const std::size_t> prefix_lengths) const = 0;

    // Null when the model cannot run event by event (bidirectional).
    virtual std::unique_ptr<RecurrentCell> make_cell() const = 0;
};

}  // namespace inode
