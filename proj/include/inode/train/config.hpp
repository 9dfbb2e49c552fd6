#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "inode/errors.hpp"
#include "inode/events/dataset.hpp"
#include "inode/events/synth.hpp"
#include "inode/model/sequence_model.hpp"

namespace inode {

struct RunConfig {
    ModelKind model = ModelKind::inode;
    std::size_t hidden = 30;         // INODE state size or LSTM hidden size
    std::size_t width = 128;         // INODE f-network width
    std::size_t s_len = 100;
    std::size_t epochs = 300;
    double lr = 1e-3;
    std::size_t batch = 100;         // batch size at rho = 1
    double rho = 1.0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> eval_lengths{10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    double d_max = 1.0;
    double clip_norm = 0.0;          // global-norm clip; 0 disables
    bool learn_h0 = false;
    std::size_t eval_repeats = 1;

    // Data source: a dataset root or a synthetic task name.
    std::string data;
    std::string synthetic;
    std::size_t truncate = 2000;
    std::size_t n_train = 0;         // synthetic size or a seeded cap on real data; 0 keeps the default
    std::size_t n_test = 0;
    std::vector<std::string> classes;  // real data only: class directories to keep

    // B_rho = rho * B_1, at least one.
    std::size_t effective_batch() const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(rho * static_cast<double>(batch))));
    }

    std::size_t max_eval_length() const {
        std::size_t n = 0;
        for (auto l : eval_lengths) n = std::max(n, l);
        return n;
    }

    void validate() const {
        if (s_len < 1) throw InputError("s_len must be >= 1");
        if (!(rho > 0.0 && rho <= 1.0)) throw InputError("rho must be in (0, 1]");
        if (!(lr > 0.0)) throw InputError("lr must be positive");
        if (batch < 1) throw InputError("batch must be >= 1");
        if (hidden < 1 || width < 1) throw InputError("model sizes must be >= 1");
        if (!(d_max > 0.0)) throw InputError("d_max must be positive");
        if (clip_norm < 0.0) throw InputError("clip_norm must be >= 0");
        if (eval_repeats < 1) throw InputError("eval_repeats must be >= 1");
        if (eval_lengths.empty()) throw InputError("eval_lengths must not be empty");
        for (auto l : eval_lengths)
            if (l < 1) throw InputError("eval lengths must be >= 1");
        if (data.empty() == synthetic.empty()) throw InputError("exactly one of data and synthetic must be set");
    }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline nlohmann::json to_json(const RunConfig& c) {
    return {{"model", to_string(c.model)}, {"hidden", c.hidden},       {"width", c.width},
            {"s_len", c.s_len},            {"epochs", c.epochs},       {"lr", c.lr},
            {"batch", c.batch},            {"rho", c.rho},             {"seed", c.seed},
            {"eval_lengths", c.eval_lengths}, {"d_max", c.d_max},      {"clip_norm", c.clip_norm},
            {"learn_h0", c.learn_h0},      {"eval_repeats", c.eval_repeats}, {"data", c.data},
            {"synthetic", c.synthetic},    {"truncate", c.truncate},   {"n_train", c.n_train},
            {"n_test", c.n_test},          {"classes", c.classes}};
}

// Missing keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig c;
    try {
        if (j.contains("model")) c.model = model_kind_from_string(j.at("model").get<std::string>());
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("hidden", c.hidden);
        get("width", c.width);
        get("s_len", c.s_len);
        get("epochs", c.epochs);
        get("lr", c.lr);
        get("batch", c.batch);
        get("rho", c.rho);
        get("seed", c.seed);
        get("eval_lengths", c.eval_lengths);
        get("d_max", c.d_max);
        get("clip_norm", c.clip_norm);
        get("learn_h0", c.learn_h0);
        get("eval_repeats", c.eval_repeats);
        get("data", c.data);
        get("synthetic", c.synthetic);
        get("truncate", c.truncate);
        get("n_train", c.n_train);
        get("n_test", c.n_test);
        get("classes", c.classes);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("bad run config: ") + e.what());
    }
    return c;
}

inline ModelSpec model_spec_for(const RunConfig& c, std::size_t classes, SensorDims dims) {
    ModelSpec s;
    s.kind = c.model;
    s.state_dim = c.hidden;
    s.hidden_width = c.width;
    s.classes = classes;
    s.input_features = c.model == ModelKind::inode ? event_features : event_features + 1;
    s.learn_h0 = c.learn_h0;
    s.dims = dims;
    return s;
}

// Train and test splits named by the config (before the rho fraction).
inline TrainTest prepare_data(const RunConfig& c) {
    if (!c.synthetic.empty()) {
        auto task = synth::task_from_name(c.synthetic);
        if (c.n_train) task.n_train = c.n_train;
        if (c.n_test) task.n_test = c.n_test;
        return {synth::make_split(task, Split::train, c.seed), synth::make_split(task, Split::test, c.seed)};
    }
    LoadOptions opts;
    opts.truncate_to = c.truncate;
    opts.classes = c.classes;
    if (auto m = read_manifest(c.data)) {
        opts.dims = m->dims;
        opts.format = m->format;
    }
    auto tt = load_train_test(c.data, opts, c.seed);
    tt.train = subset_count(tt.train, c.n_train, c.seed);
    tt.test = subset_count(tt.test, c.n_test, c.seed + 1);
    return tt;
}

}  // namespace inode
