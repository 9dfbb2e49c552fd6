#pragma once

// Model checkpoint: the ParamStore records, then
//
//   d_q, d_max                    f64, f64
//   metadata length               u32
//   metadata                      UTF-8 JSON {"model": {...}, "config": {...}}

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include <json.hpp>

#include "inode/baselines/lstm.hpp"
#include "inode/errors.hpp"
#include "inode/model/inode.hpp"
#include "inode/model/sequence_model.hpp"
#include "inode/numerics/serialize.hpp"
#include "inode/preprocess/time_stats.hpp"

namespace inode {

inline nlohmann::json to_json(const ModelSpec& s) {
    return {{"kind", to_string(s.kind)},
            {"state_dim", s.state_dim},
            {"hidden_width", s.hidden_width},
            {"classes", s.classes},
            {"input_features", s.input_features},
            {"learn_h0", s.learn_h0},
            {"sensor", {s.dims.width, s.dims.height}}};
}

inline ModelSpec model_spec_from_json(const nlohmann::json& j) {
    ModelSpec s;
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.state_dim = j.at("state_dim").get<std::size_t>();
    s.hidden_width = j.at("hidden_width").get<std::size_t>();
    s.classes = j.at("classes").get<std::size_t>();
    s.input_features = j.at("input_features").get<std::size_t>();
    s.learn_h0 = j.value("learn_h0", false);
    s.dims = {j.at("sensor").at(0).get<std::uint32_t>(), j.at("sensor").at(1).get<std::uint32_t>()};
    return s;
}

// LSTMs always see the step as a fourth feature; INODE never does.
inline ModelSpec normalized_spec(ModelSpec s) {
    s.input_features = s.kind == ModelKind::inode ? event_features : event_features + 1;
    return s;
}

inline std::unique_ptr<SequenceModel> make_model(const ModelSpec& spec, ParamStore params) {
    switch (spec.kind) {
        case ModelKind::inode: return std::make_unique<InodeModel>(spec, std::move(params));
        case ModelKind::lstm: return std::make_unique<LstmModel>(spec, std::move(params));
        case ModelKind::bilstm: return std::make_unique<BiLstmModel>(spec, std::move(params));
    }
    throw UsageError("unknown model kind");
}

inline std::unique_ptr<SequenceModel> create_model(const ModelSpec& spec, std::uint64_t seed) {
    const ModelSpec s = normalized_spec(spec);
    if (s.kind == ModelKind::inode) return make_model(s, init_inode_params(s, seed));
    return make_model(s, init_lstm_params(s, seed));
}

struct Checkpoint {
    std::unique_ptr<SequenceModel> model;
    TimeStats stats;
    nlohmann::json config = nlohmann::json::object();
};

inline void write_checkpoint(std::ostream& os, const SequenceModel& model, const TimeStats& stats,
                             const nlohmann::json& config) {
    binio::write_params(os, model.params());
    binio::put_f64(os, stats.d_q);
    binio::put_f64(os, stats.d_max);
    const nlohmann::json meta{{"model", to_json(model.spec())}, {"config", config}};
    binio::put_bytes(os, meta.dump());
    if (!os) throw FormatError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
    ParamStore params = binio::read_params(is);
    Checkpoint ck;
    ck.stats.d_q = binio::get_f64(is, "d_q");
    ck.stats.d_max = binio::get_f64(is, "d_max");
    if (!(ck.stats.d_q > 0.0) || !(ck.stats.d_max > 0.0)) throw FormatError("checkpoint time statistics not positive");
    const std::string text = binio::get_bytes(is, "metadata", 1u << 24);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(text);
        ck.model = make_model(model_spec_from_json(meta.at("model")), std::move(params));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad checkpoint metadata: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("checkpoint does not match its metadata: ") + e.what());
    }
    ck.config = meta.value("config", nlohmann::json::object());
    return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const SequenceModel& model, const TimeStats& stats,
                            const nlohmann::json& config = nlohmann::json::object()) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot write " + path.string());
    write_checkpoint(os, model, stats, config);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open checkpoint " + path.string());
    return read_checkpoint(is);
}

}  // namespace inode
