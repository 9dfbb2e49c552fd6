// inode: train, evaluate and stream event-camera classifiers.
//
// Exit codes: 0 success, 2 bad usage or missing input, 3 training diverged,
// 1 any other failure.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "inode/events/aer.hpp"
#include "inode/events/dataset.hpp"
#include "inode/model/checkpoint.hpp"
#include "inode/stream/server.hpp"
#include "inode/stream/session.hpp"
#include "inode/train/config.hpp"
#include "inode/train/evaluate.hpp"
#include "inode/train/report.hpp"
#include "inode/train/train.hpp"

namespace fs = std::filesystem;
using namespace inode;

namespace {

constexpr int exit_usage = 2;
constexpr int exit_diverged = 3;

struct UsageFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_lengths(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || v == 0) throw UsageFailure("bad length '" + item + "' in --lengths");
        out.push_back(v);
    }
    if (out.empty()) throw UsageFailure("--lengths is empty");
    return out;
}

std::string join_lengths(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

Checkpoint open_checkpoint(const std::string& path) {
    if (!fs::is_regular_file(path)) throw UsageFailure("checkpoint '" + path + "' not found");
    return load_checkpoint(path);
}

struct TrainArgs {
    RunConfig cfg;
    std::string model = "inode";
    std::string lengths = "10,20,30,40,50,60,70,80,90,100";
    std::string out;
    std::string metrics;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = a.cfg;
    try {
        cfg.model = model_kind_from_string(a.model);
        cfg.eval_lengths = parse_lengths(a.lengths);
        cfg.validate();
    } catch (const InputError& e) {
        throw UsageFailure(e.what());
    }
    if (!cfg.data.empty() && !fs::is_directory(cfg.data)) throw UsageFailure("data root '" + cfg.data + "' not found");

    const TrainTest data = prepare_data(cfg);
    if (!a.quiet) {
        std::cerr << "train " << data.train.size() << " sequences, test " << data.test.size() << ", " << data.train.class_count
                  << " classes, batch " << cfg.effective_batch() << "\n";
    }
    const auto result = train(cfg, data, [&](const MetricsRecord& r, const SequenceModel&) {
        if (!a.quiet) {
            std::cerr << "epoch " << r.epoch << "  train " << format_double(r.train_loss) << "  test "
                      << format_double(r.test_loss);
            if (!r.accuracy.empty()) std::cerr << "  acc@" << cfg.max_eval_length() << " " << r.accuracy.back();
            std::cerr << "  (" << r.wall_seconds << " s)\n";
        }
        return true;
    });

    const nlohmann::json config = to_json(cfg);
    save_checkpoint(a.out, *result.final_model, result.stats, config);
    save_checkpoint(a.out + ".best", *result.best_model, result.stats, config);
    const std::string stem = a.metrics.empty() ? a.out + ".metrics" : a.metrics;
    if (!result.log.records.empty()) write_report(result.log, stem);
    if (!a.quiet) {
        std::cerr << "wrote " << a.out << " (best epoch " << result.best_epoch << " -> " << a.out << ".best), "
                  << stem << ".{csv,json,svg}\n";
    }
    return 0;
}

struct EvalArgs {
    std::string ckpt;
    std::string data;
    std::string synthetic;
    std::string lengths = "10,20,30,40,50,60,70,80,90,100";
    std::optional<std::uint64_t> seed;
    std::size_t repeats = 1;
    std::string json;
};

int cmd_eval(const EvalArgs& a) {
    const auto lengths = parse_lengths(a.lengths);
    const Checkpoint ck = open_checkpoint(a.ckpt);
    RunConfig cfg = run_config_from_json(ck.config);
    if (!a.data.empty() || !a.synthetic.empty()) {
        cfg.data = a.data;
        cfg.synthetic = a.synthetic;
    }
    if (cfg.data.empty() == cfg.synthetic.empty()) throw UsageFailure("give exactly one of --data and --synthetic");
    if (!cfg.data.empty() && !fs::is_directory(cfg.data)) throw UsageFailure("data root '" + cfg.data + "' not found");
    if (a.repeats < 1) throw UsageFailure("--repeats must be >= 1");

    const TrainTest data = prepare_data(cfg);
    if (data.train.class_count != ck.model->spec().classes)
        throw UsageFailure("checkpoint has " + std::to_string(ck.model->spec().classes) + " classes, data has " +
                           std::to_string(data.train.class_count));
    EvalOptions opts;
    opts.lengths = lengths;
    opts.seed = eval_seed(a.seed.value_or(cfg.seed));
    opts.repeats = a.repeats;
    const EvalResult res = evaluate(*ck.model, ck.stats, data.test, opts);

    std::cout << "events accuracy\n";
    for (std::size_t k = 0; k < lengths.size(); ++k)
        std::cout << lengths[k] << ' ' << format_double(res.accuracy[k]) << '\n';

    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : res.items)
        items.push_back({{"id", it.id}, {"label", it.label}, {"offset", it.offset}, {"predictions", it.predictions}});
    const nlohmann::json out{{"checkpoint", a.ckpt},
                             {"model", to_string(ck.model->spec().kind)},
                             {"test_size", data.test.size()},
                             {"repeats", a.repeats},
                             {"lengths", lengths},
                             {"accuracy", res.accuracy},
                             {"items", items}};
    write_text(a.json.empty() ? a.ckpt + ".eval.json" : a.json, out.dump(2) + "\n");
    return 0;
}

struct StreamArgs {
    std::string ckpt;
    std::string listen;
    std::string replay;
    std::string format = "aer";
    bool fast = false;
};

int stream_stdin(const Checkpoint& ck) {
    stream::Session session(*ck.model, ck.stats);
    std::string line, out;
    std::ios::sync_with_stdio(false);
    while (std::getline(std::cin, line)) {
        session.handle(line, out);
        if (out.size() > (1u << 16) || std::cin.rdbuf()->in_avail() <= 0) {
            std::fwrite(out.data(), 1, out.size(), stdout);
            std::fflush(stdout);
            out.clear();
        }
    }
    std::fwrite(out.data(), 1, out.size(), stdout);
    std::fflush(stdout);
    return 0;
}

int stream_replay(const Checkpoint& ck, const StreamArgs& a) {
    if (!fs::is_regular_file(a.replay)) throw UsageFailure("replay file '" + a.replay + "' not found");
    aer::Format format;
    try {
        format = aer::format_from_string(a.format);
    } catch (const InputError& e) {
        throw UsageFailure(e.what());
    }
    const auto bytes = read_file_bytes(a.replay);
    const EventSequence seq = aer::parse(bytes, format);
    stream::Session session(*ck.model, ck.stats);
    std::string out;
    out.reserve(1u << 17);
    const auto start = std::chrono::steady_clock::now();
    const std::uint64_t t0 = seq.events.empty() ? 0 : seq.events.front().t;
    for (const Event& e : seq.events) {
        if (!a.fast) std::this_thread::sleep_until(start + std::chrono::microseconds(e.t - t0));
        session.handle_event(e, out);
        if (!a.fast || out.size() > (1u << 16)) {
            std::fwrite(out.data(), 1, out.size(), stdout);
            if (!a.fast) std::fflush(stdout);
            out.clear();
        }
    }
    std::fwrite(out.data(), 1, out.size(), stdout);
    std::fflush(stdout);
    return 0;
}

int cmd_stream(const StreamArgs& a) {
    if (!a.listen.empty() && !a.replay.empty()) throw UsageFailure("--listen and --replay are exclusive");
    const Checkpoint ck = open_checkpoint(a.ckpt);
    if (!ck.model->make_cell()) throw UsageFailure(to_string(ck.model->spec().kind) + " cannot stream event by event");
    if (!a.replay.empty()) return stream_replay(ck, a);
    if (a.listen.empty()) return stream_stdin(ck);
    stream::Endpoint where;
    try {
        where = stream::parse_endpoint(a.listen);
    } catch (const InputError& e) {
        throw UsageFailure(e.what());
    }
    stream::TcpServer server(*ck.model, ck.stats, where);
    std::cerr << "listening on " << where.host << ":" << server.port() << std::endl;
    server.serve();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Input-filtering neural ODE classifiers for event-camera streams"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* train_cmd = app.add_subcommand("train", "train a model and write a checkpoint plus metrics");
    auto* src = train_cmd->add_option("--data", ta.cfg.data, "dataset root (<class>/<sample>.bin, optional Train/Test)");
    train_cmd->add_option("--synthetic", ta.cfg.synthetic, "synthetic task, movedot2 .. movedot10")->excludes(src);
    train_cmd->add_option("--model", ta.model, "inode, lstm or bilstm")->capture_default_str();
    train_cmd->add_option("--hidden", ta.cfg.hidden, "state size (INODE) or hidden size (LSTM)")->capture_default_str();
    train_cmd->add_option("--width", ta.cfg.width, "INODE f-network width")->capture_default_str();
    train_cmd->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
    train_cmd->add_option("--lr", ta.cfg.lr)->capture_default_str();
    train_cmd->add_option("--batch", ta.cfg.batch, "batch size at rho = 1")->capture_default_str();
    train_cmd->add_option("--rho", ta.cfg.rho, "fraction of the training set")->capture_default_str();
    train_cmd->add_option("--s-len", ta.cfg.s_len, "training sub-sequence length")->capture_default_str();
    train_cmd->add_option("--seed", ta.cfg.seed)->capture_default_str();
    train_cmd->add_option("--lengths", ta.lengths, "evaluation lengths")->capture_default_str();
    train_cmd->add_option("--d-max", ta.cfg.d_max)->capture_default_str();
    train_cmd->add_option("--clip", ta.cfg.clip_norm, "global gradient-norm clip, 0 = off")->capture_default_str();
    train_cmd->add_flag("--learn-h0", ta.cfg.learn_h0, "learn the initial state");
    train_cmd->add_option("--eval-repeats", ta.cfg.eval_repeats)->capture_default_str();
    train_cmd->add_option("--truncate", ta.cfg.truncate, "events kept per file, 0 = all")->capture_default_str();
    train_cmd->add_option("--n-train", ta.cfg.n_train, "training items: synthetic size or a seeded cap (0 = default)");
    train_cmd->add_option("--n-test", ta.cfg.n_test, "test items: synthetic size or a seeded cap (0 = default)");
    train_cmd->add_option("--classes", ta.cfg.classes, "class directories to keep, e.g. 0,1 (real data)")->delimiter(',');
    train_cmd->add_option("--out", ta.out, "checkpoint path")->required();
    train_cmd->add_option("--metrics", ta.metrics, "metrics path stem (default <out>.metrics)");
    train_cmd->add_flag("--quiet", ta.quiet);

    EvalArgs ea;
    auto* eval_cmd = app.add_subcommand("eval", "accuracy against the number of events");
    eval_cmd->add_option("--ckpt", ea.ckpt)->required();
    auto* esrc = eval_cmd->add_option("--data", ea.data, "dataset root (default: the training source)");
    eval_cmd->add_option("--synthetic", ea.synthetic)->excludes(esrc);
    eval_cmd->add_option("--lengths", ea.lengths)->capture_default_str();
    eval_cmd->add_option("--seed", ea.seed, "offset seed (default: the training seed)");
    eval_cmd->add_option("--repeats", ea.repeats, "offsets per test item")->capture_default_str();
    eval_cmd->add_option("--json", ea.json, "output path (default <ckpt>.eval.json)");

    StreamArgs sa;
    auto* stream_cmd = app.add_subcommand("stream", "classify events one at a time");
    stream_cmd->add_option("--ckpt", sa.ckpt)->required();
    stream_cmd->add_option("--listen", sa.listen, "serve TCP on <addr>:<port> instead of stdin");
    stream_cmd->add_option("--replay", sa.replay, "replay a recorded AER file");
    stream_cmd->add_option("--format", sa.format, "replay format, aer or aer16")->capture_default_str();
    stream_cmd->add_flag("--fast", sa.fast, "replay without timestamp pacing");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (*train_cmd) return cmd_train(ta);
        if (*eval_cmd) return cmd_eval(ea);
        if (*stream_cmd) return cmd_stream(sa);
    } catch (const UsageFailure& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return exit_usage;
    } catch (const TrainingDiverged& e) {
        std::cerr << "error: training diverged: " << e.what() << "\n";
        return exit_diverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_usage;
}
