#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "inode/events/dataset.hpp"
#include "inode/events/synth.hpp"
#include "inode/model/checkpoint.hpp"
#include "inode/train/config.hpp"
#include "inode/train/evaluate.hpp"
#include "inode/train/report.hpp"
#include "inode/train/train.hpp"

using namespace inode;
namespace fs = std::filesystem;

namespace {

TrainTest synthetic(const std::string& task_name, std::size_t n_train, std::size_t n_test, std::uint64_t seed = 0,
                    std::size_t events = 1000) {
    auto task = synth::task_from_name(task_name);
    task.n_train = n_train;
    task.n_test = n_test;
    task.events_per_sequence = events;
    return {synth::make_split(task, Split::train, seed), synth::make_split(task, Split::test, seed)};
}

RunConfig small_config() {
    RunConfig c;
    c.synthetic = "movedot2";
    c.hidden = 6;
    c.width = 16;
    c.s_len = 20;
    c.epochs = 1;
    c.eval_lengths = {5, 10, 20};
    return c;
}

// Minimal XML well-formedness: balanced, properly nested tags and quoted attributes.
bool balanced_xml(const std::string& doc) {
    std::vector<std::string> stack;
    std::size_t i = 0;
    while ((i = doc.find('<', i)) != std::string::npos) {
        const auto end = doc.find('>', i);
        if (end == std::string::npos) return false;
        std::string tag = doc.substr(i + 1, end - i - 1);
        i = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?' || tag[0] == '!') continue;
        std::size_t quotes = 0;
        for (char c : tag) quotes += c == '"';
        if (quotes % 2) return false;
        if (tag.back() == '/') continue;
        if (tag[0] == '/') {
            if (stack.empty() || stack.back() != tag.substr(1)) return false;
            stack.pop_back();
            continue;
        }
        stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
    }
    return stack.empty();
}

MetricsLog sample_log() {
    MetricsLog log;
    log.lengths = {10, 20, 100};
    log.records.push_back({1, 0.6931471805599453, 0.7, {0.5, 0.25, 1.0 / 3.0}, 1.5});
    log.records.push_back({2, 0.1 + 0.2, 1e-300, {0.0, 1.0, 0.125}, 2.5});
    return log;
}

}  // namespace

TEST(RunConfig, DefaultsFollowTheTrainingProtocol) {
    const RunConfig c;
    EXPECT_EQ(c.s_len, 100u);
    EXPECT_EQ(c.epochs, 300u);
    EXPECT_DOUBLE_EQ(c.lr, 1e-3);
    EXPECT_EQ(c.batch, 100u);
    EXPECT_DOUBLE_EQ(c.rho, 1.0);
    EXPECT_DOUBLE_EQ(c.d_max, 1.0);
    EXPECT_EQ(c.hidden, 30u);
    EXPECT_EQ(c.eval_lengths, (std::vector<std::size_t>{10, 20, 30, 40, 50, 60, 70, 80, 90, 100}));
}

TEST(RunConfig, JsonRoundTrip) {
    RunConfig c = small_config();
    c.model = ModelKind::bilstm;
    c.rho = 0.4;
    c.seed = 0xFFFFFFFFFFFFull;
    c.clip_norm = 2.5;
    c.learn_h0 = true;
    c.eval_repeats = 3;
    c.n_train = 77;
    c.classes = {"0", "1"};
    const auto back = run_config_from_json(nlohmann::json::parse(to_json(c).dump()));
    EXPECT_EQ(back, c);
}

TEST(RunConfig, InvariantsRejected) {
    auto bad = [](auto mutate) {
        RunConfig c = small_config();
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](RunConfig& c) { c.s_len = 0; }).validate(), InputError);
    EXPECT_THROW(bad([](RunConfig& c) { c.rho = 0.0; }).validate(), InputError);
    EXPECT_THROW(bad([](RunConfig& c) { c.rho = 1.2; }).validate(), InputError);
    EXPECT_THROW(bad([](RunConfig& c) { c.data = "x"; }).validate(), InputError);
    EXPECT_THROW(bad([](RunConfig& c) { c.synthetic.clear(); }).validate(), InputError);
    EXPECT_NO_THROW(small_config().validate());
}

TEST(RunConfig, BatchScalesWithFraction) {
    RunConfig c;
    c.batch = 100;
    c.rho = 0.2;
    EXPECT_EQ(c.effective_batch(), 20u);
    c.rho = 0.4;
    EXPECT_EQ(c.effective_batch(), 40u);
    c.batch = 1000;
    c.rho = 0.2;
    EXPECT_EQ(c.effective_batch(), 200u);
    c.batch = 2;
    c.rho = 0.1;
    EXPECT_EQ(c.effective_batch(), 1u);
}

TEST(Train, OneEpochStepCount) {
    const auto data = synthetic("movedot2", 10, 0, 0, 200);
    for (std::size_t b : {100u, 10u, 3u, 1u}) {
        RunConfig c = small_config();
        c.batch = b;
        const auto r = train(c, data);
        EXPECT_EQ(r.steps_taken, (10 + b - 1) / b) << "batch " << b;
        ASSERT_EQ(r.log.records.size(), 1u);
        EXPECT_TRUE(r.log.records[0].accuracy.empty());
    }
}

TEST(Train, FractionUsesCeilAndScaledBatch) {
    const auto data = synthetic("movedot2", 47, 0, 0, 200);
    RunConfig c = small_config();
    c.rho = 0.2;
    c.batch = 10;
    const auto r = train(c, data);
    EXPECT_EQ(r.train_size, 10u);  // ceil(9.4)
    EXPECT_EQ(r.steps_taken, 5u);  // batch 2
}

TEST(Train, QuantileComesFromTheFraction) {
    const auto data = synthetic("movedot2", 40, 0, 0, 200);
    RunConfig c = small_config();
    c.rho = 0.4;
    const auto r = train(c, data);
    EXPECT_DOUBLE_EQ(r.stats.d_q, compute_dq(subset_fraction(data.train, 0.4, c.seed), c.d_max).d_q);
}

TEST(Train, LossDecreasesOverTwentyEpochs) {
    const auto data = synthetic("movedot2", 200, 50);
    RunConfig c = small_config();
    c.epochs = 20;
    c.batch = 20;
    c.lr = 5e-3;
    const auto r = train(c, data);
    ASSERT_EQ(r.log.records.size(), 20u);
    EXPECT_LT(r.log.records.back().train_loss, r.log.records.front().train_loss);
    for (const auto& rec : r.log.records) {
        EXPECT_EQ(rec.accuracy.size(), 3u);
        for (double a : rec.accuracy) {
            EXPECT_GE(a, 0.0);
            EXPECT_LE(a, 1.0);
        }
        EXPECT_TRUE(std::isfinite(rec.test_loss));
    }
}

TEST(Train, BestCheckpointHasTheBestLongestAccuracy) {
    const auto data = synthetic("movedot2", 60, 40);
    RunConfig c = small_config();
    c.epochs = 6;
    c.batch = 10;
    c.lr = 1e-2;
    const auto r = train(c, data);
    double best = -1.0;
    std::size_t best_epoch = 0;
    for (const auto& rec : r.log.records) {
        if (rec.accuracy.back() > best) {
            best = rec.accuracy.back();
            best_epoch = rec.epoch;
        }
    }
    EXPECT_EQ(r.best_epoch, best_epoch);

    EvalOptions o;
    o.lengths = c.eval_lengths;
    o.seed = eval_seed(c.seed);
    EXPECT_DOUBLE_EQ(evaluate(*r.best_model, r.stats, data.test, o).accuracy.back(), best);
    EXPECT_EQ(evaluate(*r.final_model, r.stats, data.test, o).accuracy, r.log.records.back().accuracy);
}

TEST(Train, ObserverCanStopEarly) {
    const auto data = synthetic("movedot2", 20, 10, 0, 200);
    RunConfig c = small_config();
    c.epochs = 10;
    std::size_t calls = 0;
    const auto r = train(c, data, [&](const MetricsRecord&, const SequenceModel&) { return ++calls < 3; });
    EXPECT_EQ(calls, 3u);
    EXPECT_EQ(r.log.records.size(), 3u);
}

TEST(Train, IdenticalConfigIsBitReproducible) {
    const auto data = synthetic("movedot3", 60, 30, 4, 300);
    RunConfig c = small_config();
    c.synthetic = "movedot3";
    c.seed = 4;
    c.epochs = 3;
    c.batch = 16;
    const auto a = train(c, data);
    const auto b = train(c, data);
    EXPECT_EQ(metrics_csv(a.log), metrics_csv(b.log));
    EXPECT_EQ(a.final_model->params(), b.final_model->params());

    c.seed = 5;
    EXPECT_NE(metrics_csv(train(c, data).log), metrics_csv(a.log));
}

TEST(Train, EveryModelKindTrains) {
    const auto data = synthetic("movedot2", 20, 10, 0, 200);
    for (auto kind : {ModelKind::inode, ModelKind::lstm, ModelKind::bilstm}) {
        RunConfig c = small_config();
        c.model = kind;
        c.epochs = 2;
        const auto r = train(c, data);
        EXPECT_EQ(r.final_model->spec().kind, kind);
        EXPECT_EQ(r.log.records.size(), 2u);
        EXPECT_TRUE(std::isfinite(r.log.records.back().train_loss));
    }
}

TEST(Evaluate, UntrainedTenClassModelIsNearChance) {
    const auto data = synthetic("movedot10", 0, 500, 0);
    RunConfig c;
    c.synthetic = "movedot10";
    const auto model = create_model(model_spec_for(c, 10, data.test.dims), 0);
    const auto stats = compute_dq(data.test, 1.0);
    EvalOptions o;
    o.seed = 1;
    const auto res = evaluate(*model, stats, data.test, o);
    for (std::size_t k = 0; k < res.accuracy.size(); ++k) {
        EXPECT_GE(res.accuracy[k], 0.05) << "n=" << res.lengths[k];
        EXPECT_LE(res.accuracy[k], 0.15) << "n=" << res.lengths[k];
    }
}

TEST(Evaluate, ConstantPredictorScoresClassPrevalence) {
    auto data = synthetic("movedot3", 0, 50, 2, 300);
    // Unbalance the labels so prevalence is not 1/C.
    for (std::size_t i = 0; i < 11; ++i) data.test.sequences[i * 3 + 1].label = 0;
    RunConfig c;
    c.synthetic = "movedot3";
    c.hidden = 5;
    c.width = 8;
    for (auto kind : {ModelKind::inode, ModelKind::lstm, ModelKind::bilstm}) {
        c.model = kind;
        auto model = create_model(model_spec_for(c, 3, data.test.dims), 1);
        auto& params = model->params();
        for (std::size_t i = 0; i < params.size(); ++i) params[i].value.fill(0.0);
        params[params.index_of(kind == ModelKind::inode ? "fcc.b" : "cls.b")].value(0, 0) = 1.0;

        std::size_t zeros = 0;
        for (const auto& s : data.test.sequences) zeros += s.label == 0;
        const double prevalence = static_cast<double>(zeros) / static_cast<double>(data.test.size());

        EvalOptions o;
        o.lengths = {1, 7, 30};
        const auto res = evaluate(*model, compute_dq(data.test, 1.0), data.test, o);
        for (double a : res.accuracy) EXPECT_DOUBLE_EQ(a, prevalence) << to_string(kind);
    }
}

TEST(Evaluate, RepeatsAverageDifferentOffsets) {
    const auto data = synthetic("movedot2", 0, 30, 0, 300);
    RunConfig c;
    c.synthetic = "movedot2";
    c.hidden = 5;
    c.width = 8;
    const auto model = create_model(model_spec_for(c, 2, data.test.dims), 3);
    const auto stats = compute_dq(data.test, 1.0);
    EvalOptions o;
    o.lengths = {10, 50};
    const auto once = evaluate(*model, stats, data.test, o);
    EXPECT_EQ(evaluate(*model, stats, data.test, o).accuracy, once.accuracy);
    ASSERT_EQ(once.items.size(), 30u);

    o.repeats = 4;
    const auto four = evaluate(*model, stats, data.test, o);
    EXPECT_EQ(four.items.size(), 30u);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_EQ(four.items[i].offset, once.items[i].offset);
    for (double a : four.accuracy) EXPECT_DOUBLE_EQ(a * 120.0, std::round(a * 120.0));
}

TEST(Evaluate, OffsetsAreSeededAndInRange) {
    const auto data = synthetic("movedot2", 0, 20, 0, 150);
    for (std::size_t i = 0; i < data.test.size(); ++i) {
        const auto& s = data.test.sequences[i];
        const auto off = eval_offset(s, 100, 9, 0, i);
        EXPECT_EQ(off, eval_offset(s, 100, 9, 0, i));
        EXPECT_LE(off + 100, s.size() - 1);
    }
}

TEST(SplitIsolation, SyntheticIdsAreDisjoint) {
    const auto data = synthetic("movedot4", 100, 40, 7, 50);
    std::set<std::string> train_ids;
    for (const auto& s : data.train.sequences) train_ids.insert(s.id);
    EXPECT_EQ(train_ids.size(), 100u);
    for (const auto& s : data.test.sequences) EXPECT_EQ(train_ids.count(s.id), 0u) << s.id;
}

TEST(SplitIsolation, EvaluationSeesOnlyTestItems) {
    const auto root = fs::temp_directory_path() / "inode_split_isolation";
    fs::remove_all(root);
    const auto source = synthetic("movedot2", 40, 0, 3, 120);
    for (const auto& s : source.train.sequences) {
        const auto dir = root / (s.label == 0 ? "left" : "right");
        fs::create_directories(dir);
        write_sequence_file(dir / (std::to_string(&s - source.train.sequences.data()) + ".bin"), s, aer::Format::aer);
    }
    RunConfig c = small_config();
    c.synthetic.clear();
    c.data = root.string();
    c.epochs = 1;
    const auto data = prepare_data(c);
    EXPECT_EQ(data.train.size(), 36u);
    EXPECT_EQ(data.test.size(), 4u);
    std::set<std::string> train_ids;
    for (const auto& s : data.train.sequences) train_ids.insert(s.id);
    std::set<std::string> test_ids;
    for (const auto& s : data.test.sequences) {
        EXPECT_EQ(train_ids.count(s.id), 0u) << s.id;
        test_ids.insert(s.id);
    }
    const auto r = train(c, data);
    EvalOptions o;
    o.lengths = {10};
    for (const auto& item : evaluate(*r.final_model, r.stats, data.test, o).items)
        EXPECT_EQ(test_ids.count(item.id), 1u) << item.id;
    fs::remove_all(root);
}

TEST(Report, CsvRoundTrip) {
    const auto log = sample_log();
    const auto back = parse_metrics_csv(metrics_csv(log));
    EXPECT_EQ(back.lengths, log.lengths);
    ASSERT_EQ(back.records.size(), log.records.size());
    for (std::size_t i = 0; i < log.records.size(); ++i) EXPECT_EQ(back.records[i], log.records[i]);
}

TEST(Report, CsvShape) {
    MetricsLog log;
    log.lengths = {10, 20, 30, 40, 50, 60, 70, 80, 90, 100};
    log.records.push_back({1, 1.0, 2.0, std::vector<double>(10, 0.5), 0.0});
    const auto csv = metrics_csv(log);
    EXPECT_EQ(csv.substr(0, csv.find('\n')),
              "epoch,train_loss,test_loss,acc@10,acc@20,acc@30,acc@40,acc@50,acc@60,acc@70,acc@80,acc@90,acc@100");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 2);
    EXPECT_EQ(csv.find("0.0"), std::string::npos);  // wall time stays out of the CSV
}

TEST(Report, JsonCarriesEveryField) {
    const auto log = sample_log();
    const auto j = nlohmann::json::parse(metrics_json(log).dump());
    EXPECT_EQ(j["lengths"].get<std::vector<std::size_t>>(), log.lengths);
    ASSERT_EQ(j["records"].size(), 2u);
    EXPECT_EQ(j["records"][1]["train_loss"].get<double>(), 0.1 + 0.2);
    EXPECT_EQ(j["records"][0]["accuracy"]["100"].get<double>(), 1.0 / 3.0);
    EXPECT_EQ(j["records"][1]["wall_seconds"].get<double>(), 2.5);
}

TEST(Report, SvgIsWellFormed) {
    const auto svg = metrics_svg(sample_log());
    EXPECT_TRUE(balanced_xml(svg));
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    std::size_t polylines = 0;
    for (std::size_t i = 0; (i = svg.find("<polyline", i)) != std::string::npos; ++i) ++polylines;
    EXPECT_EQ(polylines, 2u + 3u);

    MetricsLog one;
    one.lengths = {10};
    one.records.push_back({1, std::nan(""), 0.5, {0.5}, 0.0});
    EXPECT_TRUE(balanced_xml(metrics_svg(one)));
    EXPECT_FALSE(balanced_xml("<svg><g></svg></g>"));
}

TEST(Report, WritesThreeFilesAndRejectsEmptyLog) {
    const auto stem = fs::temp_directory_path() / "inode_report_test";
    write_report(sample_log(), stem);
    for (const char* ext : {".csv", ".json", ".svg"}) {
        EXPECT_TRUE(fs::exists(stem.string() + ext)) << ext;
        fs::remove(stem.string() + ext);
    }
    MetricsLog empty;
    EXPECT_THROW(write_report(empty, stem), UsageError);
}

TEST(PrepareData, ClassFilterAndCapsOnRealData) {
    const auto root = fs::temp_directory_path() / "inode_class_filter";
    fs::remove_all(root);
    const auto source = synthetic("movedot3", 60, 0, 5, 80);
    for (std::size_t i = 0; i < source.train.size(); ++i) {
        const auto& s = source.train.sequences[i];
        for (const char* split : {"Train", "Test"}) {
            const auto dir = root / split / std::to_string(s.label);
            fs::create_directories(dir);
            write_sequence_file(dir / (std::to_string(i) + ".bin"), s, aer::Format::aer);
        }
    }
    RunConfig c = small_config();
    c.synthetic.clear();
    c.data = root.string();
    c.classes = {"0", "2"};
    auto data = prepare_data(c);
    EXPECT_EQ(data.train.class_names, (std::vector<std::string>{"0", "2"}));
    EXPECT_EQ(data.train.size(), 40u);
    EXPECT_EQ(data.test.size(), 40u);

    c.n_train = 25;
    c.n_test = 7;
    data = prepare_data(c);
    EXPECT_EQ(data.train.size(), 25u);
    EXPECT_EQ(data.test.size(), 7u);
    for (const auto& s : data.train.sequences) EXPECT_TRUE(s.label == 0 || s.label == 1);
    EXPECT_EQ(prepare_data(c).train.sequences, data.train.sequences);

    c.classes = {"7"};
    EXPECT_THROW(prepare_data(c), DatasetError);
    fs::remove_all(root);
}
