#pragma once

// Metrics output. The CSV holds no wall-clock values so identical runs produce
// identical bytes; numbers use the shortest round-trip representation.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "inode/errors.hpp"
#include "inode/train/train.hpp"

namespace inode {

inline std::string format_double(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc{} || r.ptr != s.data() + s.size()) throw FormatError("bad number '" + std::string(s) + "'");
    return v;
}

inline std::string metrics_csv(const MetricsLog& log) {
    std::string out = "epoch,train_loss,test_loss";
    for (auto n : log.lengths) out += ",acc@" + std::to_string(n);
    out += '\n';
    for (const auto& r : log.records) {
        out += std::to_string(r.epoch) + ',' + format_double(r.train_loss) + ',' + format_double(r.test_loss);
        for (std::size_t k = 0; k < log.lengths.size(); ++k)
            out += ',' + (k < r.accuracy.size() ? format_double(r.accuracy[k]) : std::string());
        out += '\n';
    }
    return out;
}

inline MetricsLog parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    auto split = [](const std::string& l) {
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(l);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!l.empty() && l.back() == ',') cells.emplace_back();
        return cells;
    };
    if (!std::getline(in, line)) throw FormatError("empty metrics CSV");
    const auto head = split(line);
    if (head.size() < 3 || head[0] != "epoch" || head[1] != "train_loss" || head[2] != "test_loss")
        throw FormatError("unexpected metrics CSV header");
    MetricsLog log;
    for (std::size_t k = 3; k < head.size(); ++k) {
        if (head[k].rfind("acc@", 0) != 0) throw FormatError("unexpected column " + head[k]);
        log.lengths.push_back(static_cast<std::size_t>(parse_double(head[k].substr(4))));
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line);
        if (cells.size() != head.size()) throw FormatError("metrics row has " + std::to_string(cells.size()) + " cells");
        MetricsRecord r;
        r.epoch = static_cast<std::size_t>(parse_double(cells[0]));
        r.train_loss = parse_double(cells[1]);
        r.test_loss = parse_double(cells[2]);
        for (std::size_t k = 3; k < cells.size(); ++k)
            if (!cells[k].empty()) r.accuracy.push_back(parse_double(cells[k]));
        log.records.push_back(std::move(r));
    }
    return log;
}

inline nlohmann::json metrics_json(const MetricsLog& log) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : log.records) {
        nlohmann::json acc = nlohmann::json::object();
        for (std::size_t k = 0; k < r.accuracy.size() && k < log.lengths.size(); ++k)
            acc[std::to_string(log.lengths[k])] = r.accuracy[k];
        records.push_back({{"epoch", r.epoch},
                           {"train_loss", r.train_loss},
                           {"test_loss", r.test_loss},
                           {"accuracy", acc},
                           {"wall_seconds", r.wall_seconds}});
    }
    return {{"lengths", log.lengths}, {"records", records}};
}

namespace detail {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> y;
};

inline std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// One panel of line plots against epoch, placed at (ox, oy).
inline std::string panel(const std::string& title, const std::vector<double>& x, const std::vector<Series>& series,
                         double ox, double oy, double w, double h) {
    double lo = 0.0, hi = 1.0;
    bool first = true;
    for (const auto& s : series)
        for (double v : s.y) {
            if (!std::isfinite(v)) continue;
            lo = first ? v : std::min(lo, v);
            hi = first ? v : std::max(hi, v);
            first = false;
        }
    if (hi - lo < 1e-12) hi = lo + 1.0;
    const double x0 = x.empty() ? 0.0 : x.front(), x1 = x.size() < 2 ? x0 + 1.0 : x.back();
    auto px = [&](double v) { return ox + 50 + (v - x0) / (x1 - x0) * (w - 70); };
    auto py = [&](double v) { return oy + h - 30 - (v - lo) / (hi - lo) * (h - 60); };

    std::string out = "<g>\n";
    out += "<text x=\"" + fmt(ox + w / 2) + "\" y=\"" + fmt(oy + 18) + "\" text-anchor=\"middle\">" +
           escape_xml(title) + "</text>\n";
    out += "<rect x=\"" + fmt(ox + 50) + "\" y=\"" + fmt(oy + 30) + "\" width=\"" + fmt(w - 70) + "\" height=\"" +
           fmt(h - 60) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    out += "<text x=\"" + fmt(ox + 45) + "\" y=\"" + fmt(py(hi) + 4) + "\" text-anchor=\"end\">" +
           escape_xml(format_double(hi)) + "</text>\n";
    out += "<text x=\"" + fmt(ox + 45) + "\" y=\"" + fmt(py(lo) + 4) + "\" text-anchor=\"end\">" +
           escape_xml(format_double(lo)) + "</text>\n";
    out += "<text x=\"" + fmt(ox + w / 2) + "\" y=\"" + fmt(oy + h - 8) + "\" text-anchor=\"middle\">epoch</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        std::string pts;
        for (std::size_t i = 0; i < x.size() && i < series[s].y.size(); ++i) {
            if (!std::isfinite(series[s].y[i])) continue;
            pts += fmt(px(x[i])) + "," + fmt(py(series[s].y[i])) + " ";
        }
        out += "<polyline fill=\"none\" stroke=\"" + series[s].color + "\" stroke-width=\"1.5\" points=\"" + pts +
               "\"/>\n";
        out += "<text x=\"" + fmt(ox + w - 15) + "\" y=\"" + fmt(oy + 45 + 14.0 * static_cast<double>(s)) +
               "\" text-anchor=\"end\" fill=\"" + series[s].color + "\">" + escape_xml(series[s].label) + "</text>\n";
    }
    out += "</g>\n";
    return out;
}

}  // namespace detail

inline std::string metrics_svg(const MetricsLog& log) {
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    std::vector<double> x;
    detail::Series train{"train", palette[0], {}}, test{"test", palette[1], {}};
    std::vector<detail::Series> acc;
    for (std::size_t k = 0; k < log.lengths.size(); ++k)
        acc.push_back({"n=" + std::to_string(log.lengths[k]), palette[k % 10], {}});
    for (const auto& r : log.records) {
        x.push_back(static_cast<double>(r.epoch));
        train.y.push_back(r.train_loss);
        test.y.push_back(r.test_loss);
        for (std::size_t k = 0; k < acc.size(); ++k)
            acc[k].y.push_back(k < r.accuracy.size() ? r.accuracy[k] : std::nan(""));
    }
    std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"960\" height=\"360\" font-family=\"sans-serif\" "
           "font-size=\"11\">\n";
    out += "<rect width=\"960\" height=\"360\" fill=\"white\"/>\n";
    out += detail::panel("loss", x, {train, test}, 0, 0, 480, 360);
    out += detail::panel("test accuracy", x, acc, 480, 0, 480, 360);
    out += "</svg>\n";
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
    if (!out) throw FormatError("failed writing " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Writes <stem>.csv, <stem>.json and <stem>.svg.
inline void write_report(const MetricsLog& log, const std::filesystem::path& stem) {
    if (log.records.empty()) throw UsageError("report needs at least one record");
    write_text(stem.string() + ".csv", metrics_csv(log));
    write_text(stem.string() + ".json", metrics_json(log).dump(2) + "\n");
    write_text(stem.string() + ".svg", metrics_svg(log));
}

}  // namespace inode
