#pragma once

// Line protocol for live classification.
//
//   in:  "E <x> <y> <p> <t_us>"   one event
//        "R"                      reset the hidden state
//   out: "<t_us> <argmax> <p_0> ... <p_{C-1}>" per event, "ERR <reason>" on bad input

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

#include "inode/events/event.hpp"
#include "inode/model/online.hpp"

namespace inode::stream {

inline void append_number(std::string& out, std::uint64_t v) {
    char buf[24];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, r.ptr);
}

inline void append_number(std::string& out, double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, r.ptr);
}

inline void append_prediction(std::string& out, const Prediction& p) {
    append_number(out, p.t);
    out += ' ';
    append_number(out, static_cast<std::uint64_t>(p.label));
    for (double q : p.posterior) {
        out += ' ';
        append_number(out, q);
    }
    out += '\n';
}

enum class LineKind { event, reset, empty, malformed };

struct ParsedLine {
    LineKind kind = LineKind::malformed;
    Event event;
};

inline ParsedLine parse_line(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ' || line.back() == '\t')) line.remove_suffix(1);
    while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
    if (line.empty()) return {LineKind::empty, {}};
    if (line == "R") return {LineKind::reset, {}};
    if (line.front() != 'E') return {};
    line.remove_prefix(1);
    std::uint64_t v[4] = {};
    for (auto& field : v) {
        if (line.empty() || (line.front() != ' ' && line.front() != '\t')) return {};
        while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
        const auto r = std::from_chars(line.data(), line.data() + line.size(), field);
        if (r.ec != std::errc{} || r.ptr == line.data()) return {};
        line.remove_prefix(static_cast<std::size_t>(r.ptr - line.data()));
    }
    if (!line.empty()) return {};
    if (v[0] > 0xFFFF || v[1] > 0xFFFF || v[2] > 1) return {};
    ParsedLine out{LineKind::event, {}};
    out.event = Event{static_cast<std::uint16_t>(v[0]), static_cast<std::uint16_t>(v[1]),
                      static_cast<std::uint8_t>(v[2]), v[3]};
    return out;
}

// One stream's state: an online classifier fed by protocol lines.
class Session {
public:
    Session(const SequenceModel& model, TimeStats stats) : classifier_(model, stats) {}

    // Appends the response to `out`, if any.
    void handle(std::string_view line, std::string& out) {
        const auto parsed = parse_line(line);
        switch (parsed.kind) {
            case LineKind::event: append_prediction(out, classifier_.push(parsed.event)); break;
            case LineKind::reset: classifier_.reset(); break;
            case LineKind::empty: break;
            case LineKind::malformed: out += "ERR parse\n"; break;
        }
    }

    void handle_event(const Event& e, std::string& out) { append_prediction(out, classifier_.push(e)); }

    OnlineClassifier& classifier() noexcept { return classifier_; }

private:
    OnlineClassifier classifier_;
};

}  // namespace inode::stream
