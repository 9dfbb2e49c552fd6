#pragma once

// AER codecs.
//
// AER (5-byte records, N-MNIST layout):
//   byte0        x
//   byte1        y
//   byte2 bit7   polarity
//   byte2[6:0], byte3, byte4   23-bit big-endian timestamp (us)
// The 23-bit clock wraps; a drop of more than 2^22 between consecutive
// records is taken as a wrap and adds 2^23 to every later timestamp.
//
// AER16 (9-byte records, for sensors wider than 256 px):
//   x u16 LE, y u16 LE, p u8, t u32 LE

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inode/errors.hpp"
#include "inode/events/event.hpp"
#include "inode/log.hpp"

namespace inode::aer {

inline constexpr std::size_t record_bytes = 5;
inline constexpr std::size_t record16_bytes = 9;
inline constexpr std::uint64_t wrap_period = 1ull << 23;
inline constexpr std::uint64_t wrap_threshold = 1ull << 22;

enum class Format { aer, aer16 };

namespace detail {

inline void sort_if_needed(std::vector<Event>& events, const char* what) {
    const bool sorted =
        std::is_sorted(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    if (!sorted) {
        warn(std::string(what) + ": timestamps not monotone; stable-sorting by time");
        std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
    }
}

}  // namespace detail

inline EventSequence parse_aer(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % record_bytes != 0) {
        throw FormatError("AER payload of " + std::to_string(bytes.size()) + " bytes has a trailing partial record");
    }
    EventSequence seq;
    seq.events.reserve(bytes.size() / record_bytes);
    std::uint64_t offset = 0;
    std::uint64_t prev_raw = 0;
    for (std::size_t i = 0; i < bytes.size(); i += record_bytes) {
        const auto* r = bytes.data() + i;
        const std::uint64_t raw = (static_cast<std::uint64_t>(r[2] & 0x7F) << 16) |
                                  (static_cast<std::uint64_t>(r[3]) << 8) | static_cast<std::uint64_t>(r[4]);
        if (i > 0 && prev_raw > raw && prev_raw - raw > wrap_threshold) offset += wrap_period;
        prev_raw = raw;
        seq.events.push_back(Event{r[0], r[1], static_cast<std::uint8_t>(r[2] >> 7), raw + offset});
    }
    detail::sort_if_needed(seq.events, "parse_aer");
    return seq;
}

inline std::vector<std::uint8_t> write_aer(const EventSequence& seq) {
    std::vector<std::uint8_t> out;
    out.reserve(seq.events.size() * record_bytes);
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const Event& e = seq.events[i];
        if (e.x > 0xFF || e.y > 0xFF || e.p > 1) {
            throw EncodeError("event " + std::to_string(i) + " does not fit AER (x,y < 256, p in {0,1})");
        }
        if (i == 0 ? e.t >= wrap_period
                   : (e.t < seq.events[i - 1].t || e.t - seq.events[i - 1].t >= wrap_threshold)) {
            throw EncodeError("event " + std::to_string(i) + " timestamp cannot be recovered from a 23-bit clock");
        }
        const std::uint64_t raw = e.t % wrap_period;
        out.push_back(static_cast<std::uint8_t>(e.x));
        out.push_back(static_cast<std::uint8_t>(e.y));
        out.push_back(static_cast<std::uint8_t>((e.p << 7) | ((raw >> 16) & 0x7F)));
        out.push_back(static_cast<std::uint8_t>(raw >> 8));
        out.push_back(static_cast<std::uint8_t>(raw));
    }
    return out;
}

inline EventSequence parse_aer16(std::span<const std::uint8_t> bytes) {
    if (bytes.size() % record16_bytes != 0) {
        throw FormatError("AER16 payload of " + std::to_string(bytes.size()) +
                          " bytes has a trailing partial record");
    }
    EventSequence seq;
    seq.events.reserve(bytes.size() / record16_bytes);
    for (std::size_t i = 0; i < bytes.size(); i += record16_bytes) {
        const auto* r = bytes.data() + i;
        Event e;
        e.x = static_cast<std::uint16_t>(r[0] | (r[1] << 8));
        e.y = static_cast<std::uint16_t>(r[2] | (r[3] << 8));
        e.p = r[4];
        if (e.p > 1) throw FormatError("AER16 record " + std::to_string(i / record16_bytes) + ": polarity > 1");
        e.t = static_cast<std::uint64_t>(r[5]) | (static_cast<std::uint64_t>(r[6]) << 8) |
              (static_cast<std::uint64_t>(r[7]) << 16) | (static_cast<std::uint64_t>(r[8]) << 24);
        seq.events.push_back(e);
    }
    detail::sort_if_needed(seq.events, "parse_aer16");
    return seq;
}

inline std::vector<std::uint8_t> write_aer16(const EventSequence& seq) {
    std::vector<std::uint8_t> out;
    out.reserve(seq.events.size() * record16_bytes);
    for (std::size_t i = 0; i < seq.events.size(); ++i) {
        const Event& e = seq.events[i];
        if (e.p > 1 || e.t > 0xFFFFFFFFull) {
            throw EncodeError("event " + std::to_string(i) + " does not fit AER16");
        }
        out.push_back(static_cast<std::uint8_t>(e.x));
        out.push_back(static_cast<std::uint8_t>(e.x >> 8));
        out.push_back(static_cast<std::uint8_t>(e.y));
        out.push_back(static_cast<std::uint8_t>(e.y >> 8));
        out.push_back(e.p);
        for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(e.t >> (8 * k)));
    }
    return out;
}

inline EventSequence parse(std::span<const std::uint8_t> bytes, Format f) {
    return f == Format::aer ? parse_aer(bytes) : parse_aer16(bytes);
}

inline std::vector<std::uint8_t> write(const EventSequence& seq, Format f) {
    return f == Format::aer ? write_aer(seq) : write_aer16(seq);
}

inline Format format_from_string(const std::string& s) {
    if (s == "aer") return Format::aer;
    if (s == "aer16") return Format::aer16;
    throw InputError("unknown event format '" + s + "' (expected aer or aer16)");
}

}  // namespace inode::aer
