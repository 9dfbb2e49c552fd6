#pragma once

// ParamStore binary layout (all integers little-endian):
//
//   "INODE1"                      6 bytes magic
//   version                       u32
//   record count                  u32
//   per record:
//     name length                 u32
//     name                        UTF-8 bytes
//     rows, cols                  u32, u32
//     payload                     rows*cols f64, row-major
//
// Model checkpoints append their own sections after the last record.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "inode/errors.hpp"
#include "inode/numerics/param_store.hpp"

namespace inode::binio {

inline constexpr std::array<char, 6> magic = {'I', 'N', 'O', 'D', 'E', '1'};
inline constexpr std::uint32_t format_version = 1;

inline void put_u32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_f64(std::ostream& os, double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_bytes(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void read_exact(std::istream& is, void* dst, std::size_t n, const char* what) {
    is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError(std::string("truncated checkpoint: ") + what);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    read_exact(is, b, 4, what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline double get_f64(std::istream& is, const char* what) {
    unsigned char b[8];
    read_exact(is, b, 8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

inline std::string get_bytes(std::istream& is, const char* what, std::uint32_t limit = 1u << 30) {
    const auto n = get_u32(is, what);
    if (n > limit) throw FormatError(std::string("implausible length in ") + what);
    std::string s(n, '\0');
    if (n > 0) read_exact(is, s.data(), n, what);
    return s;
}

inline void write_params(std::ostream& os, const ParamStore& store) {
    os.write(magic.data(), magic.size());
    put_u32(os, format_version);
    put_u32(os, static_cast<std::uint32_t>(store.size()));
    for (const auto& p : store) {
        put_bytes(os, p.name);
        put_u32(os, static_cast<std::uint32_t>(p.value.rows()));
        put_u32(os, static_cast<std::uint32_t>(p.value.cols()));
        for (double v : p.value.values()) put_f64(os, v);
    }
    if (!os) throw FormatError("failed writing parameters");
}

inline ParamStore read_params(std::istream& is) {
    std::array<char, 6> head{};
    read_exact(is, head.data(), head.size(), "magic");
    if (head != magic) throw FormatError("bad checkpoint magic");
    const auto version = get_u32(is, "version");
    if (version != format_version) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const auto count = get_u32(is, "record count");
    ParamStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        auto name = get_bytes(is, "parameter name", 4096);
        const auto rows = get_u32(is, "rows");
        const auto cols = get_u32(is, "cols");
        if (static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) throw FormatError("implausible parameter size");
        Matrix m(rows, cols);
        for (double& v : m.values()) v = get_f64(is, "payload");
        store.add(std::move(name), std::move(m));
    }
    return store;
}

}  // namespace inode::binio
