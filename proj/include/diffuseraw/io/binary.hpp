#pragma once

// Little-endian scalar encoding for the binary containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "diffuseraw/error.hpp"

namespace diffuseraw::io {

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    U bits;
    std::memcpy(&bits, &value, sizeof(T));
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const std::string& what) {
    static_assert(std::is_trivially_copyable_v<T>);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
              std::conditional_t<sizeof(T) == 4, std::uint32_t,
              std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
    unsigned char buf[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) {
        throw format_error("truncated file while reading " + what);
    }
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
    T value;
    std::memcpy(&value, &bits, sizeof(T));
    return value;
}

inline void expect_magic(std::istream& is, const char (&magic)[5], const std::string& what) {
    char buf[4];
    if (!is.read(buf, 4)) throw format_error(what + ": truncated header");
    if (std::memcmp(buf, magic, 4) != 0) {
        throw format_error(what + ": bad magic, expected \"" + std::string(magic, 4) + "\"");
    }
}

} // namespace diffuseraw::io
