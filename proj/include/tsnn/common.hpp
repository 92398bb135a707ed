#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace tsnn {

// Shape disagreement between operands; the message names both shapes.
class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or missing input data (files, manifests, model blobs).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace io {

// All on-disk formats are little-endian regardless of host order.

inline void write_u8(std::ostream& os, std::uint8_t v) {
    os.put(static_cast<char>(v));
}

inline void write_u16(std::ostream& os, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline void write_f32(std::ostream& os, float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    write_u32(os, u);
}

inline std::uint8_t read_u8(std::istream& is, const char* what) {
    int c = is.get();
    if (c == EOF) throw DataError(std::string("truncated input while reading ") + what);
    return static_cast<std::uint8_t>(c);
}

inline std::uint16_t read_u16(std::istream& is, const char* what) {
    char b[2];
    if (!is.read(b, 2)) throw DataError(std::string("truncated input while reading ") + what);
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[0]) |
                                      (static_cast<std::uint8_t>(b[1]) << 8));
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    char b[4];
    if (!is.read(b, 4)) throw DataError(std::string("truncated input while reading ") + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
}

inline float read_f32(std::istream& is, const char* what) {
    std::uint32_t u = read_u32(is, what);
    float v;
    std::memcpy(&v, &u, 4);
    return v;
}

inline void expect_magic(std::istream& is, const char* magic, const char* format) {
    char b[4];
    if (!is.read(b, 4))
        throw DataError(std::string(format) + ": file too short for magic");
    if (std::memcmp(b, magic, 4) != 0)
        throw DataError(std::string(format) + ": bad magic (expected \"" + magic + "\")");
}

} // namespace io
} // namespace tsnn
