#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "morphwin/tensor.hpp"

// Little-endian primitive encoding shared by the checkpoint and volume formats.
namespace morphwin::binary {

template <class U>
void put_le(std::ostream& os, U value) {
    static_assert(std::is_unsigned_v<U>);
    unsigned char bytes[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(U));
}

inline void put_f32(std::ostream& os, float v) { put_le(os, std::bit_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& os, double v) { put_le(os, std::bit_cast<std::uint64_t>(v)); }

template <class U>
U get_le(std::istream& is, const char* what) {
    unsigned char bytes[sizeof(U)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(U))) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
    return value;
}

inline float get_f32(std::istream& is, const char* what) { return std::bit_cast<float>(get_le<std::uint32_t>(is, what)); }
inline double get_f64(std::istream& is, const char* what) { return std::bit_cast<double>(get_le<std::uint64_t>(is, what)); }

inline void expect_magic(std::istream& is, const std::string& magic) {
    std::string got(magic.size(), '\0');
    if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw FormatError("bad magic: expected \"" + magic + "\"");
    }
}

}  // namespace morphwin::binary
