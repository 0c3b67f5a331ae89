#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace fcnz {

/// Bits per index for a k-entry codebook: ceil(log2 k), 0 when k = 1.
constexpr unsigned index_bits(std::size_t k) noexcept {
    return k <= 1 ? 0U : static_cast<unsigned>(std::bit_width(k - 1));
}

/// Packs indices at `bit_width` bits each, least significant bit first,
/// zero-padding the final byte.
inline std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, unsigned bit_width) {
    if (bit_width > 32) throw ParameterError("pack_indices: bit width above 32");
    const std::uint64_t limit = std::uint64_t{1} << bit_width;
    std::vector<std::uint8_t> out((indices.size() * bit_width + 7) / 8, 0);
    std::size_t bit = 0;
    for (auto v : indices) {
        if (v >= limit) {
            throw ParameterError("pack_indices: index " + std::to_string(v) + " does not fit in " +
                                 std::to_string(bit_width) + " bits");
        }
        for (unsigned b = 0; b < bit_width; ++b, ++bit) {
            if ((v >> b) & 1U) out[bit / 8] |= static_cast<std::uint8_t>(1U << (bit % 8));
        }
    }
    return out;
}

inline std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, std::size_t count,
                                                 unsigned bit_width) {
    if (bit_width > 32) throw ParameterError("unpack_indices: bit width above 32");
    if (bytes.size() != (count * bit_width + 7) / 8) throw IntegrityError("unpack_indices: byte count mismatch");
    std::vector<std::uint32_t> out(count, 0);
    std::size_t bit = 0;
    for (auto& v : out) {
        for (unsigned b = 0; b < bit_width; ++b, ++bit) {
            v |= static_cast<std::uint32_t>((bytes[bit / 8] >> (bit % 8)) & 1U) << b;
        }
    }
    return out;
}

} // namespace fcnz
