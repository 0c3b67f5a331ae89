#pragma once

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bitpack.hpp"
#include "errors.hpp"
#include "fcn.hpp"
#include "kmeans.hpp"
#include "text.hpp"

namespace fcnz {

enum class QuantScope : std::uint8_t { per_layer = 0, global = 1 };

inline std::string to_string(QuantScope s) { return s == QuantScope::per_layer ? "per-layer" : "global"; }

inline QuantScope parse_quant_scope(const std::string& s) {
    if (s == "per-layer") return QuantScope::per_layer;
    if (s == "global") return QuantScope::global;
    throw ParameterError("unknown quantization scope '" + s + "'");
}

/// One codebook and the indices of every weight it covers.
template <std::floating_point T>
struct QuantizedScope {
    std::vector<T> centroids; // sorted, distinct
    std::vector<std::uint32_t> indices;

    [[nodiscard]] unsigned bit_width() const noexcept { return index_bits(centroids.size()); }

    friend bool operator==(const QuantizedScope&, const QuantizedScope&) = default;
};

/// Structure and biases of the source model plus codebook-coded weights.
///
/// Only weights of active channels are coded, in layer, filter, channel, tap
/// order; the skeleton's weights are all zero.
template <std::floating_point T>
struct QuantizedModel {
    FcnModel<T> skeleton;
    QuantScope scope = QuantScope::per_layer;
    std::vector<QuantizedScope<T>> scopes; // one per layer, or a single global one

    friend bool operator==(const QuantizedModel&, const QuantizedModel&) = default;
};

struct CompressionReport {
    std::uint64_t original_bits = 0;
    std::uint64_t compressed_bits = 0;
    double rate = 1.0;
    double size_fraction = 1.0;

    friend bool operator==(const CompressionReport&, const CompressionReport&) = default;
};

namespace detail {

inline CompressionReport make_report(std::uint64_t original_bits, std::uint64_t compressed_bits) {
    CompressionReport r{original_bits, compressed_bits, 0.0, 0.0};
    r.rate = static_cast<double>(original_bits) / static_cast<double>(compressed_bits);
    r.size_fraction = static_cast<double>(compressed_bits) / static_cast<double>(original_bits);
    return r;
}

inline std::size_t scope_of_layer(QuantScope scope, std::size_t layer) {
    return scope == QuantScope::per_layer ? layer : 0;
}

} // namespace detail

/// Storage of n weights as a k-entry codebook of `bits_per_value` floats plus
/// ceil(log2 k)-bit indices, against n raw values.
inline CompressionReport compression_rate(std::uint64_t n_weights, std::uint64_t k, unsigned bits_per_value = 32) {
    if (n_weights < 1 || k < 1) throw ParameterError("compression_rate: n_weights and k must be >= 1");
    return detail::make_report(n_weights * bits_per_value, k * bits_per_value + index_bits(k) * n_weights);
}

/// Size of a pruned-then-quantized model relative to the raw original:
/// (remaining * ceil(log2 k) + scopes * k * 32) / (original * 32).
/// Without k (no quantization) the weights stay at 32 bits.
inline CompressionReport size_report(std::uint64_t remaining_weights, std::uint64_t original_weights,
                                     std::optional<std::uint64_t> k, std::uint64_t scopes = 1) {
    if (original_weights == 0) throw ParameterError("size_report: original weight count is zero");
    if (remaining_weights > original_weights) throw ParameterError("size_report: remaining exceeds original");
    const std::uint64_t original_bits = original_weights * 32;
    if (!k) return detail::make_report(original_bits, remaining_weights * 32);
    if (*k < 1) throw ParameterError("size_report: k must be >= 1");
    return detail::make_report(original_bits, remaining_weights * index_bits(*k) + scopes * *k * 32);
}

/// Clusters the surviving weights of `model` with k-means, one codebook per
/// layer or one for the whole model. Biases stay raw.
template <std::floating_point T>
QuantizedModel<T> quantize_model(const FcnModel<T>& model, std::size_t k, QuantScope scope, std::uint64_t seed,
                                 KMeansOptions options = {}) {
    if (k < 1) throw ParameterError("quantize_model: k must be >= 1");
    model.validate();
    const std::size_t n_scopes = scope == QuantScope::per_layer ? model.layers.size() : 1;
    std::vector<std::vector<double>> values(n_scopes);
    for (std::size_t n = 0; n < model.layers.size(); ++n) {
        const auto& layer = model.layers[n];
        auto& bucket = values[detail::scope_of_layer(scope, n)];
        for (const auto& f : layer.filters) {
            for (std::size_t c = 0; c < f.channel_count(); ++c) {
                if (!f.active[c]) continue;
                for (T w : f.channel(c, layer.taps)) {
                    if (!std::isfinite(w)) throw DegenerateInputError("quantize_model: non-finite weight");
                    bucket.push_back(static_cast<double>(w));
                }
            }
        }
    }

    QuantizedModel<T> q;
    q.scope = scope;
    q.skeleton = model;
    for (auto& layer : q.skeleton.layers) {
        for (auto& f : layer.filters) std::ranges::fill(f.weights, T{});
    }
    for (std::size_t s = 0; s < n_scopes; ++s) {
        auto& out = q.scopes.emplace_back();
        if (values[s].empty()) continue;
        const auto fit = kmeans_fit(values[s], k, derive_seed(seed, {s}), options);
        // storage precision can merge neighbouring centroids
        std::vector<std::uint32_t> remap(fit.codebook.size());
        for (std::size_t c = 0; c < fit.codebook.size(); ++c) {
            const T v = static_cast<T>(fit.codebook.centroids[c]);
            if (out.centroids.empty() || out.centroids.back() != v) out.centroids.push_back(v);
            remap[c] = static_cast<std::uint32_t>(out.centroids.size() - 1);
        }
        out.indices.reserve(fit.assignments.size());
        for (auto a : fit.assignments) out.indices.push_back(remap[a]);
    }
    return q;
}

/// Rebuilds a dense-weight model; every coded weight becomes its centroid.
template <std::floating_point T>
FcnModel<T> dequantize(const QuantizedModel<T>& q) {
    FcnModel<T> model = q.skeleton;
    model.validate();
    const std::size_t expected_scopes = q.scope == QuantScope::per_layer ? model.layers.size() : 1;
    if (q.scopes.size() != expected_scopes) throw IntegrityError("dequantize: scope count does not match the model");
    std::vector<std::size_t> cursor(q.scopes.size(), 0);
    for (std::size_t n = 0; n < model.layers.size(); ++n) {
        auto& layer = model.layers[n];
        const std::size_t s = detail::scope_of_layer(q.scope, n);
        const auto& sc = q.scopes[s];
        for (auto& f : layer.filters) {
            for (std::size_t c = 0; c < f.channel_count(); ++c) {
                if (!f.active[c]) continue;
                for (T& w : f.channel(c, layer.taps)) {
                    if (cursor[s] >= sc.indices.size()) throw IntegrityError("dequantize: index stream too short");
                    const auto idx = sc.indices[cursor[s]++];
                    if (idx >= sc.centroids.size()) {
                        throw IntegrityError("dequantize: index " + std::to_string(idx) + " outside a codebook of " +
                                             std::to_string(sc.centroids.size()));
                    }
                    w = sc.centroids[idx];
                }
            }
        }
    }
    for (std::size_t s = 0; s < q.scopes.size(); ++s) {
        if (cursor[s] != q.scopes[s].indices.size()) throw IntegrityError("dequantize: index stream too long");
    }
    return model;
}

/// Bits of the coded weights (codebooks + indices) against 32-bit raw storage.
template <std::floating_point T>
CompressionReport compression_report(const QuantizedModel<T>& q) {
    std::uint64_t n = 0;
    std::uint64_t bits = 0;
    for (const auto& s : q.scopes) {
        n += s.indices.size();
        bits += s.centroids.size() * 32 + static_cast<std::uint64_t>(s.bit_width()) * s.indices.size();
    }
    if (n == 0) return {};
    return detail::make_report(n * 32, bits);
}

inline KeyValues to_key_values(const CompressionReport& r) {
    return {
        {"original_bits", std::to_string(r.original_bits)},
        {"compressed_bits", std::to_string(r.compressed_bits)},
        {"rate", exact(r.rate)},
        {"rate_display", fixed(r.rate, 2)},
        {"size_fraction", exact(r.size_fraction)},
        {"size_percent_display", fixed(100.0 * r.size_fraction, 2)},
    };
}

} // namespace fcnz
