#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bitpack.hpp"
#include "errors.hpp"
#include "fcn.hpp"
#include "quantization.hpp"

// File layout, little-endian throughout:
//
//   "FCNZ" | u16 version | u16 flags (1 quantized, 2 pruned, 4 biases) | u64 seed
//   u32 n_specs, n_specs x (u32 filters, u32 taps, u8 activation)      unpruned architecture
//   u32 n_layers, per layer: u32 in_channels, u32 taps, u8 activation, u32 n_filters,
//     per filter: u32 id, u32 n_channels, n_channels x u32 input, ceil(n_channels/8) active-bitmap bytes
//   raw payload:       per filter: f32 weights (every stored channel), [f32 bias]
//   quantized payload: u8 scope, u32 n_scopes,
//                        per scope: u32 k, k x f32 centroid, u32 n_indices, packed indices
//                      then per filter: [f32 bias]

namespace fcnz {

inline constexpr std::array<char, 4> kModelMagic{'F', 'C', 'N', 'Z'};
inline constexpr std::uint16_t kModelVersion = 1;
inline constexpr std::uint32_t kMaxFileTaps = 1U << 16;

enum ModelFlags : std::uint16_t {
    kFlagQuantized = 1,
    kFlagPruned = 2,
    kFlagBiases = 4,
};

/// Either kind of model a file can hold.
using LoadedModel = std::variant<FcnModel<float>, QuantizedModel<float>>;

/// Byte accounting of a decoded file.
struct PayloadStats {
    std::size_t header_bytes = 0;       // magic through architecture block
    std::uint64_t raw_weight_bits = 0;  // raw payload only
    std::uint64_t codebook_bits = 0;    // quantized payload only
    std::uint64_t index_bits = 0;       // meaningful bits of the packed streams
    std::uint64_t index_bytes = 0;      // stored bytes of the packed streams
    std::uint64_t bias_bits = 0;
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { bytes_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void raw(std::span<const std::uint8_t> b) { bytes_.insert(bytes_.end(), b.begin(), b.end()); }

    [[nodiscard]] std::size_t size() const noexcept { return bytes_.size(); }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }

    std::span<const std::uint8_t> raw(std::size_t n) {
        need(n);
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }

    /// Bounds a count read from the file by the bytes left, so corrupt
    /// counts fail before allocating.
    std::size_t count(std::size_t bytes_each) {
        const std::uint32_t n = u32();
        if (bytes_each > 0 && n > remaining() / bytes_each) throw IntegrityError("model file: count exceeds file size");
        return n;
    }

    [[nodiscard]] std::size_t position() const noexcept { return pos_; }
    [[nodiscard]] std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (n > remaining()) throw IntegrityError("model file truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

inline bool is_pruned(const FcnModel<float>& m) {
    if (m.layers.size() != m.config.layers.size()) return true;
    std::size_t in = 1;
    for (std::size_t n = 0; n < m.layers.size(); ++n) {
        const auto& layer = m.layers[n];
        if (layer.in_channels != in || layer.out_channels() != m.config.layers[n].filters) return true;
        for (const auto& f : layer.filters) {
            if (f.channel_count() != in || f.active_count() != in) return true;
        }
        in = layer.out_channels();
    }
    return false;
}

inline void write_structure(ByteWriter& w, const FcnModel<float>& m, std::uint16_t flags) {
    for (char c : kModelMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u16(kModelVersion);
    w.u16(flags);
    w.u64(m.config.seed);
    w.u32(static_cast<std::uint32_t>(m.config.layers.size()));
    for (const auto& s : m.config.layers) {
        w.u32(static_cast<std::uint32_t>(s.filters));
        w.u32(static_cast<std::uint32_t>(s.taps));
        w.u8(static_cast<std::uint8_t>(s.activation));
    }
    w.u32(static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& layer : m.layers) {
        w.u32(static_cast<std::uint32_t>(layer.in_channels));
        w.u32(static_cast<std::uint32_t>(layer.taps));
        w.u8(static_cast<std::uint8_t>(layer.activation));
        w.u32(static_cast<std::uint32_t>(layer.filters.size()));
        for (const auto& f : layer.filters) {
            w.u32(f.id);
            w.u32(static_cast<std::uint32_t>(f.channel_count()));
            for (auto i : f.inputs) w.u32(i);
            std::vector<std::uint32_t> bits(f.active.begin(), f.active.end());
            w.raw(pack_indices(bits, 1));
        }
    }
}

inline std::uint16_t base_flags(const FcnModel<float>& m) {
    std::uint16_t flags = 0;
    if (is_pruned(m)) flags |= kFlagPruned;
    if (m.config.use_bias) flags |= kFlagBiases;
    return flags;
}

inline Activation read_activation(std::uint8_t v) {
    if (v > 1) throw IntegrityError("model file: unknown activation code " + std::to_string(v));
    return static_cast<Activation>(v);
}

} // namespace detail

inline std::vector<std::uint8_t> encode_model(const FcnModel<float>& model) {
    model.validate();
    detail::ByteWriter w;
    detail::write_structure(w, model, detail::base_flags(model));
    for (const auto& layer : model.layers) {
        for (const auto& f : layer.filters) {
            for (float v : f.weights) w.f32(v);
            if (model.config.use_bias) w.f32(f.bias);
        }
    }
    return w.take();
}

inline std::vector<std::uint8_t> encode_model(const QuantizedModel<float>& q) {
    q.skeleton.validate();
    detail::ByteWriter w;
    detail::write_structure(w, q.skeleton, detail::base_flags(q.skeleton) | kFlagQuantized);
    w.u8(static_cast<std::uint8_t>(q.scope));
    w.u32(static_cast<std::uint32_t>(q.scopes.size()));
    for (const auto& s : q.scopes) {
        w.u32(static_cast<std::uint32_t>(s.centroids.size()));
        for (float c : s.centroids) w.f32(c);
        w.u32(static_cast<std::uint32_t>(s.indices.size()));
        w.raw(pack_indices(s.indices, s.bit_width()));
    }
    if (q.skeleton.config.use_bias) {
        for (const auto& layer : q.skeleton.layers) {
            for (const auto& f : layer.filters) w.f32(f.bias);
        }
    }
    return w.take();
}

/// Decodes a model file image. Throws IntegrityError on malformed input,
/// including an unknown version.
inline LoadedModel decode_model(std::span<const std::uint8_t> bytes, PayloadStats* stats = nullptr) {
    detail::ByteReader r(bytes);
    for (char c : kModelMagic) {
        if (r.u8() != static_cast<std::uint8_t>(c)) throw IntegrityError("model file: bad magic");
    }
    const auto version = r.u16();
    if (version != kModelVersion) throw IntegrityError("model file: unsupported version " + std::to_string(version));
    const auto flags = r.u16();
    if (flags & ~(kFlagQuantized | kFlagPruned | kFlagBiases)) throw IntegrityError("model file: unknown flags");

    FcnModel<float> m;
    m.config.use_bias = (flags & kFlagBiases) != 0;
    m.config.seed = r.u64();
    const std::size_t n_specs = r.count(9);
    for (std::size_t i = 0; i < n_specs; ++i) {
        LayerSpec s;
        s.filters = r.u32();
        s.taps = r.u32();
        s.activation = detail::read_activation(r.u8());
        m.config.layers.push_back(s);
    }
    const std::size_t n_layers = r.count(13);
    for (std::size_t n = 0; n < n_layers; ++n) {
        ConvLayer<float> layer;
        layer.in_channels = r.u32();
        layer.taps = r.u32();
        if (layer.taps == 0 || layer.taps > kMaxFileTaps) throw IntegrityError("model file: implausible filter length");
        layer.activation = detail::read_activation(r.u8());
        const std::size_t n_filters = r.count(8);
        for (std::size_t j = 0; j < n_filters; ++j) {
            Filter<float> f;
            f.id = r.u32();
            const std::size_t ch = r.count(4);
            for (std::size_t c = 0; c < ch; ++c) f.inputs.push_back(r.u32());
            const auto active = unpack_indices(r.raw((ch + 7) / 8), ch, 1);
            f.active.assign(active.begin(), active.end());
            f.weights.assign(ch * layer.taps, 0.0F);
            layer.filters.push_back(std::move(f));
        }
        m.layers.push_back(std::move(layer));
    }
    PayloadStats st;
    st.header_bytes = r.position();
    try {
        m.config.validate();
        m.validate();
    } catch (const Error& e) {
        throw IntegrityError(std::string("model file: inconsistent architecture: ") + e.what());
    }

    auto read_biases = [&](FcnModel<float>& model) {
        if (!model.config.use_bias) return;
        for (auto& layer : model.layers) {
            for (auto& f : layer.filters) {
                f.bias = r.f32();
                st.bias_bits += 32;
            }
        }
    };

    LoadedModel out;
    if (flags & kFlagQuantized) {
        QuantizedModel<float> q;
        const auto scope = r.u8();
        if (scope > 1) throw IntegrityError("model file: unknown quantization scope");
        q.scope = static_cast<QuantScope>(scope);
        const std::size_t n_scopes = r.count(8);
        const std::size_t coded_weights = count_weights(m, true);
        for (std::size_t s = 0; s < n_scopes; ++s) {
            QuantizedScope<float> sc;
            const std::size_t k = r.count(4);
            for (std::size_t c = 0; c < k; ++c) sc.centroids.push_back(r.f32());
            const std::size_t n_idx = r.u32();
            if (n_idx > coded_weights) throw IntegrityError("model file: index count exceeds the model's weights");
            const auto bw = sc.bit_width();
            const std::size_t n_bytes = (n_idx * bw + 7) / 8;
            sc.indices = unpack_indices(r.raw(n_bytes), n_idx, bw);
            st.codebook_bits += 32ULL * k;
            st.index_bits += static_cast<std::uint64_t>(n_idx) * bw;
            st.index_bytes += n_bytes;
            q.scopes.push_back(std::move(sc));
        }
        read_biases(m);
        q.skeleton = std::move(m);
        (void)dequantize(q); // validates index ranges and counts
        out = std::move(q);
    } else {
        for (auto& layer : m.layers) {
            for (auto& f : layer.filters) {
                for (auto& v : f.weights) v = r.f32();
                st.raw_weight_bits += 32ULL * f.weights.size();
                if (m.config.use_bias) {
                    f.bias = r.f32();
                    st.bias_bits += 32;
                }
            }
        }
        out = std::move(m);
    }
    if (r.remaining() != 0) throw IntegrityError("model file: trailing bytes");
    if (stats) *stats = st;
    return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

} // namespace detail

inline void save(const FcnModel<float>& model, const std::filesystem::path& path) {
    detail::write_file(path, encode_model(model));
}

inline void save(const QuantizedModel<float>& model, const std::filesystem::path& path) {
    detail::write_file(path, encode_model(model));
}

inline std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed for " + path.string());
    return bytes;
}

inline LoadedModel load(const std::filesystem::path& path, PayloadStats* stats = nullptr) {
    const auto bytes = read_bytes(path);
    try {
        return decode_model(bytes, stats);
    } catch (const IntegrityError& e) {
        throw IntegrityError(path.string() + ": " + e.what());
    }
}

/// Raw weights of whatever the file held (quantized models are dequantized).
inline FcnModel<float> as_dense(const LoadedModel& m) {
    if (const auto* raw = std::get_if<FcnModel<float>>(&m)) return *raw;
    return dequantize(std::get<QuantizedModel<float>>(m));
}

} // namespace fcnz
