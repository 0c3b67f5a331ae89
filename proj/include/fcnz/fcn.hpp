#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"
#include "waveform.hpp"

namespace fcnz {

enum class Activation : std::uint8_t { tanh = 0, identity = 1 };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "identity"; }

inline Activation parse_activation(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "identity") return Activation::identity;
    throw ParameterError("unknown activation '" + s + "'");
}

/// One filter F_j: a ragged list of input channels, each with `taps` weights.
///
/// A fresh filter lists every input channel 0..I-1. Pruning masks channels
/// (active = 0, weights zeroed) and compaction later deletes them, so
/// `inputs` may become a strict subset of the layer's inputs.
template <std::floating_point T>
struct Filter {
    std::vector<std::uint32_t> inputs;
    std::vector<std::uint8_t> active;
    std::vector<T> weights; // inputs.size() * taps, channel-major
    T bias{};
    std::uint32_t id = 0; // index of this filter in the unpruned layer

    [[nodiscard]] std::size_t channel_count() const noexcept { return inputs.size(); }

    [[nodiscard]] std::size_t active_count() const noexcept {
        std::size_t n = 0;
        for (auto a : active) n += a != 0;
        return n;
    }

    [[nodiscard]] std::span<T> channel(std::size_t c, std::size_t taps) {
        return std::span<T>(weights).subspan(c * taps, taps);
    }
    [[nodiscard]] std::span<const T> channel(std::size_t c, std::size_t taps) const {
        return std::span<const T>(weights).subspan(c * taps, taps);
    }

    friend bool operator==(const Filter&, const Filter&) = default;
};

template <std::floating_point T>
struct ConvLayer {
    std::size_t in_channels = 1;
    std::size_t taps = 1;
    Activation activation = Activation::identity;
    std::vector<Filter<T>> filters;

    [[nodiscard]] std::size_t out_channels() const noexcept { return filters.size(); }

    /// Tap offset of weight 0 relative to t: the window is centered, with the
    /// extra tap on the right for even lengths.
    [[nodiscard]] std::ptrdiff_t first_offset() const noexcept {
        return -static_cast<std::ptrdiff_t>((taps - 1) / 2);
    }

    friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

struct LayerSpec {
    std::size_t filters = 1;
    std::size_t taps = 1;
    Activation activation = Activation::identity;

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct FcnConfig {
    std::vector<LayerSpec> layers;
    bool use_bias = true;
    std::uint64_t seed = 7;

    void validate() const {
        if (layers.empty()) {
            throw ParameterError("fcn config needs at least one layer");
        }
        for (std::size_t n = 0; n < layers.size(); ++n) {
            if (layers[n].filters == 0 || layers[n].taps == 0) {
                throw ParameterError("layer " + std::to_string(n) + ": filters and taps must be >= 1");
            }
        }
        if (layers.back().filters != 1 || layers.back().activation != Activation::identity) {
            throw ParameterError("final layer must have one filter and identity activation");
        }
    }

    friend bool operator==(const FcnConfig&, const FcnConfig&) = default;
};

/// 16 -> 16 -> 1 filters, 11 taps each.
inline FcnConfig default_config(std::uint64_t seed = 7) {
    return FcnConfig{{{16, 11, Activation::tanh}, {16, 11, Activation::tanh}, {1, 11, Activation::identity}},
                     true, seed};
}

/// Eight bias-free layers of 30 filters x 55 taps: exactly 300,300 weights.
/// Used for parameter arithmetic only.
inline FcnConfig reference_config(std::uint64_t seed = 7) {
    FcnConfig c{{}, false, seed};
    for (int n = 0; n < 7; ++n) c.layers.push_back({30, 55, Activation::tanh});
    c.layers.push_back({1, 55, Activation::identity});
    return c;
}

template <std::floating_point T>
struct FcnModel {
    std::vector<ConvLayer<T>> layers;
    FcnConfig config;

    /// Checks channel-count consistency and index ranges.
    void validate() const {
        if (layers.empty()) throw ShapeError("model has no layers");
        if (layers.front().in_channels != 1) throw ShapeError("first layer must take one input channel");
        if (layers.back().out_channels() != 1) throw ShapeError("final layer must produce one channel");
        for (std::size_t n = 0; n < layers.size(); ++n) {
            const auto& layer = layers[n];
            if (n > 0 && layer.in_channels != layers[n - 1].out_channels()) {
                throw ShapeError("layer " + std::to_string(n) + " expects " + std::to_string(layer.in_channels) +
                                 " channels but previous layer yields " +
                                 std::to_string(layers[n - 1].out_channels()));
            }
            for (const auto& f : layer.filters) {
                if (f.active.size() != f.inputs.size() || f.weights.size() != f.inputs.size() * layer.taps) {
                    throw ShapeError("layer " + std::to_string(n) + ": filter storage sizes disagree");
                }
                for (auto i : f.inputs) {
                    if (i >= layer.in_channels) throw ShapeError("layer " + std::to_string(n) + ": input index out of range");
                }
            }
        }
    }

    friend bool operator==(const FcnModel&, const FcnModel&) = default;
};

/// Builds a dense model with weights uniform in +-sqrt(1/(I*L)) and zero biases.
template <std::floating_point T = float>
FcnModel<T> make_model(const FcnConfig& config) {
    config.validate();
    FcnModel<T> model;
    model.config = config;
    std::size_t in = 1;
    for (std::size_t n = 0; n < config.layers.size(); ++n) {
        const auto& spec = config.layers[n];
        Rng rng(derive_seed(config.seed, {0x1A7E5ULL, n}));
        const double bound = std::sqrt(1.0 / static_cast<double>(in * spec.taps));
        ConvLayer<T> layer{in, spec.taps, spec.activation, {}};
        layer.filters.resize(spec.filters);
        for (std::size_t j = 0; j < layer.filters.size(); ++j) {
            auto& f = layer.filters[j];
            f.id = static_cast<std::uint32_t>(j);
            f.inputs.resize(in);
            for (std::size_t i = 0; i < in; ++i) f.inputs[i] = static_cast<std::uint32_t>(i);
            f.active.assign(in, 1);
            f.weights.resize(in * spec.taps);
            for (auto& w : f.weights) w = static_cast<T>(rng.uniform(-bound, bound));
        }
        model.layers.push_back(std::move(layer));
        in = spec.filters;
    }
    return model;
}

template <std::floating_point U, std::floating_point T>
FcnModel<U> cast_model(const FcnModel<T>& src) {
    FcnModel<U> dst;
    dst.config = src.config;
    for (const auto& l : src.layers) {
        ConvLayer<U> out{l.in_channels, l.taps, l.activation, {}};
        for (const auto& f : l.filters) {
            Filter<U> g{f.inputs, f.active, std::vector<U>(f.weights.begin(), f.weights.end()), static_cast<U>(f.bias),
                        f.id};
            out.filters.push_back(std::move(g));
        }
        dst.layers.push_back(std::move(out));
    }
    return dst;
}

/// Multichannel signal, channel-major (channels x length).
template <std::floating_point T>
struct Signal {
    std::size_t channels = 0;
    std::size_t length = 0;
    std::vector<T> data;

    Signal() = default;
    Signal(std::size_t c, std::size_t n) : channels(c), length(n), data(c * n, T{}) {}

    [[nodiscard]] std::span<T> row(std::size_t c) { return std::span<T>(data).subspan(c * length, length); }
    [[nodiscard]] std::span<const T> row(std::size_t c) const {
        return std::span<const T>(data).subspan(c * length, length);
    }
};

namespace detail {

/// y[t] += w * x[t + off] over the in-bounds range (zero padding elsewhere).
template <std::floating_point T>
inline void axpy_shifted(std::span<T> y, std::span<const T> x, T w, std::ptrdiff_t off) {
    const auto n = static_cast<std::ptrdiff_t>(y.size());
    const std::ptrdiff_t lo = off < 0 ? -off : 0;
    const std::ptrdiff_t hi = off > 0 ? n - off : n;
    T* __restrict yp = y.data();
    const T* __restrict xp = x.data() + off;
    for (std::ptrdiff_t t = lo; t < hi; ++t) {
        yp[t] += w * xp[t];
    }
}

} // namespace detail

/// y_j(t) = act(sum over active channels i of F_ji . R_i(t) + b_j).
///
/// Cross-correlation with a centered, zero-padded window; output length equals
/// input length. Masked channels are skipped, so they contribute exactly zero.
template <std::floating_point T>
Signal<T> conv_forward(const ConvLayer<T>& layer, const Signal<T>& input) {
    if (input.channels != layer.in_channels) {
        throw ShapeError("conv_forward: layer expects " + std::to_string(layer.in_channels) + " channels, got " +
                         std::to_string(input.channels));
    }
    Signal<T> out(layer.out_channels(), input.length);
    const std::ptrdiff_t first = layer.first_offset();
    for (std::size_t j = 0; j < layer.filters.size(); ++j) {
        const auto& f = layer.filters[j];
        auto y = out.row(j);
        for (std::size_t c = 0; c < f.inputs.size(); ++c) {
            if (!f.active[c]) continue;
            const auto x = input.row(f.inputs[c]);
            const auto w = f.channel(c, layer.taps);
            for (std::size_t l = 0; l < layer.taps; ++l) {
                detail::axpy_shifted(y, x, w[l], first + static_cast<std::ptrdiff_t>(l));
            }
        }
        for (auto& v : y) {
            v += f.bias;
            if (layer.activation == Activation::tanh) v = std::tanh(v);
        }
    }
    return out;
}

template <std::floating_point T>
Signal<T> to_signal(std::span<const double> samples) {
    Signal<T> s(1, samples.size());
    for (std::size_t t = 0; t < samples.size(); ++t) s.data[t] = static_cast<T>(samples[t]);
    return s;
}

template <std::floating_point T>
Signal<T> fcn_forward(const FcnModel<T>& model, Signal<T> x) {
    for (const auto& layer : model.layers) {
        x = conv_forward(layer, x);
    }
    return x;
}

/// Maps a waveform through every layer in order.
template <std::floating_point T>
Waveform fcn_forward(const FcnModel<T>& model, const Waveform& input) {
    const auto y = fcn_forward(model, to_signal<T>(input.samples));
    if (y.channels != 1) throw ShapeError("fcn_forward: model does not end in a single channel");
    return Waveform{std::vector<double>(y.data.begin(), y.data.end()), input.sample_rate};
}

/// Whether filter j of layer n keeps a live bias: bias-enabled models only,
/// and only while the filter reads at least one active channel, has a
/// nonzero bias, or is an output filter.
template <std::floating_point T>
bool bias_is_live(const FcnModel<T>& model, std::size_t n, const Filter<T>& f) {
    if (!model.config.use_bias) return false;
    return f.active_count() > 0 || f.bias != T{} || n + 1 == model.layers.size();
}

/// Weight parameters; with active_only, only those in unmasked channels.
template <std::floating_point T>
std::size_t count_weights(const FcnModel<T>& model, bool active_only) {
    std::size_t n = 0;
    for (const auto& layer : model.layers) {
        for (const auto& f : layer.filters) {
            n += (active_only ? f.active_count() : f.channel_count()) * layer.taps;
        }
    }
    return n;
}

/// Weights plus biases. With active_only, masked weights and the biases of
/// dead filters are excluded.
template <std::floating_point T>
std::size_t count_params(const FcnModel<T>& model, bool active_only) {
    std::size_t n = count_weights(model, active_only);
    if (!model.config.use_bias) return n;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        for (const auto& f : model.layers[l].filters) {
            n += active_only ? bias_is_live(model, l, f) : 1;
        }
    }
    return n;
}

/// Offsets of every filter's weights and bias inside a flat parameter vector.
/// Order: layer, filter, channel, tap, then the filter's bias.
struct ParamLayout {
    struct Entry {
        std::size_t weights;
        std::size_t bias;
    };
    std::vector<std::vector<Entry>> filters;
    std::size_t size = 0;

    template <std::floating_point T>
    explicit ParamLayout(const FcnModel<T>& model) {
        for (const auto& layer : model.layers) {
            auto& row = filters.emplace_back();
            for (const auto& f : layer.filters) {
                const std::size_t w = size;
                size += f.weights.size();
                row.push_back({w, size});
                size += 1;
            }
        }
    }
};

template <std::floating_point T>
std::vector<T> flatten(const FcnModel<T>& model) {
    std::vector<T> out;
    for (const auto& layer : model.layers) {
        for (const auto& f : layer.filters) {
            out.insert(out.end(), f.weights.begin(), f.weights.end());
            out.push_back(f.bias);
        }
    }
    return out;
}

template <std::floating_point T>
void assign_flat(FcnModel<T>& model, std::span<const T> flat) {
    std::size_t k = 0;
    for (auto& layer : model.layers) {
        for (auto& f : layer.filters) {
            if (k + f.weights.size() + 1 > flat.size()) throw ShapeError("assign_flat: vector too short");
            std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(k), f.weights.size(), f.weights.begin());
            k += f.weights.size();
            f.bias = flat[k++];
        }
    }
    if (k != flat.size()) throw ShapeError("assign_flat: vector too long");
}

/// 1 for parameters the optimizer may move: weights of active channels and
/// live biases.
template <std::floating_point T>
std::vector<std::uint8_t> trainable_flags(const FcnModel<T>& model) {
    std::vector<std::uint8_t> out;
    for (std::size_t n = 0; n < model.layers.size(); ++n) {
        const auto& layer = model.layers[n];
        for (const auto& f : layer.filters) {
            for (std::size_t c = 0; c < f.channel_count(); ++c) {
                out.insert(out.end(), layer.taps, f.active[c]);
            }
            const bool bias = model.config.use_bias && (f.active_count() > 0 || n + 1 == model.layers.size());
            out.push_back(bias ? 1 : 0);
        }
    }
    return out;
}

} // namespace fcnz
