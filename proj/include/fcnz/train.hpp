#pragma once

#include <cmath>
#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "errors.hpp"
#include "fcn.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace fcnz {

enum class Optimizer { sgd_momentum, adam };

inline std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd-momentum"; }

inline Optimizer parse_optimizer(const std::string& s) {
    if (s == "adam") return Optimizer::adam;
    if (s == "sgd-momentum") return Optimizer::sgd_momentum;
    throw ParameterError("unknown optimizer '" + s + "'");
}

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 8;
    double learning_rate = 1e-3;
    Optimizer optimizer = Optimizer::adam;
    std::uint64_t seed = 11;
    std::size_t threads = 0; // 0 = all cores; results do not depend on it

    void validate() const {
        if (epochs == 0 || batch_size == 0) throw ParameterError("train: epochs and batch_size must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
            throw ParameterError("train: learning rate must be finite and non-negative");
        }
    }
};

template <std::floating_point T>
struct TrainResult {
    FcnModel<T> model;
    std::vector<double> loss_history; // one mean MSE per epoch
};

namespace detail {

template <std::floating_point T>
T dot_shifted(std::span<const T> y, std::span<const T> x, std::ptrdiff_t off) {
    const auto n = static_cast<std::ptrdiff_t>(y.size());
    const std::ptrdiff_t lo = off < 0 ? -off : 0;
    const std::ptrdiff_t hi = off > 0 ? n - off : n;
    const T* yp = y.data();
    const T* xp = x.data() + off;
    T acc{};
    for (std::ptrdiff_t t = lo; t < hi; ++t) acc += yp[t] * xp[t];
    return acc;
}

} // namespace detail

/// MSE of one example and its gradient, accumulated into `grad` (flat layout).
/// Masked channels receive no gradient.
template <std::floating_point T>
double example_loss_and_gradient(const FcnModel<T>& model, const ParamLayout& layout,
                                 std::span<const double> noisy, std::span<const double> clean, std::span<T> grad) {
    if (noisy.size() != clean.size()) throw ShapeError("training pair lengths differ");
    std::vector<Signal<T>> acts;
    acts.reserve(model.layers.size() + 1);
    acts.push_back(to_signal<T>(noisy));
    for (const auto& layer : model.layers) acts.push_back(conv_forward(layer, acts.back()));

    const std::size_t len = noisy.size();
    const auto y = acts.back().row(0);
    Signal<T> dy(1, len);
    double loss = 0.0;
    const double scale = 2.0 / static_cast<double>(len);
    for (std::size_t t = 0; t < len; ++t) {
        const double e = static_cast<double>(y[t]) - clean[t];
        loss += e * e;
        dy.data[t] = static_cast<T>(scale * e);
    }
    loss /= static_cast<double>(len);

    for (std::size_t n = model.layers.size(); n-- > 0;) {
        const auto& layer = model.layers[n];
        const auto& in = acts[n];
        const auto& out = acts[n + 1];
        if (layer.activation == Activation::tanh) {
            for (std::size_t i = 0; i < dy.data.size(); ++i) dy.data[i] *= T{1} - out.data[i] * out.data[i];
        }
        Signal<T> dx(n > 0 ? in.channels : 0, len);
        const std::ptrdiff_t first = layer.first_offset();
        for (std::size_t j = 0; j < layer.filters.size(); ++j) {
            const auto& f = layer.filters[j];
            const auto& entry = layout.filters[n][j];
            const auto dz = std::span<const T>(dy.row(j));
            grad[entry.bias] += std::accumulate(dz.begin(), dz.end(), T{});
            for (std::size_t c = 0; c < f.channel_count(); ++c) {
                if (!f.active[c]) continue;
                const auto x = in.row(f.inputs[c]);
                const auto w = f.channel(c, layer.taps);
                for (std::size_t l = 0; l < layer.taps; ++l) {
                    const auto off = first + static_cast<std::ptrdiff_t>(l);
                    grad[entry.weights + c * layer.taps + l] += detail::dot_shifted(dz, x, off);
                    if (n > 0) detail::axpy_shifted(dx.row(f.inputs[c]), dz, w[l], -off);
                }
            }
        }
        dy = std::move(dx);
    }
    return loss;
}

/// Mean loss over `examples` and the matching mean gradient, with frozen
/// (non-trainable) entries zeroed.
template <std::floating_point T>
std::pair<double, std::vector<T>> loss_and_gradient(const FcnModel<T>& model,
                                                    std::span<const PairedExample> examples) {
    const ParamLayout layout(model);
    std::vector<T> grad(layout.size, T{});
    double loss = 0.0;
    for (const auto& ex : examples) {
        loss += example_loss_and_gradient<T>(model, layout, ex.noisy.samples, ex.clean.samples, grad);
    }
    const auto flags = trainable_flags(model);
    const T inv = T{1} / static_cast<T>(examples.size());
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] = flags[i] ? grad[i] * inv : T{};
    return {loss / static_cast<double>(examples.size()), std::move(grad)};
}

template <std::floating_point T>
double mean_loss(const FcnModel<T>& model, std::span<const PairedExample> examples) {
    double loss = 0.0;
    for (const auto& ex : examples) {
        const auto y = fcn_forward(model, ex.noisy);
        double e2 = 0.0;
        for (std::size_t t = 0; t < y.size(); ++t) {
            const double e = y.samples[t] - ex.clean.samples[t];
            e2 += e * e;
        }
        loss += e2 / static_cast<double>(y.size());
    }
    return loss / static_cast<double>(examples.size());
}

/// Minimizes waveform MSE between fcn_forward(noisy) and clean.
///
/// Per-example gradients are computed in parallel and summed in example order,
/// so the result depends on (model, examples, cfg.seed) only. Masked channels
/// and dead biases never move.
template <std::floating_point T>
TrainResult<T> train(FcnModel<T> model, std::span<const PairedExample> examples, const TrainConfig& cfg) {
    cfg.validate();
    if (examples.empty()) throw DegenerateInputError("train: empty corpus");
    model.validate();

    const ParamLayout layout(model);
    const auto flags = trainable_flags(model);
    std::vector<T> params = flatten(model);
    std::vector<double> m(layout.size, 0.0);
    std::vector<double> v(layout.size, 0.0);
    std::vector<double> total(layout.size);
    const std::size_t batch = std::min(cfg.batch_size, examples.size());
    std::vector<std::vector<T>> slots(batch, std::vector<T>(layout.size));
    std::vector<double> losses(batch);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    constexpr double momentum = 0.9;
    std::uint64_t step = 0;

    TrainResult<T> result;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, {epoch}));
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng.index(i)]);
        }
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t count = std::min(batch, order.size() - start);
            parallel_for(count, cfg.threads, [&](std::size_t b) {
                std::fill(slots[b].begin(), slots[b].end(), T{});
                const auto& ex = examples[order[start + b]];
                losses[b] = example_loss_and_gradient<T>(model, layout, ex.noisy.samples, ex.clean.samples, slots[b]);
            });
            std::fill(total.begin(), total.end(), 0.0);
            for (std::size_t b = 0; b < count; ++b) {
                if (!std::isfinite(losses[b])) throw DivergenceError(epoch, "non-finite loss");
                epoch_loss += losses[b];
                for (std::size_t i = 0; i < layout.size; ++i) total[i] += slots[b][i];
            }

            ++step;
            const double lr = cfg.learning_rate;
            for (std::size_t i = 0; i < layout.size; ++i) {
                if (!flags[i]) continue;
                const double g = total[i] / static_cast<double>(count);
                double delta;
                if (cfg.optimizer == Optimizer::adam) {
                    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                    const double mhat = m[i] / (1.0 - std::pow(beta1, static_cast<double>(step)));
                    const double vhat = v[i] / (1.0 - std::pow(beta2, static_cast<double>(step)));
                    delta = lr * mhat / (std::sqrt(vhat) + eps);
                } else {
                    m[i] = momentum * m[i] + g;
                    delta = lr * m[i];
                }
                params[i] = static_cast<T>(static_cast<double>(params[i]) - delta);
                if (!std::isfinite(params[i])) throw DivergenceError(epoch, "non-finite parameter");
            }
            assign_flat<T>(model, params);
        }
        epoch_loss /= static_cast<double>(examples.size());
        if (!std::isfinite(epoch_loss)) throw DivergenceError(epoch, "non-finite loss");
        result.loss_history.push_back(epoch_loss);
    }
    result.model = std::move(model);
    return result;
}

} // namespace fcnz
