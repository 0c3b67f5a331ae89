#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "errors.hpp"
#include "evaluate.hpp"
#include "fcn.hpp"
#include "text.hpp"
#include "train.hpp"

namespace fcnz {

/// Which channels feed the filter mean |w| during iterative pruning.
enum class ScopeMode { all_channels, active_channels_only };

/// M_F = sum |w| / (|scope| * L) over the channels listed in `scope`.
///
/// `weights` holds every channel of the filter, channel-major, `taps` each.
template <std::floating_point T>
double filter_mean_abs(std::span<const T> weights, std::size_t taps, std::span<const std::size_t> scope) {
    if (scope.empty()) throw DegenerateInputError("filter_mean_abs: empty channel scope");
    if (taps == 0) throw DegenerateInputError("filter_mean_abs: zero taps");
    double acc = 0.0;
    for (std::size_t c : scope) {
        if ((c + 1) * taps > weights.size()) throw ShapeError("filter_mean_abs: channel index out of range");
        for (std::size_t l = 0; l < taps; ++l) acc += std::abs(static_cast<double>(weights[c * taps + l]));
    }
    return acc / static_cast<double>(scope.size() * taps);
}

/// Every channel in the filter as scope.
template <std::floating_point T>
double filter_mean_abs(std::span<const T> weights, std::size_t taps) {
    std::vector<std::size_t> scope(weights.size() / taps);
    for (std::size_t c = 0; c < scope.size(); ++c) scope[c] = c;
    return filter_mean_abs(weights, taps, std::span<const std::size_t>(scope));
}

/// S(i) = #{l : |w_l| < M} / L for every channel. The inequality is strict,
/// so M = 0 yields all zeros.
template <std::floating_point T>
std::vector<double> channel_sparsity(std::span<const T> weights, std::size_t taps, double mean_abs) {
    if (!(mean_abs >= 0.0)) throw ParameterError("channel_sparsity: mean must be non-negative");
    if (taps == 0 || weights.size() % taps != 0) throw ShapeError("channel_sparsity: ragged channel storage");
    std::vector<double> s(weights.size() / taps);
    for (std::size_t c = 0; c < s.size(); ++c) {
        std::size_t below = 0;
        for (std::size_t l = 0; l < taps; ++l) {
            below += std::abs(static_cast<double>(weights[c * taps + l])) < mean_abs;
        }
        s[c] = static_cast<double>(below) / static_cast<double>(taps);
    }
    return s;
}

struct FilterSparsity {
    double mean_abs = 0.0;
    std::vector<double> sparsity; // per stored channel
};

struct SparsityReport {
    ScopeMode computed_over = ScopeMode::active_channels_only;
    std::vector<std::vector<FilterSparsity>> layers;
};

namespace detail {

template <std::floating_point T>
std::vector<std::size_t> scope_of(const Filter<T>& f, ScopeMode mode) {
    std::vector<std::size_t> scope;
    for (std::size_t c = 0; c < f.channel_count(); ++c) {
        if (mode == ScopeMode::all_channels || f.active[c]) scope.push_back(c);
    }
    return scope;
}

} // namespace detail

/// M and S(i) for every filter; filters with an empty scope report M = 0.
template <std::floating_point T>
SparsityReport sparsity_report(const FcnModel<T>& model, ScopeMode mode = ScopeMode::active_channels_only) {
    SparsityReport r{mode, {}};
    for (const auto& layer : model.layers) {
        auto& row = r.layers.emplace_back();
        for (const auto& f : layer.filters) {
            const auto scope = detail::scope_of(f, mode);
            const std::span<const T> w(f.weights);
            const double m = scope.empty() ? 0.0 : filter_mean_abs(w, layer.taps, std::span<const std::size_t>(scope));
            row.push_back({m, channel_sparsity(w, layer.taps, m)});
        }
    }
    return r;
}

template <std::floating_point T>
struct MaskStepResult {
    FcnModel<T> model;
    std::size_t newly_masked = 0;
};

/// Masks (and zeroes) every active channel whose sparsity is strictly above
/// `theta`.
///
/// Layers with at most one active input channel are left alone when
/// `protect_single_channel_layers` is set. A non-output filter that loses all
/// of its channels has its bias pinned to zero, so it emits exactly zero.
template <std::floating_point T>
MaskStepResult<T> mask_step(FcnModel<T> model, double theta, ScopeMode mode = ScopeMode::active_channels_only,
                            bool protect_single_channel_layers = true) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ParameterError("mask_step: theta must lie in [0, 1]");
    std::size_t masked = 0;
    for (std::size_t n = 0; n < model.layers.size(); ++n) {
        auto& layer = model.layers[n];
        if (protect_single_channel_layers) {
            std::set<std::uint32_t> live_inputs;
            for (const auto& f : layer.filters) {
                for (std::size_t c = 0; c < f.channel_count(); ++c) {
                    if (f.active[c]) live_inputs.insert(f.inputs[c]);
                }
            }
            if (live_inputs.size() <= 1) continue;
        }
        const bool output_layer = n + 1 == model.layers.size();
        for (auto& f : layer.filters) {
            const auto scope = detail::scope_of(f, mode);
            if (scope.empty() || f.active_count() == 0) continue;
            const std::span<const T> w(f.weights);
            const double m = filter_mean_abs(w, layer.taps, std::span<const std::size_t>(scope));
            const auto s = channel_sparsity(w, layer.taps, m);
            for (std::size_t c = 0; c < f.channel_count(); ++c) {
                if (f.active[c] && s[c] > theta) {
                    f.active[c] = 0;
                    std::ranges::fill(f.channel(c, layer.taps), T{});
                    ++masked;
                }
            }
            if (!output_layer && f.active_count() == 0) f.bias = T{};
        }
    }
    return {std::move(model), masked};
}

/// Physically deletes masked channels, then cascades: a non-output filter is
/// deleted when no filter downstream reads it, or when it has no channels
/// and a zero bias (it emits zero, so readers drop the matching channel).
/// Surviving indices are remapped; the forward pass is unchanged.
template <std::floating_point T>
FcnModel<T> compact_model(FcnModel<T> model) {
    model.validate();
    for (std::size_t n = 0; n < model.layers.size(); ++n) {
        auto& layer = model.layers[n];
        for (auto& f : layer.filters) {
            Filter<T> kept{{}, {}, {}, f.bias, f.id};
            for (std::size_t c = 0; c < f.channel_count(); ++c) {
                const auto w = f.channel(c, layer.taps);
                if (!f.active[c]) {
                    if (std::ranges::any_of(w, [](T v) { return v != T{}; })) {
                        throw IntegrityError("layer " + std::to_string(n) + " filter " + std::to_string(f.id) +
                                             ": masked channel holds nonzero weights");
                    }
                    continue;
                }
                kept.inputs.push_back(f.inputs[c]);
                kept.active.push_back(1);
                kept.weights.insert(kept.weights.end(), w.begin(), w.end());
            }
            f = std::move(kept);
        }
    }

    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t n = 0; n + 1 < model.layers.size(); ++n) {
            auto& layer = model.layers[n];
            auto& next = model.layers[n + 1];
            std::vector<std::uint8_t> read(layer.out_channels(), 0);
            for (const auto& g : next.filters) {
                for (auto i : g.inputs) read[i] = 1;
            }
            std::vector<std::uint8_t> keep(layer.out_channels(), 1);
            std::vector<std::uint8_t> zero_out(layer.out_channels(), 0);
            for (std::size_t j = 0; j < layer.out_channels(); ++j) {
                const auto& f = layer.filters[j];
                zero_out[j] = f.channel_count() == 0 && f.bias == T{};
                keep[j] = read[j] && !zero_out[j];
            }
            if (std::ranges::all_of(keep, [](auto k) { return k != 0; })) continue;
            changed = true;

            std::vector<std::uint32_t> remap(layer.out_channels(), 0);
            std::vector<Filter<T>> survivors;
            for (std::size_t j = 0; j < layer.out_channels(); ++j) {
                if (keep[j]) {
                    remap[j] = static_cast<std::uint32_t>(survivors.size());
                    survivors.push_back(std::move(layer.filters[j]));
                }
            }
            layer.filters = std::move(survivors);
            for (auto& g : next.filters) {
                Filter<T> kept{{}, {}, {}, g.bias, g.id};
                for (std::size_t c = 0; c < g.channel_count(); ++c) {
                    if (!keep[g.inputs[c]]) continue; // producer gone: its output was zero or unread
                    const auto w = g.channel(c, next.taps);
                    kept.inputs.push_back(remap[g.inputs[c]]);
                    kept.active.push_back(g.active[c]);
                    kept.weights.insert(kept.weights.end(), w.begin(), w.end());
                }
                g = std::move(kept);
            }
            next.in_channels = layer.out_channels();
        }
    }
    model.validate();
    return model;
}

/// One (filter id, input channel id) connection, in unpruned numbering.
struct ChannelRef {
    std::uint32_t filter = 0;
    std::uint32_t input = 0;

    friend auto operator<=>(const ChannelRef&, const ChannelRef&) = default;
};

/// One row of the pruning table.
struct PruneOutcome {
    double theta = 1.0;
    double removal_ratio = 0.0;
    std::size_t original_params = 0;
    std::size_t remaining_params = 0;
    std::size_t original_weights = 0;
    std::size_t remaining_weights = 0;
    std::vector<std::vector<ChannelRef>> removed_channels; // per layer
    double metric_before = 0.0;
    double metric_after = 0.0;
};

namespace detail {

template <std::floating_point T>
std::vector<std::set<ChannelRef>> live_channels(const FcnModel<T>& model) {
    std::vector<std::set<ChannelRef>> out;
    for (std::size_t n = 0; n < model.layers.size(); ++n) {
        auto& set = out.emplace_back();
        for (const auto& f : model.layers[n].filters) {
            for (std::size_t c = 0; c < f.channel_count(); ++c) {
                if (!f.active[c]) continue;
                const std::uint32_t in = n == 0 ? f.inputs[c] : model.layers[n - 1].filters[f.inputs[c]].id;
                set.insert({f.id, in});
            }
        }
    }
    return out;
}

} // namespace detail

/// Compares a pruned model against its origin. Counts cover weights of
/// active channels plus live biases; a bias disappears only with its filter.
template <std::floating_point T>
PruneOutcome removal_report(const FcnModel<T>& original, const FcnModel<T>& pruned) {
    if (original.config.layers != pruned.config.layers || original.layers.size() != pruned.layers.size()) {
        throw ShapeError("removal_report: models come from different architectures");
    }
    PruneOutcome r;
    r.original_params = count_params(original, true);
    r.remaining_params = count_params(pruned, true);
    r.original_weights = count_weights(original, true);
    r.remaining_weights = count_weights(pruned, true);
    r.removal_ratio = r.original_params == 0
                          ? 0.0
                          : 1.0 - static_cast<double>(r.remaining_params) / static_cast<double>(r.original_params);
    const auto before = detail::live_channels(original);
    const auto after = detail::live_channels(pruned);
    for (std::size_t n = 0; n < before.size(); ++n) {
        auto& removed = r.removed_channels.emplace_back();
        std::ranges::set_difference(before[n], after[n], std::back_inserter(removed));
    }
    return r;
}

struct PruneConfig {
    std::vector<double> theta_schedule{1.0};
    std::size_t retrain_epochs_per_step = 5;
    std::size_t settle_iterations = 2;
    bool protect_single_channel_layers = true;
    ScopeMode scope_mode = ScopeMode::active_channels_only;
    /// Stop after the first threshold whose removal ratio reaches this value.
    std::optional<double> stop_at_removal;

    void validate() const {
        if (theta_schedule.empty()) throw ParameterError("prune: empty theta schedule");
        if (theta_schedule.front() > 1.0) throw ParameterError("prune: schedule must start at or below 1.0");
        for (std::size_t i = 0; i < theta_schedule.size(); ++i) {
            const double t = theta_schedule[i];
            if (!(t >= 0.0 && t <= 1.0)) throw ParameterError("prune: thresholds must lie in [0, 1]");
            if (i > 0 && !(t < theta_schedule[i - 1])) throw ParameterError("prune: schedule must strictly descend");
        }
        if (settle_iterations == 0) throw ParameterError("prune: settle_iterations must be positive");
    }
};

/// 1.00, 1-step, 1-2*step, ... down to and including `target`.
inline std::vector<double> theta_schedule(double target, double step = 0.05) {
    if (!(target >= 0.0 && target <= 1.0)) throw ParameterError("theta must lie in [0, 1]");
    if (!(step > 0.0)) throw ParameterError("schedule step must be positive");
    std::vector<double> out;
    for (std::size_t i = 0;; ++i) {
        const double t = std::round((1.0 - static_cast<double>(i) * step) * 1e9) / 1e9;
        if (t < target - 1e-9) break;
        out.push_back(t);
    }
    if (out.empty() || std::abs(out.back() - target) > 1e-9) out.push_back(target);
    return out;
}

template <std::floating_point T>
struct PruneRun {
    FcnModel<T> model;
    std::vector<PruneOutcome> outcomes;
};

/// The mask -> retrain -> remove loop.
///
/// For every threshold: `settle_iterations` rounds of mask_step followed by
/// retraining on the training split (skipped when nothing new was masked),
/// then compact_model. Metrics are mean SI-SDR on the test split before and
/// after each threshold.
template <std::floating_point T>
PruneRun<T> prune_retrain(FcnModel<T> model, const Corpus& corpus, const PruneConfig& cfg, const TrainConfig& train_cfg) {
    cfg.validate();
    train_cfg.validate();
    const FcnModel<T> original = model;
    PruneRun<T> run;
    double current_metric = score_model(model, corpus.test, train_cfg.threads).sisdr;
    for (std::size_t step = 0; step < cfg.theta_schedule.size(); ++step) {
        const double theta = cfg.theta_schedule[step];
        const double before = current_metric;
        for (std::size_t it = 0; it < cfg.settle_iterations; ++it) {
            auto masked = mask_step(std::move(model), theta, cfg.scope_mode, cfg.protect_single_channel_layers);
            model = std::move(masked.model);
            if (masked.newly_masked == 0 || cfg.retrain_epochs_per_step == 0) continue;
            TrainConfig tc = train_cfg;
            tc.epochs = cfg.retrain_epochs_per_step;
            tc.seed = derive_seed(train_cfg.seed, {0x9E7ULL, step, it});
            try {
                model = train(std::move(model), corpus.train, tc).model;
            } catch (const DivergenceError& e) {
                throw DivergenceError(e.epoch(), "while retraining at theta " + fixed(theta, 2) + ": " + e.what());
            }
        }
        model = compact_model(std::move(model));
        current_metric = score_model(model, corpus.test, train_cfg.threads).sisdr;
        PruneOutcome outcome = removal_report(original, model);
        outcome.theta = theta;
        outcome.metric_before = before;
        outcome.metric_after = current_metric;
        const double ratio = outcome.removal_ratio;
        run.outcomes.push_back(std::move(outcome));
        if (cfg.stop_at_removal && ratio >= *cfg.stop_at_removal) break;
    }
    run.model = std::move(model);
    return run;
}

/// Table layout: threshold, removal ratio, remaining parameters.
inline std::string removal_table(std::span<const PruneOutcome> rows) {
    std::string out = "sparsity_threshold\tremoval_ratio\tremaining_parameters\tsisdr_before\tsisdr_after\n";
    for (const auto& r : rows) {
        out += fixed(r.theta, 2) + '\t' + fixed(100.0 * r.removal_ratio, 1) + "%\t" +
               with_thousands(r.remaining_params) + '\t' + fixed(r.metric_before, 4) + '\t' +
               fixed(r.metric_after, 4) + '\n';
    }
    return out;
}

inline KeyValues to_key_values(const PruneOutcome& r) {
    std::size_t removed = 0;
    for (const auto& l : r.removed_channels) removed += l.size();
    return {
        {"theta", fixed(r.theta, 4)},
        {"removal_ratio", exact(r.removal_ratio)},
        {"original_params", std::to_string(r.original_params)},
        {"remaining_params", std::to_string(r.remaining_params)},
        {"original_weights", std::to_string(r.original_weights)},
        {"remaining_weights", std::to_string(r.remaining_weights)},
        {"removed_channels", std::to_string(removed)},
        {"metric_before", exact(r.metric_before)},
        {"metric_after", exact(r.metric_after)},
    };
}

} // namespace fcnz
