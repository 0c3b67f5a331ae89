#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "evaluate.hpp"
#include "fcn.hpp"
#include "pruning.hpp"
#include "quantization.hpp"
#include "text.hpp"
#include "train.hpp"

namespace fcnz {

/// Bound for acceptable performance drop: the midpoint between the noisy
/// input's score and the uncompressed model's score.
struct BapdBound {
    double noisy_score = 0.0;
    double original_model_score = 0.0;
    double bound = 0.0;
    Metric metric = Metric::sisdr;
};

inline BapdBound compute_bapd(double noisy_score, double original_score, Metric metric = Metric::sisdr) {
    if (!std::isfinite(noisy_score) || !std::isfinite(original_score)) {
        throw ParameterError("compute_bapd: scores must be finite");
    }
    return {noisy_score, original_score, (noisy_score + original_score) / 2.0, metric};
}

struct PipelineConfig {
    TrainConfig train;
    double schedule_step = 0.05;
    std::size_t retrain_epochs_per_step = 5;
    std::size_t settle_iterations = 2;
    ScopeMode scope_mode = ScopeMode::active_channels_only;
    bool protect_single_channel_layers = true;
    QuantScope quant_scope = QuantScope::per_layer;
    std::uint64_t quant_seed = 5;
    KMeansOptions kmeans;

    [[nodiscard]] PruneConfig prune_config(double theta) const {
        PruneConfig p;
        p.theta_schedule = theta_schedule(theta, schedule_step);
        p.retrain_epochs_per_step = retrain_epochs_per_step;
        p.settle_iterations = settle_iterations;
        p.protect_single_channel_layers = protect_single_channel_layers;
        p.scope_mode = scope_mode;
        return p;
    }
};

struct PipelineReport {
    double theta = 1.0;
    std::size_t k = 0;
    Scores noisy;
    Scores baseline;
    Scores pruned;
    Scores quantized;
    std::vector<PruneOutcome> prune_steps;
    CompressionReport codebook; // actual codebook + index bits of the coded weights
    double size_fraction = 1.0; // relative to the unpruned raw weights
    std::size_t original_weights = 0;
    std::size_t remaining_weights = 0;
    std::size_t remaining_params = 0;
    std::size_t scopes = 0;
};

struct PipelineResult {
    QuantizedModel<float> model;
    PipelineReport report;
};

namespace detail {

inline std::size_t scope_count(const FcnModel<float>& m, QuantScope s) {
    return s == QuantScope::per_layer ? m.layers.size() : 1;
}

/// PQ stage applied to an already pruned model.
inline PipelineResult quantize_stage(const FcnModel<float>& baseline, const PruneRun<float>& pruned,
                                     const Corpus& corpus, double theta, std::size_t k, const PipelineConfig& cfg) {
    PipelineResult out;
    try {
        out.model = quantize_model(pruned.model, k, cfg.quant_scope, cfg.quant_seed, cfg.kmeans);
    } catch (const Error& e) {
        throw Error(std::string("quantization stage: ") + e.what());
    }
    auto& r = out.report;
    r.theta = theta;
    r.k = k;
    r.prune_steps = pruned.outcomes;
    r.original_weights = count_weights(baseline, true);
    r.remaining_weights = count_weights(pruned.model, true);
    r.remaining_params = count_params(pruned.model, true);
    r.scopes = scope_count(pruned.model, cfg.quant_scope);
    r.codebook = compression_report(out.model);
    r.size_fraction = size_report(r.remaining_weights, r.original_weights, k, r.scopes).size_fraction;
    r.pruned = score_model(pruned.model, corpus.test, cfg.train.threads);
    r.quantized = score_model(dequantize(out.model), corpus.test, cfg.train.threads);
    return out;
}

inline PruneRun<float> prune_stage(const FcnModel<float>& baseline, const Corpus& corpus, double theta,
                                   const PipelineConfig& cfg) {
    try {
        return prune_retrain(baseline, corpus, cfg.prune_config(theta), cfg.train);
    } catch (const Error& e) {
        throw Error(std::string("pruning stage: ") + e.what());
    }
}

} // namespace detail

/// Prunes the trained model down to `theta` (schedule from 1.00 in
/// cfg.schedule_step decrements), then k-means quantizes what survives.
inline PipelineResult run_pp_pq(const FcnModel<float>& model, const Corpus& corpus, double theta, std::size_t k,
                                const PipelineConfig& cfg) {
    const auto pruned = detail::prune_stage(model, corpus, theta, cfg);
    auto out = detail::quantize_stage(model, pruned, corpus, theta, k, cfg);
    out.report.noisy = score_noisy(corpus.test);
    out.report.baseline = score_model(model, corpus.test, cfg.train.threads);
    return out;
}

struct SweepRow {
    double theta = 1.0;
    std::size_t k = 0;
    Scores scores;
    double size_fraction = 1.0;
    std::size_t remaining_params = 0;
    std::size_t remaining_weights = 0;
    double removal_ratio = 0.0;
    std::string error; // empty when the cell succeeded

    [[nodiscard]] bool ok() const noexcept { return error.empty(); }
};

struct OperatingPoint {
    double theta = 1.0;
    std::size_t k = 0;

    friend bool operator==(const OperatingPoint&, const OperatingPoint&) = default;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    Scores noisy;
    Scores baseline;
    std::vector<BapdBound> bapd; // one per metric
    Metric selection_metric = Metric::sisdr;
    std::optional<OperatingPoint> selected;

    [[nodiscard]] const BapdBound& bound_for(Metric m) const {
        for (const auto& b : bapd) {
            if (b.metric == m) return b;
        }
        throw ParameterError("sweep has no bound for metric " + to_string(m));
    }
};

/// Smallest admissible model: among successful rows scoring at least the
/// bound, the one with the lowest size fraction; ties prefer larger theta,
/// then larger k.
inline std::optional<OperatingPoint> select_operating_point(std::span<const SweepRow> rows, const BapdBound& bapd) {
    const SweepRow* best = nullptr;
    for (const auto& r : rows) {
        if (!r.ok() || !(r.scores.get(bapd.metric) >= bapd.bound)) continue;
        if (!best || r.size_fraction < best->size_fraction ||
            (r.size_fraction == best->size_fraction &&
             (r.theta > best->theta || (r.theta == best->theta && r.k > best->k)))) {
            best = &r;
        }
    }
    if (!best) return std::nullopt;
    return OperatingPoint{best->theta, best->k};
}

inline std::optional<OperatingPoint> select_operating_point(const SweepResult& sweep, const BapdBound& bapd) {
    return select_operating_point(std::span<const SweepRow>(sweep.rows), bapd);
}

/// Evaluates every (theta, k) cell starting from the trained baseline.
///
/// The pruning stage for a given theta is shared by all k at that theta; it
/// is deterministic, so this equals restarting each cell from the baseline.
/// A failing cell is recorded and the sweep continues.
inline SweepResult sweep(const FcnModel<float>& model, const Corpus& corpus, std::span<const double> theta_grid,
                         std::span<const std::size_t> k_grid, const PipelineConfig& cfg,
                         Metric selection_metric = Metric::sisdr) {
    if (theta_grid.empty() || k_grid.empty()) throw ParameterError("sweep: grids must be non-empty");
    SweepResult out;
    out.selection_metric = selection_metric;
    out.noisy = score_noisy(corpus.test);
    out.baseline = score_model(model, corpus.test, cfg.train.threads);
    for (Metric m : {Metric::sisdr, Metric::segsnr}) {
        out.bapd.push_back(compute_bapd(out.noisy.get(m), out.baseline.get(m), m));
    }

    std::map<double, std::optional<PruneRun<float>>> pruned;
    std::map<double, std::string> prune_errors;
    for (double theta : theta_grid) {
        if (pruned.contains(theta) || prune_errors.contains(theta)) continue;
        try {
            pruned.emplace(theta, detail::prune_stage(model, corpus, theta, cfg));
        } catch (const Error& e) {
            prune_errors.emplace(theta, e.what());
        }
    }

    for (double theta : theta_grid) {
        for (std::size_t k : k_grid) {
            SweepRow row;
            row.theta = theta;
            row.k = k;
            if (auto it = prune_errors.find(theta); it != prune_errors.end()) {
                row.error = it->second;
                out.rows.push_back(std::move(row));
                continue;
            }
            const auto& run = *pruned.at(theta);
            try {
                const auto cell = detail::quantize_stage(model, run, corpus, theta, k, cfg);
                row.scores = cell.report.quantized;
                row.size_fraction = cell.report.size_fraction;
                row.remaining_params = cell.report.remaining_params;
                row.remaining_weights = cell.report.remaining_weights;
                row.removal_ratio = run.outcomes.empty() ? 0.0 : run.outcomes.back().removal_ratio;
            } catch (const Error& e) {
                row.error = e.what();
            }
            out.rows.push_back(std::move(row));
        }
    }
    out.selected = select_operating_point(out, out.bound_for(selection_metric));
    return out;
}

inline std::string sweep_table(const SweepResult& s) {
    std::string out = "theta\tk\tsisdr\tsegsnr\tsize_fraction\tremaining_params\tremoval_ratio\tstatus\n";
    for (const auto& r : s.rows) {
        out += fixed(r.theta, 2) + '\t' + std::to_string(r.k) + '\t';
        if (r.ok()) {
            out += fixed(r.scores.sisdr, 6) + '\t' + fixed(r.scores.segsnr, 6) + '\t' + fixed(r.size_fraction, 6) +
                   '\t' + std::to_string(r.remaining_params) + '\t' + fixed(r.removal_ratio, 6) + "\tok\n";
        } else {
            std::string msg = r.error;
            std::ranges::replace(msg, '\t', ' ');
            std::ranges::replace(msg, '\n', ' ');
            out += "nan\tnan\tnan\t0\tnan\terror: " + msg + '\n';
        }
    }
    for (const auto& b : s.bapd) {
        out += "# bapd_" + to_string(b.metric) + '=' + fixed(b.bound, 6) + " noisy=" + fixed(b.noisy_score, 6) +
               " original=" + fixed(b.original_model_score, 6) + '\n';
    }
    out += "# selected=";
    out += s.selected ? fixed(s.selected->theta, 2) + ',' + std::to_string(s.selected->k) : std::string("none");
    out += " metric=" + to_string(s.selection_metric) + '\n';
    return out;
}

/// Plot series for one metric: x = k within each theta, y = score, with
/// the BAPD line as a constant column.
inline std::string sweep_series(const SweepResult& s, Metric m) {
    const auto& b = s.bound_for(m);
    std::string out = "# metric=" + to_string(m) + " noisy=" + fixed(b.noisy_score, 6) +
                      " original=" + fixed(b.original_model_score, 6) + '\n';
    out += "theta\tk\tscore\tbapd\n";
    for (const auto& r : s.rows) {
        if (!r.ok()) continue;
        out += fixed(r.theta, 2) + '\t' + std::to_string(r.k) + '\t' + fixed(r.scores.get(m), 6) + '\t' +
               fixed(b.bound, 6) + '\n';
    }
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

inline void write_sweep_series(const SweepResult& s, const std::filesystem::path& dir) {
    for (Metric m : {Metric::sisdr, Metric::segsnr}) {
        write_text(dir / (to_string(m) + ".tsv"), sweep_series(s, m));
    }
}

inline KeyValues to_key_values(const PipelineReport& r) {
    KeyValues kv{
        {"theta", fixed(r.theta, 4)},
        {"k", std::to_string(r.k)},
        {"noisy_sisdr", exact(r.noisy.sisdr)},
        {"baseline_sisdr", exact(r.baseline.sisdr)},
        {"pruned_sisdr", exact(r.pruned.sisdr)},
        {"quantized_sisdr", exact(r.quantized.sisdr)},
        {"noisy_segsnr", exact(r.noisy.segsnr)},
        {"baseline_segsnr", exact(r.baseline.segsnr)},
        {"pruned_segsnr", exact(r.pruned.segsnr)},
        {"quantized_segsnr", exact(r.quantized.segsnr)},
        {"original_weights", std::to_string(r.original_weights)},
        {"remaining_weights", std::to_string(r.remaining_weights)},
        {"remaining_params", std::to_string(r.remaining_params)},
        {"removal_ratio", exact(r.prune_steps.empty() ? 0.0 : r.prune_steps.back().removal_ratio)},
        {"scopes", std::to_string(r.scopes)},
        {"size_fraction", exact(r.size_fraction)},
    };
    for (auto& [key, value] : to_key_values(r.codebook)) kv.emplace_back("codebook_" + key, value);
    return kv;
}

} // namespace fcnz
