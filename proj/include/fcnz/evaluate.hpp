#pragma once

#include <concepts>
#include <span>
#include <vector>

#include "corpus.hpp"
#include "fcn.hpp"
#include "metrics.hpp"
#include "parallel.hpp"

namespace fcnz {

enum class Metric { sisdr, segsnr };

inline std::string to_string(Metric m) { return m == Metric::sisdr ? "sisdr" : "segsnr"; }

inline Metric parse_metric(const std::string& s) {
    if (s == "sisdr") return Metric::sisdr;
    if (s == "segsnr") return Metric::segsnr;
    throw ParameterError("unknown metric '" + s + "'");
}

inline constexpr std::size_t kSegSnrFrame = 256;

/// Mean metric scores over a split.
struct Scores {
    double sisdr = 0.0;
    double segsnr = 0.0;

    [[nodiscard]] double get(Metric m) const { return m == Metric::sisdr ? sisdr : segsnr; }

    friend bool operator==(const Scores&, const Scores&) = default;
};

namespace detail {

inline Scores average(const std::vector<Scores>& per) {
    Scores s;
    for (const auto& p : per) {
        s.sisdr += p.sisdr;
        s.segsnr += p.segsnr;
    }
    s.sisdr /= static_cast<double>(per.size());
    s.segsnr /= static_cast<double>(per.size());
    return s;
}

inline std::size_t frame_for(std::size_t len) { return std::min(kSegSnrFrame, len); }

} // namespace detail

/// Scores of the unprocessed noisy input against clean.
inline Scores score_noisy(std::span<const PairedExample> examples) {
    if (examples.empty()) throw DegenerateInputError("score_noisy: no examples");
    std::vector<Scores> per(examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto& ex = examples[i];
        per[i] = {si_sdr(ex.noisy, ex.clean), seg_snr(ex.noisy, ex.clean, detail::frame_for(ex.clean.size()))};
    }
    return detail::average(per);
}

/// Scores of the model's enhanced output against clean, averaged in example order.
template <std::floating_point T>
Scores score_model(const FcnModel<T>& model, std::span<const PairedExample> examples, std::size_t threads = 1) {
    if (examples.empty()) throw DegenerateInputError("score_model: no examples");
    std::vector<Scores> per(examples.size());
    parallel_for(examples.size(), threads, [&](std::size_t i) {
        const auto& ex = examples[i];
        const auto y = fcn_forward(model, ex.noisy);
        per[i] = {si_sdr(y, ex.clean), seg_snr(y, ex.clean, detail::frame_for(ex.clean.size()))};
    });
    return detail::average(per);
}

} // namespace fcnz
