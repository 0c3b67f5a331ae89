#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace fcnz {

/// A sampled mono signal.
struct Waveform {
    std::vector<double> samples;
    int sample_rate = 16000;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }

    /// Throws unless the waveform is non-empty, finite and has a positive rate.
    void validate() const {
        if (samples.empty()) {
            throw ShapeError("waveform is empty");
        }
        if (sample_rate <= 0) {
            throw ParameterError("sample rate must be positive, got " + std::to_string(sample_rate));
        }
        for (double s : samples) {
            if (!std::isfinite(s)) {
                throw DegenerateInputError("waveform contains a non-finite sample");
            }
        }
    }

    friend bool operator==(const Waveform&, const Waveform&) = default;
};

/// Mean squared amplitude.
inline double mean_power(std::span<const double> x) {
    if (x.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (double v : x) {
        acc += v * v;
    }
    return acc / static_cast<double>(x.size());
}

/// Gain g that puts noise at `snr_db` below clean, with power taken as the
/// mean square over the whole signal.
inline double snr_gain(double clean_power, double noise_power, double snr_db) {
    return std::sqrt(clean_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

/// Returns clean + g * noise with g chosen so the mixture has exactly `snr_db`.
inline Waveform mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db) {
    if (clean.size() != noise.size()) {
        throw ShapeError("mix_at_snr: clean has " + std::to_string(clean.size()) + " samples, noise has " +
                         std::to_string(noise.size()));
    }
    if (!std::isfinite(snr_db)) {
        throw ParameterError("mix_at_snr: snr must be finite");
    }
    const double pc = mean_power(clean.samples);
    const double pn = mean_power(noise.samples);
    if (!(pc > 0.0) || !(pn > 0.0)) {
        throw DegenerateInputError("mix_at_snr: clean and noise need nonzero power");
    }
    const double g = snr_gain(pc, pn, snr_db);
    Waveform out{std::vector<double>(clean.size()), clean.sample_rate};
    for (std::size_t i = 0; i < clean.size(); ++i) {
        out.samples[i] = clean.samples[i] + g * noise.samples[i];
    }
    return out;
}

} // namespace fcnz
