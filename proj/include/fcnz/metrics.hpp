#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "errors.hpp"
#include "waveform.hpp"

namespace fcnz {

inline constexpr double kSiSdrCeilingDb = 100.0;
inline constexpr double kSiSdrFloorDb = -100.0;
inline constexpr double kSegSnrFloorDb = -10.0;
inline constexpr double kSegSnrCeilingDb = 35.0;

/// Scale-invariant SDR in dB, clamped to [-100, 100].
///
/// The estimate is projected onto the reference; the ratio of projection
/// energy to residual energy is returned. A residual below 1e-20 of the
/// target energy reports the +100 dB ceiling.
inline double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
    if (estimate.size() != reference.size()) {
        throw ShapeError("si_sdr: length mismatch");
    }
    double ref_energy = 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        ref_energy += reference[i] * reference[i];
        dot += estimate[i] * reference[i];
    }
    if (!(ref_energy > 0.0)) {
        throw DegenerateInputError("si_sdr: reference has zero energy");
    }
    const double alpha = dot / ref_energy;
    double target = 0.0;
    double residual = 0.0;
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double t = alpha * reference[i];
        const double r = estimate[i] - t;
        target += t * t;
        residual += r * r;
    }
    if (residual < 1e-20 * target) {
        return kSiSdrCeilingDb;
    }
    if (!(target > 0.0)) {
        return kSiSdrFloorDb;
    }
    return std::clamp(10.0 * std::log10(target / residual), kSiSdrFloorDb, kSiSdrCeilingDb);
}

inline double si_sdr(const Waveform& estimate, const Waveform& reference) {
    return si_sdr(std::span<const double>(estimate.samples), std::span<const double>(reference.samples));
}

/// Segmental SNR: per-frame SNR over non-overlapping frames of `frame_len`
/// samples, each clamped to [-10, 35] dB, then averaged. A trailing partial
/// frame is ignored.
inline double seg_snr(std::span<const double> estimate, std::span<const double> reference, std::size_t frame_len) {
    if (estimate.size() != reference.size()) {
        throw ShapeError("seg_snr: length mismatch");
    }
    if (frame_len == 0 || frame_len > reference.size()) {
        throw ShapeError("seg_snr: frame length " + std::to_string(frame_len) + " does not fit a signal of " +
                         std::to_string(reference.size()) + " samples");
    }
    double ref_energy = 0.0;
    for (double v : reference) {
        ref_energy += v * v;
    }
    if (!(ref_energy > 0.0)) {
        throw DegenerateInputError("seg_snr: reference has zero energy");
    }

    const std::size_t frames = reference.size() / frame_len;
    double total = 0.0;
    for (std::size_t f = 0; f < frames; ++f) {
        double sig = 0.0;
        double err = 0.0;
        for (std::size_t i = f * frame_len; i < (f + 1) * frame_len; ++i) {
            const double e = reference[i] - estimate[i];
            sig += reference[i] * reference[i];
            err += e * e;
        }
        double db = kSegSnrCeilingDb;
        if (err > 0.0) {
            db = sig > 0.0 ? std::clamp(10.0 * std::log10(sig / err), kSegSnrFloorDb, kSegSnrCeilingDb)
                           : kSegSnrFloorDb;
        }
        total += db;
    }
    return total / static_cast<double>(frames);
}

inline double seg_snr(const Waveform& estimate, const Waveform& reference, std::size_t frame_len) {
    return seg_snr(std::span<const double>(estimate.samples), std::span<const double>(reference.samples), frame_len);
}

} // namespace fcnz
