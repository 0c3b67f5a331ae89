#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <map>
#include <type_traits>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "errors.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "text.hpp"
#include "waveform.hpp"

namespace fcnz {

enum class CleanKind { multi_sine, filtered_noise_band };
enum class NoiseKind { white, low_pass_rumble, amplitude_modulated };

inline std::string to_string(CleanKind k) {
    return k == CleanKind::multi_sine ? "multi-sine" : "filtered-noise-band";
}

inline std::string to_string(NoiseKind k) {
    switch (k) {
    case NoiseKind::white: return "white";
    case NoiseKind::low_pass_rumble: return "low-pass-rumble";
    case NoiseKind::amplitude_modulated: return "amplitude-modulated";
    }
    return "?";
}

inline CleanKind parse_clean_kind(const std::string& s) {
    if (s == "multi-sine") return CleanKind::multi_sine;
    if (s == "filtered-noise-band") return CleanKind::filtered_noise_band;
    throw ParameterError("unknown clean generator '" + s + "'");
}

inline NoiseKind parse_noise_kind(const std::string& s) {
    if (s == "white") return NoiseKind::white;
    if (s == "low-pass-rumble") return NoiseKind::low_pass_rumble;
    if (s == "amplitude-modulated") return NoiseKind::amplitude_modulated;
    throw ParameterError("unknown noise generator '" + s + "'");
}

/// Recipe for a synthetic paired corpus. Training and test splits use
/// different noise kinds and SNR grids so evaluation is mismatched.
struct CorpusSpec {
    std::size_t n_train = 64;
    std::size_t n_test = 32;
    std::size_t example_len = 2048;
    int sample_rate = 16000;
    CleanKind clean_generator = CleanKind::multi_sine;
    std::vector<NoiseKind> train_noises{NoiseKind::white, NoiseKind::low_pass_rumble};
    std::vector<NoiseKind> test_noises{NoiseKind::amplitude_modulated};
    std::vector<double> train_snrs_db{-10.0, -5.0, 0.0, 5.0, 10.0};
    std::vector<double> test_snrs_db{-12.0, -6.0, 0.0, 6.0};
    std::uint64_t seed = 1234;

    void validate() const {
        if (n_train == 0 || n_test == 0 || example_len == 0) {
            throw ParameterError("corpus: n_train, n_test and example_len must be positive");
        }
        if (sample_rate <= 0) {
            throw ParameterError("corpus: sample rate must be positive");
        }
        if (train_noises.empty() || test_noises.empty()) {
            throw ParameterError("corpus: noise kind lists must be non-empty");
        }
        if (train_snrs_db.empty() || test_snrs_db.empty()) {
            throw ParameterError("corpus: SNR lists must be non-empty");
        }
        for (double s : train_snrs_db) {
            if (!std::isfinite(s)) throw ParameterError("corpus: non-finite training SNR");
        }
        for (double s : test_snrs_db) {
            if (!std::isfinite(s)) throw ParameterError("corpus: non-finite test SNR");
        }
    }

    friend bool operator==(const CorpusSpec&, const CorpusSpec&) = default;
};

struct PairedExample {
    Waveform clean;
    Waveform noisy;
    double snr_db = 0.0;
    NoiseKind noise = NoiseKind::white;

    friend bool operator==(const PairedExample&, const PairedExample&) = default;
};

struct Corpus {
    std::vector<PairedExample> train;
    std::vector<PairedExample> test;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

namespace detail {

inline constexpr double kCleanRms = 0.1;
inline constexpr double kCleanLowHz = 200.0;
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kTestStream = 2;

inline void normalize_rms(std::vector<double>& x, double rms) {
    const double p = mean_power(x);
    if (p > 0.0) {
        const double g = rms / std::sqrt(p);
        for (double& v : x) v *= g;
    }
}

/// Highest clean frequency: a quarter of Nyquist.
inline double clean_high_hz(int sample_rate) { return sample_rate / 8.0; }

inline std::vector<double> multi_sine(Rng& rng, std::size_t n, int fs) {
    const std::size_t tones = 3 + rng.index(6);
    std::vector<double> x(n, 0.0);
    for (std::size_t k = 0; k < tones; ++k) {
        const double f = rng.uniform(kCleanLowHz, clean_high_hz(fs));
        const double a = rng.uniform(0.2, 1.0);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double w = 2.0 * std::numbers::pi * f / fs;
        for (std::size_t t = 0; t < n; ++t) {
            x[t] += a * std::sin(w * static_cast<double>(t) + phase);
        }
    }
    normalize_rms(x, kCleanRms);
    return x;
}

/// Band-pass FIR: difference of two Hann-windowed sinc low-passes.
inline std::vector<double> band_pass_taps(double lo_hz, double hi_hz, int fs, std::size_t taps) {
    std::vector<double> h(taps);
    const double mid = static_cast<double>(taps - 1) / 2.0;
    const auto sinc_lp = [&](double fc, double n) {
        const double wc = 2.0 * fc / fs;
        return n == 0.0 ? wc : std::sin(std::numbers::pi * wc * n) / (std::numbers::pi * n);
    };
    for (std::size_t i = 0; i < taps; ++i) {
        const double n = static_cast<double>(i) - mid;
        const double win = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / (taps - 1));
        h[i] = (sinc_lp(hi_hz, n) - sinc_lp(lo_hz, n)) * win;
    }
    return h;
}

inline std::vector<double> filtered_noise_band(Rng& rng, std::size_t n, int fs) {
    const auto h = band_pass_taps(kCleanLowHz, clean_high_hz(fs), fs, 101);
    std::vector<double> white(n + h.size());
    for (double& v : white) v = rng.normal();
    std::vector<double> x(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            acc += h[k] * white[t + k];
        }
        x[t] = acc;
    }
    normalize_rms(x, kCleanRms);
    return x;
}

inline std::vector<double> make_noise(Rng& rng, NoiseKind kind, std::size_t n, int fs) {
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal();
    switch (kind) {
    case NoiseKind::white:
        break;
    case NoiseKind::low_pass_rumble: {
        // two cascaded one-pole low-passes at 100 Hz
        const double a = std::exp(-2.0 * std::numbers::pi * 100.0 / fs);
        for (int pass = 0; pass < 2; ++pass) {
            double state = 0.0;
            for (double& v : x) {
                state = a * state + (1.0 - a) * v;
                v = state;
            }
        }
        break;
    }
    case NoiseKind::amplitude_modulated: {
        const double fm = rng.uniform(4.0, 16.0);
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        for (std::size_t t = 0; t < n; ++t) {
            x[t] *= 1.0 + 0.9 * std::sin(2.0 * std::numbers::pi * fm * static_cast<double>(t) / fs + phase);
        }
        break;
    }
    }
    return x;
}

inline PairedExample make_example(const CorpusSpec& spec, std::uint64_t stream, std::size_t index,
                                  const std::vector<NoiseKind>& noises, const std::vector<double>& snrs) {
    Rng rng(derive_seed(spec.seed, {stream, index}));
    const int fs = spec.sample_rate;
    const std::size_t n = spec.example_len;
    Waveform clean{spec.clean_generator == CleanKind::multi_sine ? multi_sine(rng, n, fs)
                                                                  : filtered_noise_band(rng, n, fs),
                   fs};
    const double snr = snrs[index % snrs.size()];
    const NoiseKind kind = noises[(index / snrs.size()) % noises.size()];
    Waveform noise{make_noise(rng, kind, n, fs), fs};
    Waveform noisy = mix_at_snr(clean, noise, snr);
    return PairedExample{std::move(clean), std::move(noisy), snr, kind};
}

} // namespace detail

/// Generates the paired corpus described by `spec`.
///
/// Each example draws from its own stream derived from (seed, split, index),
/// so the result does not depend on `threads` or generation order. SNRs and
/// noise kinds are assigned round-robin over the split's grids.
inline Corpus synth_corpus(const CorpusSpec& spec, std::size_t threads = 1) {
    spec.validate();
    Corpus c;
    c.train.resize(spec.n_train);
    c.test.resize(spec.n_test);
    parallel_for(spec.n_train + spec.n_test, threads, [&](std::size_t i) {
        if (i < spec.n_train) {
            c.train[i] = detail::make_example(spec, detail::kTrainStream, i, spec.train_noises, spec.train_snrs_db);
        } else {
            const std::size_t j = i - spec.n_train;
            c.test[j] = detail::make_example(spec, detail::kTestStream, j, spec.test_noises, spec.test_snrs_db);
        }
    });
    return c;
}

inline std::string join_doubles(const std::vector<double>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + exact(v[i]);
    }
    return out;
}

inline std::string join_noises(const std::vector<NoiseKind>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + to_string(v[i]);
    }
    return out;
}

inline KeyValues to_key_values(const CorpusSpec& s) {
    return {
        {"n_train", std::to_string(s.n_train)},
        {"n_test", std::to_string(s.n_test)},
        {"example_len", std::to_string(s.example_len)},
        {"sample_rate", std::to_string(s.sample_rate)},
        {"clean_generator", to_string(s.clean_generator)},
        {"train_noises", join_noises(s.train_noises)},
        {"test_noises", join_noises(s.test_noises)},
        {"train_snrs_db", join_doubles(s.train_snrs_db)},
        {"test_snrs_db", join_doubles(s.test_snrs_db)},
        {"corpus_seed", std::to_string(s.seed)},
    };
}

/// Applies recognised keys from a key=value map on top of `base`.
inline CorpusSpec corpus_spec_from(const std::map<std::string, std::string>& kv, CorpusSpec base = {}) {
    auto num = [&](const char* key, auto& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            field = static_cast<std::remove_reference_t<decltype(field)>>(std::stoull(it->second));
        }
    };
    num("n_train", base.n_train);
    num("n_test", base.n_test);
    num("example_len", base.example_len);
    num("sample_rate", base.sample_rate);
    num("corpus_seed", base.seed);
    if (auto it = kv.find("clean_generator"); it != kv.end()) base.clean_generator = parse_clean_kind(it->second);
    auto noises = [&](const char* key, std::vector<NoiseKind>& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            field.clear();
            for (const auto& s : split(it->second, ',')) field.push_back(parse_noise_kind(s));
        }
    };
    noises("train_noises", base.train_noises);
    noises("test_noises", base.test_noises);
    auto snrs = [&](const char* key, std::vector<double>& field) {
        if (auto it = kv.find(key); it != kv.end()) {
            field.clear();
            for (const auto& s : split(it->second, ',')) field.push_back(std::stod(s));
        }
    };
    snrs("train_snrs_db", base.train_snrs_db);
    snrs("test_snrs_db", base.test_snrs_db);
    base.validate();
    return base;
}

/// Writes every waveform as little-endian float32 raw samples plus a
/// manifest.txt recording the spec.
inline void export_corpus(const Corpus& corpus, const CorpusSpec& spec, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    }
    auto write_raw = [&](const std::filesystem::path& path, const Waveform& w) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path.string() + " for writing");
        for (double s : w.samples) {
            const auto f = static_cast<float>(s);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            const char bytes[4] = {static_cast<char>(bits & 0xFF), static_cast<char>((bits >> 8) & 0xFF),
                                   static_cast<char>((bits >> 16) & 0xFF), static_cast<char>(bits >> 24)};
            out.write(bytes, 4);
        }
        if (!out) throw IoError("write failed for " + path.string());
    };
    auto name = [](const char* split_name, std::size_t i, const char* what) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s_%04zu_%s.f32", split_name, i, what);
        return std::string(buf);
    };
    KeyValues manifest = to_key_values(spec);
    manifest.emplace_back("format", "f32le");
    for (std::size_t i = 0; i < corpus.train.size(); ++i) {
        write_raw(dir / name("train", i, "clean"), corpus.train[i].clean);
        write_raw(dir / name("train", i, "noisy"), corpus.train[i].noisy);
    }
    for (std::size_t i = 0; i < corpus.test.size(); ++i) {
        write_raw(dir / name("test", i, "clean"), corpus.test[i].clean);
        write_raw(dir / name("test", i, "noisy"), corpus.test[i].noisy);
    }
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw IoError("cannot write manifest in " + dir.string());
    write_key_values(out, manifest);
}

} // namespace fcnz
