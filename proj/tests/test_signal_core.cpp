#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "fcnz/corpus.hpp"
#include "fcnz/metrics.hpp"
#include "fcnz/rng.hpp"
#include "fcnz/waveform.hpp"

using namespace fcnz;

namespace {

Waveform constant(double v, std::size_t n) { return Waveform{std::vector<double>(n, v), 16000}; }

double achieved_snr(const Waveform& clean, const Waveform& mixed) {
    std::vector<double> noise(clean.size());
    for (std::size_t i = 0; i < clean.size(); ++i) noise[i] = mixed.samples[i] - clean.samples[i];
    return 10.0 * std::log10(mean_power(clean.samples) / mean_power(noise));
}

Waveform random_wave(Rng& rng, std::size_t n, double scale) {
    Waveform w{std::vector<double>(n), 16000};
    for (auto& v : w.samples) v = scale * rng.normal();
    return w;
}

} // namespace

TEST(MixAtSnr, EqualPowerAtZeroDbAddsNoiseUnscaled) {
    const auto clean = constant(1.0, 8);
    const auto noise = constant(-1.0, 8);
    const auto out = mix_at_snr(clean, noise, 0.0);
    for (double v : out.samples) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_DOUBLE_EQ(snr_gain(1.0, 1.0, 0.0), 1.0);
}

TEST(MixAtSnr, TenDbAgainstFourTimesNoisePower) {
    const auto clean = constant(1.0, 16);
    Waveform noise{std::vector<double>(16), 16000};
    for (std::size_t i = 0; i < 16; ++i) noise.samples[i] = (i % 2 == 0) ? 2.0 : -2.0; // power 4
    const auto out = mix_at_snr(clean, noise, 10.0);
    const double g = (out.samples[0] - 1.0) / 2.0;
    EXPECT_NEAR(g, 0.158113883, 1e-9);
    EXPECT_NEAR(achieved_snr(clean, out), 10.0, 1e-9);
}

TEST(MixAtSnr, AchievedSnrMatchesRequestForRandomInputs) {
    Rng rng(42);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 16 + rng.index(500);
        const auto clean = random_wave(rng, n, rng.uniform(0.01, 3.0));
        const auto noise = random_wave(rng, n, rng.uniform(0.01, 3.0));
        const double snr = rng.uniform(-20.0, 30.0);
        const auto out = mix_at_snr(clean, noise, snr);
        EXPECT_NEAR(achieved_snr(clean, out), snr, 1e-9 * std::max(1.0, std::abs(snr)));

        // output - clean is exactly g * noise
        const double g = snr_gain(mean_power(clean.samples), mean_power(noise.samples), snr);
        for (std::size_t i = 0; i < n; ++i) {
            EXPECT_EQ(out.samples[i], clean.samples[i] + g * noise.samples[i]);
        }
    }
}

TEST(MixAtSnr, RejectsDegenerateInputs) {
    EXPECT_THROW(mix_at_snr(constant(0.0, 4), constant(1.0, 4), 0.0), DegenerateInputError);
    EXPECT_THROW(mix_at_snr(constant(1.0, 4), constant(0.0, 4), 0.0), DegenerateInputError);
    EXPECT_THROW(mix_at_snr(constant(1.0, 4), constant(1.0, 5), 0.0), ShapeError);
}

TEST(Corpus, AcceptsWideSnrGrids) {
    CorpusSpec spec;
    EXPECT_EQ(spec.train_snrs_db, (std::vector<double>{-10, -5, 0, 5, 10}));
    EXPECT_EQ(spec.test_snrs_db, (std::vector<double>{-12, -6, 0, 6}));
    EXPECT_NO_THROW(spec.validate());
}

TEST(Corpus, ShapeContract) {
    CorpusSpec spec;
    spec.n_train = 8;
    spec.n_test = 3;
    spec.example_len = 2048;
    const auto c = synth_corpus(spec);
    ASSERT_EQ(c.train.size(), 8U);
    ASSERT_EQ(c.test.size(), 3U);
    for (const auto& ex : c.train) {
        EXPECT_EQ(ex.clean.size(), 2048U);
        EXPECT_EQ(ex.noisy.size(), 2048U);
    }
}

TEST(Corpus, DeterministicAndThreadIndependent) {
    CorpusSpec spec;
    spec.n_train = 12;
    spec.n_test = 6;
    spec.example_len = 512;
    const auto a = synth_corpus(spec, 1);
    const auto b = synth_corpus(spec, 1);
    const auto c = synth_corpus(spec, 4);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    spec.seed += 1;
    EXPECT_NE(a, synth_corpus(spec));
}

TEST(Corpus, EveryPairMeetsItsSnr) {
    for (auto clean_kind : {CleanKind::multi_sine, CleanKind::filtered_noise_band}) {
        CorpusSpec spec;
        spec.n_train = 20;
        spec.n_test = 8;
        spec.example_len = 1024;
        spec.clean_generator = clean_kind;
        const auto c = synth_corpus(spec);
        for (const auto* split : {&c.train, &c.test}) {
            for (const auto& ex : *split) {
                EXPECT_NEAR(achieved_snr(ex.clean, ex.noisy), ex.snr_db, 1e-9 * std::max(1.0, std::abs(ex.snr_db)));
            }
        }
    }
}

TEST(Corpus, TrainAndTestConditionsAreMismatched) {
    CorpusSpec spec;
    spec.n_train = 10;
    spec.n_test = 4;
    spec.example_len = 256;
    const auto c = synth_corpus(spec);
    for (const auto& ex : c.train) EXPECT_NE(ex.noise, NoiseKind::amplitude_modulated);
    for (const auto& ex : c.test) {
        EXPECT_EQ(ex.noise, NoiseKind::amplitude_modulated);
        EXPECT_TRUE(ex.snr_db == -12 || ex.snr_db == -6 || ex.snr_db == 0 || ex.snr_db == 6);
    }
}

TEST(Corpus, RejectsInvalidSpec) {
    CorpusSpec spec;
    spec.n_train = 0;
    EXPECT_THROW(synth_corpus(spec), ParameterError);
    spec = {};
    spec.test_snrs_db.clear();
    EXPECT_THROW(synth_corpus(spec), ParameterError);
}

TEST(Corpus, ExportWritesRawFloatsAndManifest) {
    CorpusSpec spec;
    spec.n_train = 2;
    spec.n_test = 1;
    spec.example_len = 64;
    spec.seed = 99;
    const auto c = synth_corpus(spec);
    const auto dir = std::filesystem::temp_directory_path() / "fcnz_corpus_export_test";
    std::filesystem::remove_all(dir);
    export_corpus(c, spec, dir);
    EXPECT_EQ(std::filesystem::file_size(dir / "train_0001_noisy.f32"), 64U * 4U);
    std::ifstream manifest(dir / "manifest.txt");
    const auto kv = parse_key_values(manifest);
    EXPECT_EQ(kv.at("corpus_seed"), "99");
    EXPECT_EQ(corpus_spec_from(kv), spec);

    std::ifstream raw(dir / "test_0000_clean.f32", std::ios::binary);
    unsigned char b[4];
    raw.read(reinterpret_cast<char*>(b), 4);
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    float f;
    std::memcpy(&f, &bits, 4);
    EXPECT_EQ(f, static_cast<float>(c.test[0].clean.samples[0]));
    std::filesystem::remove_all(dir);
}

TEST(SiSdr, PerfectAndScaledEstimatesHitTheCap) {
    Rng rng(3);
    std::vector<double> ref(1000);
    for (auto& v : ref) v = rng.normal();
    EXPECT_EQ(si_sdr(ref, ref), 100.0);
    std::vector<double> half(ref);
    for (auto& v : half) v *= 0.5;
    EXPECT_EQ(si_sdr(half, ref), 100.0);
    for (double a : {1e-3, 0.7, 3.0, 1e4}) {
        std::vector<double> scaled(ref);
        for (auto& v : scaled) v *= a;
        EXPECT_EQ(si_sdr(scaled, ref), 100.0);
    }
}

TEST(SiSdr, OrthogonalNoiseAtOnePercentPowerIsTwentyDb) {
    const std::size_t n = 4000;
    std::vector<double> ref(n), noise(n);
    Rng rng(5);
    for (std::size_t t = 0; t < n; ++t) {
        ref[t] = std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(t) / n);
        noise[t] = rng.normal();
    }
    // Gram-Schmidt against the reference, then scale to mean power 0.01
    double dot = 0.0, rr = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        dot += noise[t] * ref[t];
        rr += ref[t] * ref[t];
    }
    for (std::size_t t = 0; t < n; ++t) noise[t] -= dot / rr * ref[t];
    const double g = std::sqrt(0.01 / mean_power(noise));
    std::vector<double> est(n);
    double sig = 0.0, res = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        est[t] = ref[t] + g * noise[t];
        sig += ref[t] * ref[t];
        res += g * noise[t] * g * noise[t];
    }
    const double direct = 10.0 * std::log10(sig / res);
    EXPECT_NEAR(si_sdr(est, ref), direct, 1e-9);
    // unit-amplitude sine has power 0.5, so 0.5 / 0.01 is ~17 dB; unit power is 20 dB
    std::vector<double> unit_ref(ref), unit_est(est);
    for (std::size_t t = 0; t < n; ++t) {
        unit_ref[t] = ref[t] * std::sqrt(2.0);
        unit_est[t] = unit_ref[t] + g * noise[t];
    }
    EXPECT_NEAR(si_sdr(unit_est, unit_ref), 20.0, 0.1);
}

TEST(SiSdr, ZeroReferenceIsRejected) {
    std::vector<double> z(10, 0.0), x(10, 1.0);
    EXPECT_THROW(si_sdr(x, z), DegenerateInputError);
    EXPECT_THROW(si_sdr(std::vector<double>(3), std::vector<double>(4)), ShapeError);
    EXPECT_EQ(si_sdr(z, x), kSiSdrFloorDb);
}

TEST(SegSnr, IdenticalSignalsHitTheCeiling) {
    Rng rng(8);
    std::vector<double> ref(1024);
    for (auto& v : ref) v = rng.normal();
    EXPECT_EQ(seg_snr(ref, ref, 128), 35.0);
}

TEST(SegSnr, ZeroDbInEveryFrame) {
    Rng rng(9);
    const std::size_t frame = 128, frames = 16;
    std::vector<double> ref(frame * frames), est(frame * frames);
    for (auto& v : ref) v = rng.normal();
    for (std::size_t f = 0; f < frames; ++f) {
        std::vector<double> noise(frame);
        for (auto& v : noise) v = rng.normal();
        double ps = 0.0, pn = 0.0;
        for (std::size_t i = 0; i < frame; ++i) {
            ps += ref[f * frame + i] * ref[f * frame + i];
            pn += noise[i] * noise[i];
        }
        const double g = std::sqrt(ps / pn);
        for (std::size_t i = 0; i < frame; ++i) est[f * frame + i] = ref[f * frame + i] + g * noise[i];
    }
    EXPECT_NEAR(seg_snr(est, ref, frame), 0.0, 0.1);
}

TEST(SegSnr, FrameLongerThanSignalIsAnError) {
    std::vector<double> x(100, 1.0);
    EXPECT_THROW(seg_snr(x, x, 101), ShapeError);
    EXPECT_THROW(seg_snr(x, x, 0), ShapeError);
}

TEST(SegSnr, FramesClampAtTheFloor) {
    std::vector<double> ref(256, 1.0), est(256, -100.0);
    EXPECT_EQ(seg_snr(est, ref, 64), -10.0);
}
