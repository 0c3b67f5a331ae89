// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "fcnz/fcnz.hpp"
#include "oracles.hpp"

using namespace fcnz;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Check = std::function<Outcome()>;

Outcome compression_rate_check() {
    const auto r = compression_rate(10, 4, 32);
    const bool ok = r.original_bits == 320 && r.compressed_bits == 148 && r.rate == 320.0 / 148.0 &&
                    fixed(r.rate, 2) == "2.16";
    return {ok, "rate=" + fixed(r.rate, 2) + " (" + std::to_string(r.original_bits) + "/" +
                    std::to_string(r.compressed_bits) + ")"};
}

Outcome headline_size_check() {
    const auto r = size_report(240900, 300300, 16, 1);
    const double pct = 100.0 * r.size_fraction;
    return {std::abs(pct - 10.03) <= 0.01, "size=" + fixed(pct, 4) + "%"};
}

Outcome table_row_check() {
    const auto m = make_model<float>(reference_config());
    auto pruned = m;
    std::size_t masked_weights = 0;
    for (std::size_t n = 1; n < 7; ++n) {
        auto& layer = pruned.layers[n];
        for (std::size_t j = 0; j < layer.filters.size(); ++j) {
            for (std::size_t s = 0; s < 6; ++s) {
                const std::size_t c = (j + s) % layer.in_channels;
                layer.filters[j].active[c] = 0;
                for (auto& w : layer.filters[j].channel(c, layer.taps)) w = 0.0F;
                masked_weights += layer.taps;
            }
        }
    }
    const auto r = removal_report(m, compact_model(pruned));
    const double pct = 100.0 * r.removal_ratio;
    const bool ok = masked_weights == 59400 && r.original_params == 300300 && r.remaining_params == 240900 &&
                    std::abs(pct - 19.8) <= 0.05;
    return {ok, "ratio=" + fixed(pct, 2) + "% remaining=" + with_thousands(r.remaining_params)};
}

Outcome bapd_check() {
    const auto b = compute_bapd(1.64, 1.85);
    return {std::abs(b.bound - 1.745) < 1e-12 && fixed(b.bound, 2) == "1.75",
            "bound=" + exact(b.bound) + " shown " + fixed(b.bound, 2)};
}

Outcome sparsity_oracle_check() {
    Rng rng(501);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t in = 1 + rng.index(8), taps = 1 + rng.index(16);
        std::vector<std::vector<double>> channels(in, std::vector<double>(taps));
        std::vector<double> flat;
        for (auto& ch : channels) {
            for (auto& w : ch) {
                w = rng.uniform() < 0.1 ? 0.0 : rng.normal();
                flat.push_back(w);
            }
        }
        // whole filter
        const auto brute = testing::brute_sparsity(channels);
        const double m = filter_mean_abs<double>(flat, taps);
        if (m != brute.mean_abs || channel_sparsity<double>(flat, taps, m) != brute.sparsity) ++mismatches;
        // a random channel subset as scope
        std::vector<std::size_t> scope;
        std::vector<std::vector<double>> subset;
        for (std::size_t c = 0; c < in; ++c) {
            if (rng.uniform() < 0.6) {
                scope.push_back(c);
                subset.push_back(channels[c]);
            }
        }
        if (scope.empty()) continue;
        const auto brute_sub = testing::brute_sparsity(subset);
        if (filter_mean_abs<double>(flat, taps, scope) != brute_sub.mean_abs) ++mismatches;
    }
    return {mismatches == 0, "1000 filters, mismatches=" + std::to_string(mismatches)};
}

Outcome compaction_check() {
    Rng rng(601);
    double worst = 0.0;
    std::size_t removed_filters = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t j1 = 1 + rng.index(8), j2 = 1 + rng.index(8);
        auto m = testing::random_model<float>(rng.next(), {{j1, 1 + rng.index(9), Activation::tanh},
                                                          {j2, 1 + rng.index(9), Activation::tanh},
                                                          {1, 1 + rng.index(9), Activation::identity}});
        testing::random_mask(m, rng, rng.uniform(0.1, 0.7));
        const auto c = compact_model(m);
        removed_filters += (j1 + j2) - (c.layers[0].filters.size() + c.layers[1].filters.size());
        for (int probe = 0; probe < 3; ++probe) {
            const Waveform x{testing::random_signal(rng, 200), 16000};
            const auto a = fcn_forward(m, x).samples;
            const auto b = fcn_forward(c, x).samples;
            double diff = 0.0, scale = 0.0;
            for (std::size_t t = 0; t < a.size(); ++t) {
                diff = std::max(diff, std::abs(a[t] - b[t]));
                scale = std::max(scale, std::abs(a[t]));
            }
            worst = std::max(worst, diff / (1.0 + scale));
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", worst);
    return {worst <= 1e-6, "100 models, max rel diff=" + std::string(buf) + ", dead filters removed=" +
                               std::to_string(removed_filters)};
}

Outcome gradient_check() {
    CorpusSpec spec;
    spec.n_train = 2;
    spec.n_test = 1;
    spec.example_len = 32;
    spec.seed = 701;
    const auto corpus = synth_corpus(spec);
    Rng rng(702);
    double worst = 0.0;
    std::size_t models = 0;
    for (int trial = 0; trial < 20; ++trial) {
        auto m = testing::random_model<double>(rng.next(), {{1 + rng.index(4), 1 + rng.index(7), Activation::tanh},
                                                           {1 + rng.index(4), 1 + rng.index(7), Activation::tanh},
                                                           {1, 1 + rng.index(7), Activation::identity}});
        if (trial % 2) testing::random_mask(m, rng, 0.3);
        if (count_params(m, false) > 200) continue;
        ++models;
        const auto [loss, grad] = loss_and_gradient(m, corpus.train);
        const auto flags = trainable_flags(m);
        auto params = flatten(m);
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!flags[i]) continue;
            const double h = 1e-4, orig = params[i];
            auto probe = m;
            params[i] = orig + h;
            assign_flat<double>(probe, params);
            const double up = mean_loss(probe, corpus.train);
            params[i] = orig - h;
            assign_flat<double>(probe, params);
            const double down = mean_loss(probe, corpus.train);
            params[i] = orig;
            const double numeric = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(grad[i] - numeric) / std::max({std::abs(grad[i]), std::abs(numeric), 1e-6}));
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", worst);
    return {models >= 10 && worst <= 1e-5, std::to_string(models) + " models, max rel err=" + buf};
}

Outcome kmeans_oracle_check() {
    Rng rng(801);
    std::size_t gaps = 0, monotone_breaks = 0;
    std::string first_gap;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.index(12), k = 1 + rng.index(4);
        std::vector<double> v(n);
        for (auto& x : v) x = rng.normal();
        const auto fit = kmeans_fit(v, k, rng.next());
        const double best = testing::optimal_kmeans_sse(v, k);
        if (std::abs(fit.sse - best) > 1e-9 * best + 1e-15) {
            if (gaps++ == 0) first_gap = " (first: n=" + std::to_string(n) + " k=" + std::to_string(k) + " lloyd=" + exact(fit.sse) + " optimum=" + exact(best) + ")";
        }
        for (std::size_t kk = 2; kk <= 4; ++kk) {
            if (testing::optimal_kmeans_sse(v, kk) > testing::optimal_kmeans_sse(v, kk - 1)) ++monotone_breaks;
        }
    }
    return {gaps == 0 && monotone_breaks == 0,
            "200 sets, gaps=" + std::to_string(gaps) + first_gap + ", monotonicity breaks=" + std::to_string(monotone_breaks)};
}

Outcome end_to_end_check() {
    CorpusSpec spec; // 64 train / 32 test examples of 2048 samples
    const auto corpus = synth_corpus(spec);
    TrainConfig tc;
    tc.epochs = 30;
    tc.learning_rate = 3e-3;
    const auto baseline = train(make_model<float>(default_config()), corpus.train, tc).model;
    const double noisy = score_noisy(corpus.test).sisdr;
    const double base = score_model(baseline, corpus.test).sisdr;

    PruneConfig pc;
    pc.theta_schedule = theta_schedule(0.0);
    pc.stop_at_removal = 0.15;
    const auto run = prune_retrain(baseline, corpus, pc, tc);
    const auto& last = run.outcomes.back();
    const auto q = quantize_model(run.model, 16, QuantScope::per_layer, 5);
    const double after = score_model(dequantize(q), corpus.test).sisdr;
    const auto size = size_report(count_weights(run.model, true), count_weights(baseline, true), 16, q.scopes.size());

    const double gain = base - noisy;
    const double drop = base - after;
    const bool ok = corpus.train.size() >= 64 && gain >= 3.0 && last.removal_ratio >= 0.15 && drop <= 1.0 &&
                    size.size_fraction <= 0.15;
    return {ok, "gain=" + fixed(gain, 2) + "dB theta=" + fixed(last.theta, 2) + " removal=" +
                    fixed(100 * last.removal_ratio, 1) + "% drop=" + fixed(drop, 2) + "dB size=" +
                    fixed(size.size_fraction, 4)};
}

Outcome monotonicity_check() {
    Rng rng(1001);
    std::size_t violations = 0, masked_total = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto m = testing::random_model<float>(rng.next(), {{1 + rng.index(8), 1 + rng.index(12), Activation::tanh},
                                                                {1 + rng.index(8), 1 + rng.index(12), Activation::tanh},
                                                                {1, 1 + rng.index(12), Activation::identity}});
        std::set<std::tuple<std::size_t, std::size_t, std::size_t>> previous;
        for (int t = 95; t >= 60; t -= 5) {
            const auto masked = mask_step(m, t / 100.0).model;
            std::set<std::tuple<std::size_t, std::size_t, std::size_t>> now;
            for (std::size_t n = 0; n < masked.layers.size(); ++n) {
                for (std::size_t j = 0; j < masked.layers[n].filters.size(); ++j) {
                    const auto& f = masked.layers[n].filters[j];
                    for (std::size_t c = 0; c < f.channel_count(); ++c) {
                        if (!f.active[c]) now.insert({n, j, c});
                    }
                }
            }
            if (!std::ranges::includes(now, previous)) ++violations;
            previous = std::move(now);
        }
        masked_total += previous.size();
    }
    return {violations == 0, "100 models, violations=" + std::to_string(violations) + ", channels masked at 0.60=" +
                                 std::to_string(masked_total)};
}

Outcome serialization_check() {
    Rng rng(1101);
    std::size_t failures = 0;
    const fs::path dir = fs::temp_directory_path() / ("fcnz_acceptance_io_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    for (int trial = 0; trial < 100; ++trial) {
        auto m = testing::random_model<float>(rng.next(), {{1 + rng.index(6), 1 + rng.index(9), Activation::tanh},
                                                          {1 + rng.index(6), 1 + rng.index(9), Activation::tanh},
                                                          {1, 1 + rng.index(9), Activation::identity}},
                                              rng.uniform() < 0.5);
        if (trial % 3 != 0) {
            testing::random_mask(m, rng, 0.4);
            m = compact_model(m);
        }
        const fs::path path = dir / "m.fcnz";
        if (trial % 3 == 2) {
            const auto q = quantize_model(m, 1 + rng.index(32), trial % 2 ? QuantScope::global : QuantScope::per_layer,
                                          rng.next());
            save(q, path);
            PayloadStats stats;
            const auto back = load(path, &stats);
            const auto* loaded = std::get_if<QuantizedModel<float>>(&back);
            if (!loaded || !(*loaded == q) || encode_model(*loaded) != read_bytes(path)) ++failures;
            if (stats.codebook_bits + stats.index_bits != compression_report(q).compressed_bits) ++failures;
        } else {
            save(m, path);
            const auto back = load(path);
            const auto* loaded = std::get_if<FcnModel<float>>(&back);
            if (!loaded || !(*loaded == m) || encode_model(*loaded) != read_bytes(path)) ++failures;
        }
    }
    fs::remove_all(dir);
    return {failures == 0, "100 models, failures=" + std::to_string(failures)};
}

int run_cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + FCNZ_CLI_PATH + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    return std::system(cmd.c_str());
}

Outcome determinism_check() {
    const fs::path dir = fs::temp_directory_path() / ("fcnz_acceptance_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    const fs::path config = dir / "small.cfg";
    write_text(config, "n_train=16\nn_test=8\nexample_len=512\nepochs=4\nlearning_rate=0.003\n");
    const std::string common = "--config \"" + config.string() + "\"";
    const fs::path model = dir / "model.fcnz";
    if (run_cli("train " + common + " --threads 1 --seed 3 --out \"" + model.string() + "\"", dir / "train.log") != 0) {
        return {false, "train command failed"};
    }
    std::vector<std::vector<std::uint8_t>> tables, series;
    for (int threads : {1, 8}) {
        const fs::path out = dir / ("sweep_" + std::to_string(threads) + ".tsv");
        const fs::path plots = dir / ("series_" + std::to_string(threads));
        const std::string args = "sweep " + common + " --threads " + std::to_string(threads) + " --model \"" +
                                 model.string() + "\" --thetas 0.9,0.8 --ks 2,8,16 --retrain-epochs 1 --out \"" +
                                 out.string() + "\" --series \"" + plots.string() + "\"";
        if (run_cli(args, dir / "sweep.log") != 0) return {false, "sweep command failed"};
        tables.push_back(read_bytes(out));
        auto s = read_bytes(plots / "sisdr.tsv");
        const auto t = read_bytes(plots / "segsnr.tsv");
        s.insert(s.end(), t.begin(), t.end());
        series.push_back(std::move(s));
    }
    fs::remove_all(dir);
    const bool ok = !tables[0].empty() && tables[0] == tables[1] && series[0] == series[1];
    return {ok, "threads 1 vs 8: table " + std::to_string(tables[0].size()) + " bytes " +
                    (tables[0] == tables[1] ? "identical" : "differ") + ", series " +
                    (series[0] == series[1] ? "identical" : "differ")};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, Check>> criteria{
        {"compression rate 10 weights k=4", compression_rate_check},
        {"pruned+quantized size fraction", headline_size_check},
        {"removal ratio on the reference config", table_row_check},
        {"bound for acceptable performance drop", bapd_check},
        {"sparsity statistic vs brute force", sparsity_oracle_check},
        {"compaction equivalence", compaction_check},
        {"gradient check", gradient_check},
        {"1-D k-means vs exact optimum", kmeans_oracle_check},
        {"end-to-end train/prune/quantize", end_to_end_check},
        {"threshold monotonicity", monotonicity_check},
        {"serialization round trip", serialization_check},
        {"sweep determinism across thread counts", determinism_check},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %2zu %s: %s [%.2fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
