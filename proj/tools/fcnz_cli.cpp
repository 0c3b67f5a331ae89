// Command-line front end: train, prune, quantize, pipeline, sweep, eval, corpus.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fcnz/fcnz.hpp"

namespace {

using namespace fcnz;

struct Common {
    std::string config_path;
    std::uint64_t corpus_seed = CorpusSpec{}.seed;
    bool corpus_seed_set = false;
    std::size_t threads = 0;
};

/// Settings shared by every subcommand, from an optional key=value file.
struct Settings {
    CorpusSpec corpus;
    FcnConfig model = default_config();
    TrainConfig train;
};

std::vector<LayerSpec> parse_layers(const std::string& text) {
    std::vector<LayerSpec> out;
    for (const auto& item : split(text, ',')) {
        const auto parts = split(item, ':');
        if (parts.size() != 3) throw ParameterError("layer spec '" + item + "' is not filters:taps:activation");
        out.push_back({std::stoul(parts[0]), std::stoul(parts[1]), parse_activation(parts[2])});
    }
    return out;
}

Settings load_settings(const Common& common) {
    std::map<std::string, std::string> kv;
    if (!common.config_path.empty()) {
        std::ifstream in(common.config_path);
        if (!in) throw IoError("cannot open config " + common.config_path);
        kv = parse_key_values(in);
    }
    Settings s;
    s.corpus = corpus_spec_from(kv);
    if (common.corpus_seed_set) s.corpus.seed = common.corpus_seed;
    if (auto it = kv.find("layers"); it != kv.end()) s.model.layers = parse_layers(it->second);
    if (auto it = kv.find("use_bias"); it != kv.end()) s.model.use_bias = it->second == "true" || it->second == "1";
    if (auto it = kv.find("model_seed"); it != kv.end()) s.model.seed = std::stoull(it->second);
    if (auto it = kv.find("epochs"); it != kv.end()) s.train.epochs = std::stoul(it->second);
    if (auto it = kv.find("batch_size"); it != kv.end()) s.train.batch_size = std::stoul(it->second);
    if (auto it = kv.find("learning_rate"); it != kv.end()) s.train.learning_rate = std::stod(it->second);
    if (auto it = kv.find("optimizer"); it != kv.end()) s.train.optimizer = parse_optimizer(it->second);
    if (auto it = kv.find("train_seed"); it != kv.end()) s.train.seed = std::stoull(it->second);
    s.train.threads = common.threads;
    s.model.validate();
    s.train.validate();
    return s;
}

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "key=value file with corpus, model and training settings");
    cmd->add_option_function<std::uint64_t>(
        "--corpus-seed",
        [&c](std::uint64_t v) {
            c.corpus_seed = v;
            c.corpus_seed_set = true;
        },
        "seed of the synthetic corpus");
    cmd->add_option("--threads", c.threads, "worker threads (0 = all cores); output does not depend on it");
}

FcnModel<float> load_dense(const std::string& path) { return as_dense(load(path)); }

FcnModel<float> load_raw(const std::string& path) {
    auto m = load(path);
    if (!std::holds_alternative<FcnModel<float>>(m)) {
        throw ParameterError(path + " holds a quantized model; this command needs raw weights");
    }
    return std::get<FcnModel<float>>(std::move(m));
}

std::string kv_table(const KeyValues& kv) {
    std::string out = "key\tvalue\n";
    for (const auto& [k, v] : kv) out += k + '\t' + v + '\n';
    return out;
}

void print(const KeyValues& kv) { write_key_values(std::cout, kv); }

std::vector<std::string> split_list(const std::string& s) { return split(s, ','); }

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"fcnz: train, prune and quantize a 1-D convolutional waveform denoiser"};
    app.require_subcommand(1);

    Common common;

    // train
    std::string train_out;
    std::optional<std::uint64_t> train_seed;
    auto* train_cmd = app.add_subcommand("train", "train a model on the synthetic corpus");
    add_common(train_cmd, common);
    train_cmd->add_option("--out", train_out, "output model file")->required();
    train_cmd->add_option("--seed", train_seed, "model initialisation and shuffling seed");

    // prune
    std::string prune_model, prune_out, prune_report;
    double prune_theta = 0.70, prune_step = 0.05;
    std::size_t prune_epochs = 5, prune_settle = 2;
    std::string prune_scope_mode = "active";
    auto* prune_cmd = app.add_subcommand("prune", "mask, retrain and remove sparse channels");
    add_common(prune_cmd, common);
    prune_cmd->add_option("--model", prune_model)->required();
    prune_cmd->add_option("--theta", prune_theta, "final sparsity threshold");
    prune_cmd->add_option("--schedule-step", prune_step, "threshold decrement from 1.00");
    prune_cmd->add_option("--retrain-epochs", prune_epochs, "epochs per retraining round");
    prune_cmd->add_option("--settle", prune_settle, "mask/retrain rounds per threshold before removal");
    prune_cmd->add_option("--mean-scope", prune_scope_mode, "channels in the filter mean: active|all")
        ->check(CLI::IsMember({"active", "all"}));
    prune_cmd->add_option("--out", prune_out)->required();
    prune_cmd->add_option("--report", prune_report, "threshold / removal ratio / remaining parameters table");

    // quantize
    std::string quant_model, quant_out, quant_report, quant_scope = "per-layer";
    std::size_t quant_k = 16;
    std::uint64_t quant_seed = 5;
    auto* quant_cmd = app.add_subcommand("quantize", "k-means quantize the weights of a model");
    add_common(quant_cmd, common);
    quant_cmd->add_option("--model", quant_model)->required();
    quant_cmd->add_option("--k", quant_k, "clusters per codebook")->check(CLI::Range(1, 65536));
    quant_cmd->add_option("--scope", quant_scope)->check(CLI::IsMember({"per-layer", "global"}));
    quant_cmd->add_option("--seed", quant_seed);
    quant_cmd->add_option("--out", quant_out)->required();
    quant_cmd->add_option("--report", quant_report);

    // pipeline
    std::string pipe_model, pipe_out, pipe_report, pipe_scope = "per-layer";
    double pipe_theta = 0.70;
    std::size_t pipe_k = 16;
    auto* pipe_cmd = app.add_subcommand("pipeline", "prune then quantize");
    add_common(pipe_cmd, common);
    pipe_cmd->add_option("--model", pipe_model)->required();
    pipe_cmd->add_option("--theta", pipe_theta);
    pipe_cmd->add_option("--k", pipe_k)->check(CLI::Range(1, 65536));
    pipe_cmd->add_option("--scope", pipe_scope)->check(CLI::IsMember({"per-layer", "global"}));
    pipe_cmd->add_option("--schedule-step", prune_step);
    pipe_cmd->add_option("--retrain-epochs", prune_epochs);
    pipe_cmd->add_option("--settle", prune_settle);
    pipe_cmd->add_option("--out", pipe_out)->required();
    pipe_cmd->add_option("--report", pipe_report);

    // sweep
    std::string sweep_model, sweep_thetas = "0.65,0.70,0.75", sweep_ks = "2,4,8,16,32,64", sweep_metric = "sisdr";
    std::string sweep_out, sweep_series_dir, sweep_scope = "per-layer";
    auto* sweep_cmd = app.add_subcommand("sweep", "evaluate a theta x k grid and pick an operating point");
    add_common(sweep_cmd, common);
    sweep_cmd->add_option("--model", sweep_model)->required();
    sweep_cmd->add_option("--thetas", sweep_thetas);
    sweep_cmd->add_option("--ks", sweep_ks);
    sweep_cmd->add_option("--metric", sweep_metric)->check(CLI::IsMember({"sisdr", "segsnr"}));
    sweep_cmd->add_option("--scope", sweep_scope)->check(CLI::IsMember({"per-layer", "global"}));
    sweep_cmd->add_option("--schedule-step", prune_step);
    sweep_cmd->add_option("--retrain-epochs", prune_epochs);
    sweep_cmd->add_option("--settle", prune_settle);
    sweep_cmd->add_option("--out", sweep_out)->required();
    sweep_cmd->add_option("--series", sweep_series_dir, "directory for per-metric plot series");

    // eval
    std::string eval_model, eval_metrics = "sisdr,segsnr";
    auto* eval_cmd = app.add_subcommand("eval", "score a model on the test split");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--model", eval_model)->required();
    eval_cmd->add_option("--metric", eval_metrics, "comma-separated: sisdr,segsnr");

    // corpus
    std::string corpus_out;
    auto* corpus_cmd = app.add_subcommand("corpus", "export the synthetic corpus as raw float32 files");
    add_common(corpus_cmd, common);
    corpus_cmd->add_option("--out", corpus_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const Settings settings = load_settings(common);
        auto pipeline_config = [&](const std::string& scope) {
            PipelineConfig pc;
            pc.train = settings.train;
            pc.schedule_step = prune_step;
            pc.retrain_epochs_per_step = prune_epochs;
            pc.settle_iterations = prune_settle;
            pc.scope_mode = prune_scope_mode == "all" ? ScopeMode::all_channels : ScopeMode::active_channels_only;
            pc.quant_scope = parse_quant_scope(scope);
            pc.quant_seed = quant_seed;
            return pc;
        };

        if (*train_cmd) {
            FcnConfig mc = settings.model;
            TrainConfig tc = settings.train;
            if (train_seed) {
                mc.seed = *train_seed;
                tc.seed = derive_seed(*train_seed, {1});
            }
            const auto corpus = synth_corpus(settings.corpus, common.threads);
            auto result = train(make_model<float>(mc), corpus.train, tc);
            for (std::size_t e = 0; e < result.loss_history.size(); ++e) {
                std::printf("epoch %zu loss %.8f\n", e + 1, result.loss_history[e]);
            }
            save(result.model, train_out);
            const auto noisy = score_noisy(corpus.test);
            const auto scores = score_model(result.model, corpus.test, common.threads);
            print({{"params", std::to_string(count_params(result.model, false))},
                   {"noisy_sisdr", fixed(noisy.sisdr, 4)},
                   {"model_sisdr", fixed(scores.sisdr, 4)},
                   {"model_segsnr", fixed(scores.segsnr, 4)}});
        } else if (*prune_cmd) {
            const auto model = load_raw(prune_model);
            const auto corpus = synth_corpus(settings.corpus, common.threads);
            const auto pc = pipeline_config("per-layer");
            const auto run = prune_retrain(model, corpus, pc.prune_config(prune_theta), pc.train);
            save(run.model, prune_out);
            if (!prune_report.empty()) write_text(prune_report, removal_table(run.outcomes));
            std::cout << removal_table(run.outcomes);
            print(to_key_values(run.outcomes.back()));
        } else if (*quant_cmd) {
            const auto model = load_raw(quant_model);
            const auto q = quantize_model(model, quant_k, parse_quant_scope(quant_scope), quant_seed);
            save(q, quant_out);
            auto kv = to_key_values(compression_report(q));
            kv.emplace(kv.begin(), "scope", quant_scope);
            kv.emplace(kv.begin(), "k", std::to_string(quant_k));
            if (!quant_report.empty()) write_text(quant_report, kv_table(kv));
            print(kv);
        } else if (*pipe_cmd) {
            const auto model = load_raw(pipe_model);
            const auto corpus = synth_corpus(settings.corpus, common.threads);
            const auto result = run_pp_pq(model, corpus, pipe_theta, pipe_k, pipeline_config(pipe_scope));
            save(result.model, pipe_out);
            const auto kv = to_key_values(result.report);
            if (!pipe_report.empty()) write_text(pipe_report, kv_table(kv));
            std::cout << removal_table(result.report.prune_steps);
            print(kv);
        } else if (*sweep_cmd) {
            const auto model = load_raw(sweep_model);
            const auto corpus = synth_corpus(settings.corpus, common.threads);
            std::vector<double> thetas;
            for (const auto& t : split_list(sweep_thetas)) thetas.push_back(std::stod(t));
            std::vector<std::size_t> ks;
            for (const auto& k : split_list(sweep_ks)) ks.push_back(std::stoul(k));
            const auto result = sweep(model, corpus, thetas, ks, pipeline_config(sweep_scope), parse_metric(sweep_metric));
            write_text(sweep_out, sweep_table(result));
            if (!sweep_series_dir.empty()) write_sweep_series(result, sweep_series_dir);
            std::cout << sweep_table(result);
        } else if (*eval_cmd) {
            const auto model = load_dense(eval_model);
            const auto corpus = synth_corpus(settings.corpus, common.threads);
            const auto noisy = score_noisy(corpus.test);
            const auto scores = score_model(model, corpus.test, common.threads);
            KeyValues kv{{"params", std::to_string(count_params(model, true))}};
            for (const auto& name : split_list(eval_metrics)) {
                const Metric m = parse_metric(name);
                kv.emplace_back("noisy_" + name, fixed(noisy.get(m), 4));
                kv.emplace_back("model_" + name, fixed(scores.get(m), 4));
                kv.emplace_back("bapd_" + name, fixed(compute_bapd(noisy.get(m), scores.get(m), m).bound, 4));
            }
            print(kv);
        } else if (*corpus_cmd) {
            const auto corpus = synth_corpus(settings.corpus, common.threads);
            export_corpus(corpus, settings.corpus, corpus_out);
            std::cout << "wrote " << corpus.train.size() + corpus.test.size() << " pairs to " << corpus_out << '\n';
        }
    } catch (const fcnz::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
