// posekit: toy training, evaluation, cost analysis and inference benchmarking
// for a lightweight deconvolution-head pose estimation model.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "posekit/dataio.hpp"
#include "posekit/pipeline.hpp"

namespace {

struct CommonOpts {
    std::string config_path;
    std::string dataset;
    std::string out_dir;
    std::string checkpoint;
    int64_t seed = -1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key=value config file");
    cmd->add_option("--dataset", opts.dataset, "dataset directory");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--checkpoint", opts.checkpoint, "model checkpoint path");
    cmd->add_option("--seed", opts.seed, "rng seed");
}

posekit::RunConfig make_run_config(const CommonOpts& opts) {
    posekit::RunConfig cfg;
    if (!opts.config_path.empty())
        cfg = posekit::RunConfig::from_kv(posekit::KeyValueConfig::load(opts.config_path));
    if (!opts.dataset.empty()) cfg.dataset_dir = opts.dataset;
    if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
    if (!opts.checkpoint.empty()) cfg.checkpoint = opts.checkpoint;
    if (opts.seed >= 0) cfg.seed = static_cast<uint64_t>(opts.seed);
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"posekit: lightweight pose estimation head, cost analyzer and benchmarks"};
    app.require_subcommand(0, 1);

    bool dump_config = false;
    app.add_flag("--dump-config", dump_config, "print every config key with its default and exit");

    // train
    CommonOpts train_opts;
    int train_epochs = -1, train_batch = -1;
    std::string train_loss;
    bool no_augment = false;
    auto* train_cmd = app.add_subcommand("train", "train on a synthetic dataset");
    add_common(train_cmd, train_opts);
    train_cmd->add_option("--epochs", train_epochs, "total epochs");
    train_cmd->add_option("--batch-size", train_batch, "mini-batch size");
    train_cmd->add_option("--loss", train_loss, "weight generation kind: none|x|2x|x2|exp");
    train_cmd->add_flag("--no-augment", no_augment, "disable data augmentation");

    // eval
    CommonOpts eval_opts;
    bool flip_on = false, flip_off = false, oracle = false;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint with OKS-based AP");
    add_common(eval_cmd, eval_opts);
    eval_cmd->add_flag("--flip-test", flip_on, "enable flip-test averaging");
    eval_cmd->add_flag("--no-flip-test", flip_off, "disable flip-test averaging");
    eval_cmd->add_flag("--oracle", oracle, "score ground-truth-encoded heatmaps instead of the model");

    // analyze
    CommonOpts analyze_opts;
    std::string analyze_variant;
    bool analyze_json = false;
    auto* analyze_cmd = app.add_subcommand("analyze", "exact parameter/MAC accounting");
    add_common(analyze_cmd, analyze_opts);
    analyze_cmd->add_option("--variant", analyze_variant, "head variant: lightweight|standard");
    analyze_cmd->add_flag("--json", analyze_json, "emit the machine-readable report");

    // bench
    CommonOpts bench_opts;
    int bench_rounds = -1, bench_warmup = -1;
    double bench_delay = -1.0;
    bool bench_json = false;
    auto* bench_cmd = app.add_subcommand("bench", "inference speed protocol (warm-up excluded)");
    add_common(bench_cmd, bench_opts);
    bench_cmd->add_option("--rounds", bench_rounds, "total inference rounds");
    bench_cmd->add_option("--warmup", bench_warmup, "initial rounds excluded from statistics");
    bench_cmd->add_option("--preprocess-delay-ms", bench_delay,
                          "artificial pre-processing delay outside the timed region");
    bench_cmd->add_flag("--json", bench_json, "emit the machine-readable report");

    // synth
    CommonOpts synth_opts;
    int64_t synth_n = -1;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    add_common(synth_cmd, synth_opts);
    synth_cmd->add_option("--samples", synth_n, "number of samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (dump_config) {
            std::cout << posekit::RunConfig().to_kv().serialize();
            return 0;
        }
        if (train_cmd->parsed()) {
            posekit::RunConfig cfg = make_run_config(train_opts);
            if (train_epochs > 0) cfg.epochs = train_epochs;
            if (train_batch > 0) cfg.batch_size = train_batch;
            if (!train_loss.empty()) cfg.loss_kind = posekit::weight_gen_from_string(train_loss);
            if (no_augment) cfg.augment = false;
            cfg.validate();
            posekit::run_train(cfg, std::cout);
            return 0;
        }
        if (eval_cmd->parsed()) {
            posekit::RunConfig cfg = make_run_config(eval_opts);
            if (flip_on) cfg.flip_test = true;
            if (flip_off) cfg.flip_test = false;
            if (oracle) cfg.eval_oracle = true;
            posekit::run_eval(cfg, std::cout);
            return 0;
        }
        if (analyze_cmd->parsed()) {
            posekit::RunConfig cfg = make_run_config(analyze_opts);
            if (!analyze_variant.empty())
                cfg.model.head_variant = posekit::head_variant_from_string(analyze_variant);
            const posekit::AnalyzeReport report = posekit::run_analyze(cfg.model, cfg.seed);
            std::cout << (analyze_json ? report.json() : report.text());
            return 0;
        }
        if (bench_cmd->parsed()) {
            posekit::RunConfig cfg = make_run_config(bench_opts);
            if (bench_rounds > 0) cfg.bench_rounds = bench_rounds;
            if (bench_warmup >= 0) cfg.bench_warmup = bench_warmup;
            if (bench_delay >= 0.0) cfg.preprocess_delay_ms = bench_delay;
            cfg.validate();
            const posekit::BenchReport report = posekit::run_bench(cfg, std::cout);
            if (bench_json) std::cout << report.json();
            return 0;
        }
        if (synth_cmd->parsed()) {
            posekit::RunConfig cfg = make_run_config(synth_opts);
            if (synth_n > 0) cfg.synth_samples = synth_n;
            if (cfg.out_dir.empty()) throw posekit::ConfigError("synth: no output directory");
            posekit::synth_generate(cfg.out_dir, cfg.synth_samples, cfg.model, cfg.seed);
            std::cout << "dataset=" << cfg.out_dir << " samples=" << cfg.synth_samples << "\n";
            return 0;
        }
        std::cout << app.help();
        return 0;
    } catch (const posekit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const posekit::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const posekit::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
