#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "posekit/cost.hpp"
#include "posekit/dataio.hpp"
#include "posekit/loss.hpp"
#include "posekit/metrics.hpp"
#include "posekit/model.hpp"

namespace posekit {

/// Everything the CLI commands need; defaults follow the training recipe
/// (Adam at 5e-4, x0.1 decay, 500-iteration linear warm-up at ratio 0.001)
/// with epochs/milestones rescaled for toy datasets.
struct RunConfig {
    ModelConfig model;

    std::string dataset_dir;
    std::string out_dir = "out";
    std::string checkpoint;
    uint64_t seed = 7;

    // train
    int epochs = 300;
    std::vector<int> milestones = {243, 286}; // lr x0.1 once the epoch reaches each
    int batch_size = 8;
    double base_lr = 5e-4;
    int warmup_iters = 500;
    double warmup_ratio = 0.001;
    WeightGenKind loss_kind = WeightGenKind::linear1;
    bool augment = true;
    AugmentFlags augment_flags;
    int log_every = 10;

    // eval
    bool flip_test = true;
    bool eval_oracle = false;
    std::string flip_pairs_file; // optional override table

    // bench
    int bench_rounds = 50;
    int bench_warmup = 5;
    double preprocess_delay_ms = 0.0;

    // synth
    int64_t synth_samples = 64;

    void validate() const; // throws ConfigError
    KeyValueConfig to_kv() const;
    static RunConfig from_kv(const KeyValueConfig& kv);
};

/// base * (ratio + (1-ratio) * iter/warmup_iters) below warmup_iters, base after.
double warmup_lr(double base, int64_t iter, int64_t warmup_iters, double warmup_ratio);

/// Warm-up factor times the milestone decay for the current epoch.
double scheduled_lr(const RunConfig& cfg, int64_t global_iter, int64_t epoch);

struct TrainReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<double> epoch_loss;
    std::vector<double> epoch_pck; // fraction of joints decoded within 2 heatmap px
    int64_t iterations = 0;
    uint64_t param_checksum = 0;
    std::string checkpoint_path;
};

TrainReport run_train(const RunConfig& cfg, std::ostream& log);

struct EvalSampleDump {
    int64_t id = 0;
    double oks = 0.0;
    double mean_err_hm = 0.0; // heatmap px over labeled joints
    double score = 0.0;
};

struct EvalReport {
    EvalResult metrics;
    double mean_kp_error_hm = 0.0;
    double mean_oks = 0.0;
    std::optional<double> mean_oks_flip_off; // logged alongside when flip test is on
    std::vector<EvalSampleDump> per_sample;

    std::string text() const;
    std::string json() const;
};

EvalReport run_eval(const RunConfig& cfg, std::ostream& log);

/// Formula counts next to the instantiated walk.
struct AnalyzeReport {
    CostReport instantiated;
    int64_t formula_standard_params = 0;
    int64_t formula_standard_macs = 0;
    int64_t formula_lightweight_params = 0;
    int64_t formula_lightweight_macs = 0;
    Rational reduction;

    std::string text() const;
    std::string json() const;
};

AnalyzeReport run_analyze(const ModelConfig& config, uint64_t seed = 0);

struct BenchReport {
    int rounds = 0;
    int warmup = 0;
    int timed_iterations = 0;
    double total_seconds = 0.0;
    double mean_ms = 0.0;
    double fps_mean = 0.0; // timed iterations / total timed seconds
    double fps_min = 0.0;
    double fps_max = 0.0;
    std::vector<std::pair<std::string, double>> per_layer_share;

    std::string text() const;
    std::string json() const;
};

/// 50-round single-image protocol: warm-up iterations excluded from the
/// statistics, pre-processing (the optional injected delay) outside the
/// timed region, forward pass only on one execution context.
BenchReport run_bench(const RunConfig& cfg, std::ostream& log);

} // namespace posekit
