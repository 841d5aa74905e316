// Acceptance suite: one pass/fail line per criterion, nonzero exit when any
// criterion fails. Tolerances are pinned in the checks themselves.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "posekit/dataio.hpp"
#include "posekit/gradcheck.hpp"
#include "posekit/loss.hpp"
#include "posekit/pipeline.hpp"
#include "posekit/rand.hpp"

using namespace posekit;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

#define REQUIRE_OK(cond)                                                                     \
    do {                                                                                     \
        if (!(cond)) throw std::runtime_error(std::string("check failed: ") + #cond +       \
                                              " (line " + std::to_string(__LINE__) + ")");   \
    } while (0)

void criterion(int number, const std::string& name, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body();
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[PASS] criterion %2d: %s (%.2fs)\n", number, name.c_str(), dt);
    } catch (const std::exception& e) {
        ++g_failures;
        std::printf("[FAIL] criterion %2d: %s -- %s\n", number, name.c_str(), e.what());
    }
    std::fflush(stdout);
}

Tensor random_tensor(Shape4 s, std::mt19937_64& rng, double lo, double hi) {
    std::vector<double> v(static_cast<size_t>(s.numel()));
    for (double& x : v) x = next_uniform(rng, lo, hi);
    return Tensor::from_data(s, std::move(v));
}

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

ModelConfig toy_model() {
    ModelConfig cfg;
    cfg.input_h = 32;
    cfg.input_w = 32;
    cfg.in_channels = 2;
    cfg.num_joints = 3;
    cfg.backbone_channels = {8, 16, 16};
    cfg.head_layers = 2;
    cfg.head_channels = 16;
    cfg.squeeze_ratio = 4;
    cfg.attention = true;
    cfg.heatmap_sigma = 2.0;
    return cfg;
}

KeypointSet grid17(double ox, double oy) {
    KeypointSet kps;
    kps.space = CoordSpace::image;
    for (int j = 0; j < 17; ++j)
        kps.pts.push_back({ox + 10.0 * (j % 5), oy + 8.0 * (j / 5), 2});
    return kps;
}

} // namespace

int main() {
    std::printf("posekit acceptance suite\n");

    criterion(1, "cost-ratio reproduction: analyze emits exactly 17/256", [] {
        const auto t0 = std::chrono::steady_clock::now();
        ModelConfig cfg; // l=3, D_K=4, C=256, J=17, input 256x192
        const AnalyzeReport rep = run_analyze(cfg, 0);
        REQUIRE_OK(rep.reduction.num == 17);
        REQUIRE_OK(rep.reduction.den == 256);
        REQUIRE_OK(rep.text().find("reduction.ratio=17/256") != std::string::npos);
        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        REQUIRE_OK(dt < 1.0);
    });

    criterion(2, "formula counts equal instantiated counts on 20 random specs", [] {
        std::mt19937_64 rng(20250808);
        for (int trial = 0; trial < 20; ++trial) {
            ModelConfig cfg;
            cfg.input_h = 32;
            cfg.input_w = 32 << (rng() % 2);
            cfg.in_channels = 1 + static_cast<int>(rng() % 3);
            cfg.num_joints = 1 + static_cast<int>(rng() % 8);
            cfg.backbone_channels = {4, 8};
            cfg.head_layers = 1 + static_cast<int>(rng() % 3);
            cfg.head_kernel = 2 + 2 * static_cast<int>(rng() % 3);
            cfg.squeeze_ratio = 1 << (rng() % 3);
            cfg.head_channels = cfg.squeeze_ratio * (1 + static_cast<int>(rng() % 8));
            cfg.attention = rng() % 2 == 0;
            cfg.head_variant = rng() % 2 == 0 ? HeadVariant::lightweight : HeadVariant::standard;
            cfg.validate();

            PoseModel model = PoseModel::build(cfg, trial);
            const CostReport report = count_instantiated(model);
            const HeadSpec spec = head_spec_from_config(cfg);
            const bool lw = cfg.head_variant == HeadVariant::lightweight;
            REQUIRE_OK(report.head_weights.params ==
                       (lw ? lightweight_head_params(spec) : standard_head_params(spec)));
            REQUIRE_OK(report.head_weights.macs ==
                       (lw ? lightweight_head_macs(spec) : standard_head_macs(spec)));
        }
    });

    criterion(3, "gradient integrity: finite differences <= 1e-4 at eps 1e-5", [] {
        std::mt19937_64 rng(33);
        const double eps = 1e-5, tol = 1e-4;

        { // conv2d: input, kernel, bias
            Tensor k = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
            Tensor b = random_tensor({1, 3, 1, 1}, rng, -0.2, 0.2);
            auto fn = [&](const Tensor& x) { return sum(conv2d(x, k, b, 2, 1, 1)); };
            REQUIRE_OK(finite_diff_check(fn, random_tensor({1, 2, 6, 6}, rng, -1, 1), eps) <= tol);
            Tensor x0 = random_tensor({1, 2, 6, 6}, rng, -1, 1);
            k.set_requires_grad(true);
            b.set_requires_grad(true);
            auto fk = [&]() { return sum(mul(conv2d(x0, k, b, 1, 1, 1), conv2d(x0, k, b, 1, 1, 1))); };
            REQUIRE_OK(finite_diff_check_inplace(fk, k, eps) <= tol);
            REQUIRE_OK(finite_diff_check_inplace(fk, b, eps) <= tol);
        }
        { // deconv2d, grouped
            Tensor k = random_tensor({4, 2, 4, 4}, rng, -0.5, 0.5);
            auto fn = [&](const Tensor& x) {
                Tensor d = deconv2d(x, k, std::nullopt, 2, 1, 2);
                return sum(mul(d, d));
            };
            REQUIRE_OK(finite_diff_check(fn, random_tensor({1, 4, 3, 3}, rng, -1, 1), eps) <= tol);
            Tensor x0 = random_tensor({1, 4, 3, 3}, rng, -1, 1);
            k.set_requires_grad(true);
            auto fk = [&]() {
                Tensor d = deconv2d(x0, k, std::nullopt, 2, 1, 2);
                return sum(mul(d, d));
            };
            REQUIRE_OK(finite_diff_check_inplace(fk, k, eps) <= tol);
        }
        { // global average pooling
            auto fn = [](const Tensor& x) {
                Tensor g = global_avg_pool(x);
                return sum(mul(g, g));
            };
            REQUIRE_OK(finite_diff_check(fn, random_tensor({2, 3, 4, 4}, rng, -1, 1), eps) <= tol);
        }
        { // hard sigmoid away from its kinks
            Tensor x0 = random_tensor({1, 2, 4, 4}, rng, -1, 1);
            for (double v : x0.data()) REQUIRE_OK(std::abs(std::abs(v) - 3.0) > 0.05);
            auto fn = [](const Tensor& x) {
                Tensor h = hard_sigmoid(x);
                return sum(mul(h, h));
            };
            REQUIRE_OK(finite_diff_check(fn, x0, eps) <= tol);
        }
        { // attention block: input and every weight tensor
            const int c = 8;
            AttentionWeights w;
            w.channel.squeeze_w = random_tensor({2, c, 1, 1}, rng, -0.3, 0.3);
            w.channel.squeeze_b = random_tensor({1, 2, 1, 1}, rng, -0.1, 0.1);
            w.channel.excite_w = random_tensor({c, 2, 1, 1}, rng, -0.3, 0.3);
            w.channel.excite_b = random_tensor({1, c, 1, 1}, rng, -0.1, 0.1);
            w.spatial.collapse_w = random_tensor({1, c, 1, 1}, rng, -0.3, 0.3);
            w.spatial.collapse_b = random_tensor({1, 1, 1, 1}, rng, -0.1, 0.1);
            w.spatial.conv_w = random_tensor({1, 1, 3, 3}, rng, -0.3, 0.3);
            w.spatial.conv_b = random_tensor({1, 1, 1, 1}, rng, -0.1, 0.1);

            auto fn = [&](const Tensor& x) {
                Tensor a = attention_block(x, w);
                return sum(mul(a, a));
            };
            Tensor f0 = random_tensor({1, c, 4, 4}, rng, -1, 1);
            REQUIRE_OK(finite_diff_check(fn, f0, eps) <= tol);

            Tensor fixed = f0.detach();
            auto fw = [&]() {
                Tensor a = attention_block(fixed, w);
                return sum(mul(a, a));
            };
            for (Tensor* t : {&w.channel.squeeze_w, &w.channel.squeeze_b, &w.channel.excite_w,
                              &w.channel.excite_b, &w.spatial.collapse_w, &w.spatial.collapse_b,
                              &w.spatial.conv_w, &w.spatial.conv_b}) {
                t->set_requires_grad(true);
                REQUIRE_OK(finite_diff_check_inplace(fw, *t, eps) <= tol);
                t->set_requires_grad(false);
            }
        }
        { // both losses, every weight-generation kind
            Tensor gt = random_tensor({1, 3, 4, 4}, rng, 0.0, 1.0);
            std::vector<double> jw = {1.0, 1.0, 0.0};
            for (WeightGenKind kind : {WeightGenKind::none, WeightGenKind::linear1,
                                       WeightGenKind::linear2, WeightGenKind::square,
                                       WeightGenKind::exponential}) {
                auto fn = [&](const Tensor& p) { return heatmap_weighting_loss(p, gt, kind, jw).value; };
                REQUIRE_OK(finite_diff_check(fn, random_tensor({1, 3, 4, 4}, rng, 0, 1), eps) <= tol);
            }
            auto fn = [&](const Tensor& p) { return mse_loss(p, gt, jw).value; };
            REQUIRE_OK(finite_diff_check(fn, random_tensor({1, 3, 4, 4}, rng, 0, 1), eps) <= tol);
        }
        { // end-to-end tiny model, 50 sampled parameter coordinates
            ModelConfig cfg = toy_model();
            cfg.num_joints = 2;
            PoseModel model = PoseModel::build(cfg, 404);
            Tensor batch = random_tensor({1, 2, 32, 32}, rng, 0.0, 1.0);
            Tensor target = random_tensor({1, 2, 16, 16}, rng, 0.0, 1.0);
            std::vector<double> jw = {1.0, 1.0};
            auto loss_fn = [&]() {
                return heatmap_weighting_loss(model.forward(batch, true), target,
                                              WeightGenKind::linear1, jw).value;
            };
            std::vector<Parameter*> params = model.parameters();
            std::mt19937_64 pick(55);
            int checked = 0;
            while (checked < 50) {
                Parameter* p = params[pick() % params.size()];
                const int64_t budget = std::min<int64_t>(5, p->value.numel());
                REQUIRE_OK(finite_diff_check_inplace(loss_fn, p->value, eps, budget, &pick) <= tol);
                checked += static_cast<int>(budget);
                zero_grads(params);
            }
        }
    });

    criterion(4, "attention identity: zero-initialized block equals 2*input within 1e-12", [] {
        std::mt19937_64 rng(44);
        for (int trial = 0; trial < 5; ++trial) {
            const int c = 4 << (trial % 3);
            Tensor f = random_tensor({2, c, 5, 3}, rng, -3.0, 3.0);
            AttentionWeights w = zero_attention_weights(c, 4);
            Tensor out = attention_block(f, w);
            for (int64_t i = 0; i < f.numel(); ++i) {
                const double want = 2.0 * f.data()[static_cast<size_t>(i)];
                REQUIRE_OK(std::abs(out.data()[static_cast<size_t>(i)] - want) <= 1e-12);
            }
        }
    });

    criterion(5, "loss dominance on 1000 random pairs for every kind", [] {
        std::mt19937_64 rng(55);
        const WeightGenKind kinds[] = {WeightGenKind::none, WeightGenKind::linear1,
                                       WeightGenKind::linear2, WeightGenKind::square,
                                       WeightGenKind::exponential};
        std::vector<double> jw = {1.0, 1.0};
        for (int trial = 0; trial < 1000; ++trial) {
            Tensor gt = random_tensor({1, 2, 3, 3}, rng, 0.0, 1.0);
            Tensor pred = random_tensor({1, 2, 3, 3}, rng, 0.0, 1.0);
            const double mse = mse_loss(pred, gt, jw).value.item();
            for (WeightGenKind k : kinds)
                REQUIRE_OK(heatmap_weighting_loss(pred, gt, k, jw).value.item() >= mse);
            // equality at the exact fit
            REQUIRE_OK(heatmap_weighting_loss(gt.detach(), gt, kinds[trial % 5], jw).value.item() == 0.0);
        }
    });

    criterion(6, "codec round trip within 0.25 px and the quarter-pixel offset rule", [] {
        std::mt19937_64 rng(66);
        for (int trial = 0; trial < 1000; ++trial) {
            const int64_t gx = static_cast<int64_t>(rng() % 48);
            const int64_t gy = static_cast<int64_t>(rng() % 64);
            KeypointSet kps;
            kps.space = CoordSpace::heatmap;
            kps.pts = {{static_cast<double>(gx), static_cast<double>(gy), 2}};
            EncodeResult enc = gaussian_encode(kps, 64, 48, 2.0);
            REQUIRE_OK(enc.joint_weights[0] == 1.0);
            DecodeResult dec = decode(enc.maps);
            REQUIRE_OK(std::abs(dec.kps.pts[0].x - static_cast<double>(gx)) <= 0.25);
            REQUIRE_OK(std::abs(dec.kps.pts[0].y - static_cast<double>(gy)) <= 0.25);
        }

        // hand-built asymmetric maps exercise each offset direction
        HeatmapStack hm = HeatmapStack::zeros(1, 5, 7);
        hm.at(0, 2, 3) = 1.0;
        hm.at(0, 2, 4) = 0.6;
        hm.at(0, 2, 2) = 0.1;
        hm.at(0, 3, 3) = 0.5;
        hm.at(0, 1, 3) = 0.2;
        DecodeResult d1 = decode(hm);
        REQUIRE_OK(d1.kps.pts[0].x == 3.25);
        REQUIRE_OK(d1.kps.pts[0].y == 2.25);

        HeatmapStack hm2 = HeatmapStack::zeros(1, 5, 7);
        hm2.at(0, 2, 3) = 1.0;
        hm2.at(0, 2, 2) = 0.6;
        hm2.at(0, 1, 3) = 0.5;
        DecodeResult d2 = decode(hm2);
        REQUIRE_OK(d2.kps.pts[0].x == 2.75);
        REQUIRE_OK(d2.kps.pts[0].y == 1.75);
    });

    criterion(7, "metrics equal the brute-force scorer; OKS spot value 1/e", [] {
        std::mt19937_64 rng(77);
        for (int suite = 0; suite < 5; ++suite) {
            std::vector<EvalInstance> instances;
            for (int i = 0; i < 50; ++i) {
                EvalInstance inst;
                inst.id = i;
                inst.gt = grid17(next_uniform(rng, 0, 40), next_uniform(rng, 0, 40));
                for (auto& p : inst.gt.pts)
                    if (next_uniform01(rng) < 0.2) p.vis = 0;
                inst.area = next_uniform(rng, 400.0, 3000.0);
                if (next_uniform01(rng) < 0.85) {
                    KeypointSet pred = inst.gt;
                    for (auto& p : pred.pts) {
                        p.x += next_uniform(rng, -10.0, 10.0);
                        p.y += next_uniform(rng, -10.0, 10.0);
                        p.vis = 2;
                    }
                    inst.pred = pred;
                    inst.score = next_uniform01(rng);
                }
                instances.push_back(std::move(inst));
            }
            const EvalResult got = evaluate(instances);
            const oracle::BruteResult want = oracle::brute_force_ap(instances, default_oks_thresholds());
            REQUIRE_OK(got.ap == want.ap);
            REQUIRE_OK(got.ap50 == want.ap50);
            REQUIRE_OK(got.ap75 == want.ap75);
            REQUIRE_OK(got.ar == want.ar);
        }

        KeypointSet gt;
        gt.pts = {{10.0, 10.0, 2}};
        KeypointSet pred;
        pred.pts = {{10.6, 10.8, 2}};
        const double k[] = {1.0};
        REQUIRE_OK(std::abs(oks(pred, gt, 0.5, k) - std::exp(-1.0)) <= 1e-12);
    });

    criterion(8, "toy learnability: 32 samples, 300 epochs, error < 1 px, loss < 10%", [] {
        const auto t0 = std::chrono::steady_clock::now();
        const fs::path data = temp_dir("posekit_acc_toy");
        const fs::path out = temp_dir("posekit_acc_toy_out");
        RunConfig cfg;
        cfg.model = toy_model();
        cfg.model.backbone_channels = {16, 32, 32};
        cfg.model.head_channels = 32;
        cfg.model.squeeze_ratio = 8;
        cfg.dataset_dir = data.string();
        cfg.out_dir = out.string();
        cfg.seed = 7;
        cfg.epochs = 300;
        cfg.milestones = {243, 286};
        cfg.batch_size = 2;
        cfg.base_lr = 2e-3;
        cfg.warmup_iters = 500;
        cfg.augment = false;
        cfg.loss_kind = WeightGenKind::linear1;
        cfg.log_every = 1000;
        synth_generate(data, 32, cfg.model, 2025);

        std::ostringstream log;
        const TrainReport trained = run_train(cfg, log);
        REQUIRE_OK(trained.final_loss < 0.1 * trained.initial_loss);

        cfg.checkpoint = trained.checkpoint_path;
        cfg.flip_test = false;
        const EvalReport eval = run_eval(cfg, log);
        std::printf("        train loss %.3e -> %.3e, mean error %.3f hm px\n",
                    trained.initial_loss, trained.final_loss, eval.mean_kp_error_hm);
        REQUIRE_OK(eval.mean_kp_error_hm < 1.0);

        const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        REQUIRE_OK(dt < 300.0);
        fs::remove_all(data);
        fs::remove_all(out);
    });

    criterion(9, "benchmark protocol: 45 timed iterations, pre-processing untimed", [] {
        RunConfig cfg;
        cfg.model.input_h = 64;
        cfg.model.input_w = 64;
        cfg.model.in_channels = 3;
        cfg.model.num_joints = 5;
        cfg.model.backbone_channels = {16, 32, 64};
        cfg.model.head_layers = 2;
        cfg.model.head_channels = 32;
        cfg.model.squeeze_ratio = 8;

        std::ostringstream log;
        const BenchReport full = run_bench(cfg, log);
        REQUIRE_OK(full.rounds == 50);
        REQUIRE_OK(full.warmup == 5);
        REQUIRE_OK(full.timed_iterations == 45);

        // a delay leaking into the timed region would shift every pair by the
        // full 5 ms; thermal/scheduler noise does not survive a best-of-three
        // with alternating measurement order
        cfg.bench_rounds = 40;
        cfg.bench_warmup = 8;
        double best_rel = 1e9;
        for (int pair = 0; pair < 3; ++pair) {
            std::this_thread::sleep_for(std::chrono::milliseconds(300)); // settle
            cfg.preprocess_delay_ms = pair % 2 == 0 ? 0.0 : 5.0;
            const BenchReport a = run_bench(cfg, log);
            cfg.preprocess_delay_ms = pair % 2 == 0 ? 5.0 : 0.0;
            const BenchReport b = run_bench(cfg, log);
            const double rel = std::abs(a.fps_max - b.fps_max) / std::max(a.fps_max, b.fps_max);
            std::printf("        pair %d: best-iteration fps %.1f vs %.1f, drift %.1f%%\n",
                        pair, a.fps_max, b.fps_max, 100.0 * rel);
            best_rel = std::min(best_rel, rel);
        }
        REQUIRE_OK(best_rel < 0.15);
    });

    criterion(10, "weight-generation kinds all train stably (absolute table values out of scope)", [] {
        const fs::path data = temp_dir("posekit_acc_kinds");
        RunConfig base;
        base.model = toy_model();
        base.dataset_dir = data.string();
        base.seed = 11;
        base.epochs = 40;
        base.milestones = {30};
        base.batch_size = 8;
        base.warmup_iters = 20;
        base.augment = false;
        base.log_every = 1000;
        synth_generate(data, 16, base.model, 4242);

        for (WeightGenKind kind : {WeightGenKind::linear1, WeightGenKind::linear2,
                                   WeightGenKind::square, WeightGenKind::exponential}) {
            RunConfig cfg = base;
            cfg.loss_kind = kind;
            cfg.out_dir = (data / ("out_" + to_string(kind))).string();
            std::ostringstream log;
            const TrainReport rep = run_train(cfg, log);
            for (double l : rep.epoch_loss) REQUIRE_OK(std::isfinite(l));
            REQUIRE_OK(rep.final_loss < rep.initial_loss);
            std::printf("        kind %-4s loss %.3e -> %.3e\n", to_string(kind).c_str(),
                        rep.initial_loss, rep.final_loss);
        }
        fs::remove_all(data);
        std::printf("        note: COCO/MPII AP, PCKh and absolute FPS tables are documented as\n"
                    "        out of desk-scale scope in the README; criteria 1-9 stand in for them.\n");
    });

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
