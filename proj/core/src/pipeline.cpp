#include "posekit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "posekit/rand.hpp"

namespace posekit {

// ---------------------------------------------------------------------------
// RunConfig
// ---------------------------------------------------------------------------

void RunConfig::validate() const {
    model.validate();
    if (epochs < 1) throw ConfigError("run: epochs must be >= 1");
    for (size_t i = 0; i < milestones.size(); ++i) {
        if (milestones[i] >= epochs)
            throw ConfigError("run: milestone " + std::to_string(milestones[i]) +
                              " not below total epochs " + std::to_string(epochs));
        if (i > 0 && milestones[i] <= milestones[i - 1])
            throw ConfigError("run: milestones must be strictly increasing");
    }
    if (batch_size < 1) throw ConfigError("run: batch_size must be >= 1");
    if (base_lr <= 0.0) throw ConfigError("run: base_lr must be positive");
    if (warmup_iters < 0) throw ConfigError("run: warmup_iters must be >= 0");
    if (warmup_ratio <= 0.0 || warmup_ratio > 1.0)
        throw ConfigError("run: warmup_ratio must be in (0, 1]");
    if (bench_rounds < 1) throw ConfigError("run: bench rounds must be >= 1");
    if (bench_warmup < 0 || bench_warmup >= bench_rounds)
        throw ConfigError("run: bench warmup must be in [0, rounds)");
    if (preprocess_delay_ms < 0.0) throw ConfigError("run: preprocess delay must be >= 0");
    if (synth_samples < 1) throw ConfigError("run: synth samples must be >= 1");
}

KeyValueConfig RunConfig::to_kv() const {
    KeyValueConfig kv = model.to_kv();
    kv.set("run.dataset", dataset_dir);
    kv.set("run.out_dir", out_dir);
    kv.set("run.checkpoint", checkpoint);
    kv.set_int("run.seed", static_cast<int64_t>(seed));
    kv.set_int("train.epochs", epochs);
    std::ostringstream ms;
    for (size_t i = 0; i < milestones.size(); ++i) {
        if (i) ms << ",";
        ms << milestones[i];
    }
    kv.set("train.milestones", ms.str());
    kv.set_int("train.batch_size", batch_size);
    kv.set_double("train.base_lr", base_lr);
    kv.set_int("train.warmup_iters", warmup_iters);
    kv.set_double("train.warmup_ratio", warmup_ratio);
    kv.set("train.loss", to_string(loss_kind));
    kv.set_bool("train.augment", augment);
    kv.set_bool("train.augment_rotation", augment_flags.rotation);
    kv.set_bool("train.augment_scale", augment_flags.scaling);
    kv.set_bool("train.augment_flip", augment_flags.flip);
    kv.set_bool("train.augment_half_body", augment_flags.half_body);
    kv.set_int("train.log_every", log_every);
    kv.set_bool("eval.flip_test", flip_test);
    kv.set_bool("eval.oracle", eval_oracle);
    kv.set("eval.flip_pairs_file", flip_pairs_file);
    kv.set_int("bench.rounds", bench_rounds);
    kv.set_int("bench.warmup", bench_warmup);
    kv.set_double("bench.preprocess_delay_ms", preprocess_delay_ms);
    kv.set_int("synth.samples", synth_samples);
    return kv;
}

RunConfig RunConfig::from_kv(const KeyValueConfig& kv) {
    RunConfig cfg;
    cfg.model = ModelConfig::from_kv(kv);
    cfg.dataset_dir = kv.get_string("run.dataset", cfg.dataset_dir);
    cfg.out_dir = kv.get_string("run.out_dir", cfg.out_dir);
    cfg.checkpoint = kv.get_string("run.checkpoint", cfg.checkpoint);
    cfg.seed = static_cast<uint64_t>(kv.get_int("run.seed", static_cast<int64_t>(cfg.seed)));
    cfg.epochs = static_cast<int>(kv.get_int("train.epochs", cfg.epochs));
    std::vector<int64_t> ms_default(cfg.milestones.begin(), cfg.milestones.end());
    cfg.milestones.clear();
    for (int64_t m : kv.get_int_list("train.milestones", ms_default))
        cfg.milestones.push_back(static_cast<int>(m));
    cfg.batch_size = static_cast<int>(kv.get_int("train.batch_size", cfg.batch_size));
    cfg.base_lr = kv.get_double("train.base_lr", cfg.base_lr);
    cfg.warmup_iters = static_cast<int>(kv.get_int("train.warmup_iters", cfg.warmup_iters));
    cfg.warmup_ratio = kv.get_double("train.warmup_ratio", cfg.warmup_ratio);
    cfg.loss_kind = weight_gen_from_string(kv.get_string("train.loss", to_string(cfg.loss_kind)));
    cfg.augment = kv.get_bool("train.augment", cfg.augment);
    cfg.augment_flags.rotation = kv.get_bool("train.augment_rotation", cfg.augment_flags.rotation);
    cfg.augment_flags.scaling = kv.get_bool("train.augment_scale", cfg.augment_flags.scaling);
    cfg.augment_flags.flip = kv.get_bool("train.augment_flip", cfg.augment_flags.flip);
    cfg.augment_flags.half_body = kv.get_bool("train.augment_half_body", cfg.augment_flags.half_body);
    cfg.log_every = static_cast<int>(kv.get_int("train.log_every", cfg.log_every));
    cfg.flip_test = kv.get_bool("eval.flip_test", cfg.flip_test);
    cfg.eval_oracle = kv.get_bool("eval.oracle", cfg.eval_oracle);
    cfg.flip_pairs_file = kv.get_string("eval.flip_pairs_file", cfg.flip_pairs_file);
    cfg.bench_rounds = static_cast<int>(kv.get_int("bench.rounds", cfg.bench_rounds));
    cfg.bench_warmup = static_cast<int>(kv.get_int("bench.warmup", cfg.bench_warmup));
    cfg.preprocess_delay_ms = kv.get_double("bench.preprocess_delay_ms", cfg.preprocess_delay_ms);
    cfg.synth_samples = kv.get_int("synth.samples", cfg.synth_samples);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Learning-rate schedule
// ---------------------------------------------------------------------------

double warmup_lr(double base, int64_t iter, int64_t warmup_iters, double warmup_ratio) {
    if (warmup_iters <= 0 || iter >= warmup_iters) return base;
    const double t = static_cast<double>(iter) / static_cast<double>(warmup_iters);
    return base * (warmup_ratio + (1.0 - warmup_ratio) * t);
}

double scheduled_lr(const RunConfig& cfg, int64_t global_iter, int64_t epoch) {
    double lr = cfg.base_lr;
    for (int m : cfg.milestones)
        if (epoch >= m) lr *= 0.1;
    if (global_iter < cfg.warmup_iters)
        lr = warmup_lr(lr, global_iter, cfg.warmup_iters, cfg.warmup_ratio);
    return lr;
}

// ---------------------------------------------------------------------------
// Shared pipeline helpers
// ---------------------------------------------------------------------------

namespace {

void shuffle_indices(std::vector<int64_t>& v, std::mt19937_64& rng) {
    for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[rng() % i]);
}

Tensor stack_batch(const std::vector<Tensor>& singles) {
    const Shape4 s0 = singles.front().shape();
    Tensor out = Tensor::zeros({static_cast<int64_t>(singles.size()), s0.c, s0.h, s0.w});
    auto dst = out.data();
    const size_t stride = static_cast<size_t>(s0.c * s0.h * s0.w);
    for (size_t i = 0; i < singles.size(); ++i) {
        const auto src = singles[i].data();
        std::copy(src.begin(), src.end(), dst.begin() + static_cast<int64_t>(i * stride));
    }
    return out;
}

FlipPairTable flip_pairs_for(const RunConfig& cfg, int joints) {
    if (!cfg.flip_pairs_file.empty()) {
        FlipPairTable table = load_flip_pairs(cfg.flip_pairs_file);
        for (const auto& [a, b] : table.pairs)
            if (a < 0 || b < 0 || a >= joints || b >= joints)
                throw ConfigError("flip pairs: pair (" + std::to_string(a) + "," +
                                  std::to_string(b) + ") out of range for " +
                                  std::to_string(joints) + " joints");
        return table;
    }
    if (joints == 17) return coco17_flip_pairs();
    return FlipPairTable{"none", {}};
}

// generic body halves when the skeleton is not the COCO 17-joint layout
void body_halves(int joints, std::vector<int>& upper, std::vector<int>& lower) {
    if (joints == 17) {
        auto u = coco17_upper_body_ids();
        auto l = coco17_lower_body_ids();
        upper.assign(u.begin(), u.end());
        lower.assign(l.begin(), l.end());
        return;
    }
    for (int j = 0; j < joints; ++j)
        (j < joints / 2 ? upper : lower).push_back(j);
}

AffineTransform scale_transform(double sx, double sy) {
    AffineTransform t;
    t.m = {sx, 0.0, 0.0, 0.0, sy, 0.0};
    return t;
}

double mean_decode_error_hm(const DecodeResult& dec, const KeypointSet& gt_hm) {
    double err = 0.0;
    int64_t labeled = 0;
    for (int64_t j = 0; j < gt_hm.size(); ++j) {
        const Keypoint& g = gt_hm.pts[static_cast<size_t>(j)];
        if (g.vis == 0) continue;
        const Keypoint& p = dec.kps.pts[static_cast<size_t>(j)];
        err += std::hypot(p.x - g.x, p.y - g.y);
        ++labeled;
    }
    return labeled > 0 ? err / static_cast<double>(labeled) : 0.0;
}

struct LoadedDataset {
    DatasetManifest manifest;
    std::vector<Tensor> inputs;       // each 1xCxHxW
    std::vector<KeypointSet> kps;     // crop space
};

LoadedDataset load_dataset(const std::filesystem::path& dir, const ModelConfig& model) {
    LoadedDataset ds;
    ds.manifest = read_manifest(dir);
    if (ds.manifest.input_h != model.input_h || ds.manifest.input_w != model.input_w ||
        ds.manifest.channels != model.in_channels || ds.manifest.joints != model.num_joints)
        throw ConfigError("dataset " + dir.string() + " (" + std::to_string(ds.manifest.input_h) +
                          "x" + std::to_string(ds.manifest.input_w) + ", C" +
                          std::to_string(ds.manifest.channels) + ", J" +
                          std::to_string(ds.manifest.joints) + ") does not match the model config");
    ds.kps = load_keypoint_records(dir, ds.manifest);
    ds.inputs.reserve(static_cast<size_t>(ds.manifest.samples));
    for (int64_t i = 0; i < ds.manifest.samples; ++i)
        ds.inputs.push_back(read_tensor_file(dir / "samples" / sample_filename(i)));
    return ds;
}

} // namespace

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TrainReport run_train(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (cfg.dataset_dir.empty()) throw ConfigError("train: no dataset directory configured");
    const LoadedDataset ds = load_dataset(cfg.dataset_dir, cfg.model);

    PoseModel model = PoseModel::build(cfg.model, cfg.seed);
    std::vector<Parameter*> params = model.parameters();
    auto [hm_h, hm_w] = cfg.model.heatmap_size();
    const AffineTransform to_hm = scale_transform(
        static_cast<double>(hm_w) / cfg.model.input_w,
        static_cast<double>(hm_h) / cfg.model.input_h);
    const FlipPairTable pairs = flip_pairs_for(cfg, cfg.model.num_joints);
    std::vector<int> upper, lower;
    body_halves(cfg.model.num_joints, upper, lower);

    std::mt19937_64 rng_shuffle(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::mt19937_64 rng_aug(cfg.seed ^ 0xc2b2ae3d27d4eb4full);

    const int64_t n = ds.manifest.samples;
    const BBox full_box{0.5 * cfg.model.input_w, 0.5 * cfg.model.input_h,
                        static_cast<double>(cfg.model.input_w), static_cast<double>(cfg.model.input_h)};
    const double aspect = static_cast<double>(cfg.model.input_w) / cfg.model.input_h;

    TrainReport report;
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    int64_t global_iter = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        shuffle_indices(order, rng_shuffle);
        double epoch_loss = 0.0;
        int64_t epoch_batches = 0;
        double pck_hits = 0.0;
        int64_t pck_total = 0;

        for (int64_t start = 0; start < n; start += cfg.batch_size) {
            const int64_t count = std::min<int64_t>(cfg.batch_size, n - start);
            std::vector<Tensor> batch_in, batch_gt;
            std::vector<double> joint_weights;
            std::vector<KeypointSet> batch_hm_kps;

            for (int64_t b = 0; b < count; ++b) {
                const int64_t idx = order[static_cast<size_t>(start + b)];
                KeypointSet kps = ds.kps[static_cast<size_t>(idx)];
                Tensor input = ds.inputs[static_cast<size_t>(idx)];

                if (cfg.augment) {
                    const AugmentSample aug = sample_augmentation(rng_aug, cfg.augment_flags);
                    BBox box = full_box;
                    if (aug.half_body)
                        if (auto hb = half_body_transform(kps, upper, lower, rng_aug)) box = *hb;
                    const AffineTransform t = build_crop_affine(box, aspect, aug.rotation_deg,
                                                                aug.scale, cfg.model.input_h,
                                                                cfg.model.input_w);
                    kps = apply_affine_points(t, kps, CoordSpace::crop);
                    if (aug.flip) kps = flip_keypoints(kps, cfg.model.input_w, pairs.pairs);
                    // the synthetic renderer is deterministic in the joints,
                    // so augmented inputs are re-rendered instead of warped
                    input = render_sample_input(kps, cfg.model.in_channels, cfg.model.input_h,
                                                cfg.model.input_w);
                }

                const KeypointSet hm_kps = apply_affine_points(to_hm, kps, CoordSpace::heatmap);
                EncodeResult enc = gaussian_encode(hm_kps, hm_h, hm_w, cfg.model.heatmap_sigma);
                batch_in.push_back(std::move(input));
                batch_gt.push_back(tensor_from_heatmaps(enc.maps));
                joint_weights.insert(joint_weights.end(), enc.joint_weights.begin(),
                                     enc.joint_weights.end());
                batch_hm_kps.push_back(hm_kps);
            }

            Tensor pred = model.forward(stack_batch(batch_in), true);
            LossResult loss = heatmap_weighting_loss(pred, stack_batch(batch_gt), cfg.loss_kind,
                                                     joint_weights);
            if (loss.active_joints == 0) {
                log << "warning: batch at iteration " << global_iter
                    << " has no encodable joints, skipping step\n";
                ++global_iter;
                continue;
            }
            const double loss_v = loss.value.item();
            if (!std::isfinite(loss_v))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   " iteration " + std::to_string(global_iter) + " (lr " +
                                   std::to_string(scheduled_lr(cfg, global_iter, epoch)) + ")");
            backward(loss.value);

            AdamConfig adam;
            adam.lr = scheduled_lr(cfg, global_iter, epoch);
            adam_step(params, adam);
            zero_grads(params);
            ++global_iter;
            epoch_loss += loss_v;
            ++epoch_batches;

            // train PCK at 2 heatmap px from this forward's predictions
            for (int64_t b = 0; b < count; ++b) {
                const DecodeResult dec = decode(heatmaps_from_tensor(pred, b));
                const KeypointSet& gt_hm = batch_hm_kps[static_cast<size_t>(b)];
                for (int64_t j = 0; j < gt_hm.size(); ++j) {
                    if (gt_hm.pts[static_cast<size_t>(j)].vis == 0) continue;
                    const Keypoint& g = gt_hm.pts[static_cast<size_t>(j)];
                    const Keypoint& p = dec.kps.pts[static_cast<size_t>(j)];
                    if (std::hypot(p.x - g.x, p.y - g.y) <= 2.0) pck_hits += 1.0;
                    ++pck_total;
                }
            }
        }

        epoch_loss /= static_cast<double>(std::max<int64_t>(1, epoch_batches));
        const double pck = pck_total > 0 ? pck_hits / static_cast<double>(pck_total) : 0.0;
        report.epoch_loss.push_back(epoch_loss);
        report.epoch_pck.push_back(pck);
        if (epoch % std::max(1, cfg.log_every) == 0 || epoch == cfg.epochs - 1) {
            log << "epoch=" << epoch << " loss=" << epoch_loss << " pck@2px=" << pck
                << " lr=" << scheduled_lr(cfg, global_iter, epoch) << "\n";
        }
    }

    report.initial_loss = report.epoch_loss.front();
    report.final_loss = report.epoch_loss.back();
    report.iterations = global_iter;
    report.param_checksum = model.parameter_checksum();

    std::filesystem::create_directories(cfg.out_dir);
    const auto ckpt = std::filesystem::path(cfg.out_dir) / "model.pkpt";
    model.save_checkpoint(ckpt);
    report.checkpoint_path = ckpt.string();

    std::ofstream train_log(std::filesystem::path(cfg.out_dir) / "train_log.txt");
    for (size_t e = 0; e < report.epoch_loss.size(); ++e)
        train_log << "epoch=" << e << " loss=" << report.epoch_loss[e]
                  << " pck@2px=" << report.epoch_pck[e] << "\n";
    log << "checkpoint=" << report.checkpoint_path
        << " checksum=" << std::hex << report.param_checksum << std::dec << "\n";
    return report;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

EvalReport run_eval(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (cfg.dataset_dir.empty()) throw ConfigError("eval: no dataset directory configured");

    std::optional<PoseModel> model;
    ModelConfig model_cfg = cfg.model;
    if (!cfg.eval_oracle) {
        if (cfg.checkpoint.empty()) throw ConfigError("eval: no checkpoint configured");
        model.emplace(PoseModel::load_checkpoint(cfg.checkpoint));
        model_cfg = model->config();
    }
    const LoadedDataset ds = load_dataset(cfg.dataset_dir, model_cfg);

    auto [hm_h, hm_w] = model_cfg.heatmap_size();
    const AffineTransform to_hm = scale_transform(
        static_cast<double>(hm_w) / model_cfg.input_w,
        static_cast<double>(hm_h) / model_cfg.input_h);
    const AffineTransform hm_to_crop = scale_transform(
        static_cast<double>(model_cfg.input_w) / hm_w,
        static_cast<double>(model_cfg.input_h) / hm_h);
    const FlipPairTable pairs = flip_pairs_for(cfg, model_cfg.num_joints);
    // synthetic crops are one instance each: score against the crop area with
    // a k wide enough that heatmap-grid quantization (<= 0.75 px per axis at
    // heatmap scale) cannot push an exact prediction below the 0.95 threshold
    const std::vector<double> oks_k(static_cast<size_t>(model_cfg.num_joints), 0.25);
    const double crop_area = static_cast<double>(model_cfg.input_h) * model_cfg.input_w;

    EvalReport report;
    std::vector<EvalInstance> instances;
    double flip_off_oks_sum = 0.0;
    double oks_sum = 0.0;
    double err_sum = 0.0;
    int64_t scored = 0;

    NoGradGuard ng;
    for (int64_t i = 0; i < ds.manifest.samples; ++i) {
        const KeypointSet& gt_crop = ds.kps[static_cast<size_t>(i)];
        const KeypointSet gt_hm = apply_affine_points(to_hm, gt_crop, CoordSpace::heatmap);

        HeatmapStack maps{};
        std::optional<HeatmapStack> orig_only;
        if (cfg.eval_oracle) {
            maps = gaussian_encode(gt_hm, hm_h, hm_w, model_cfg.heatmap_sigma).maps;
        } else {
            Tensor out = model->forward(ds.inputs[static_cast<size_t>(i)], false);
            HeatmapStack orig = heatmaps_from_tensor(out, 0);
            if (cfg.flip_test) {
                Tensor out_f = model->forward(mirror_width(ds.inputs[static_cast<size_t>(i)]), false);
                maps = flip_average(orig, heatmaps_from_tensor(out_f, 0), pairs.pairs);
                orig_only = std::move(orig);
            } else {
                maps = std::move(orig);
            }
        }

        const DecodeResult dec = decode(maps);
        double score = 0.0;
        for (double s : dec.scores) score += s;
        score /= static_cast<double>(dec.scores.size());

        EvalInstance inst;
        inst.id = i;
        inst.gt = gt_crop;
        inst.gt.space = CoordSpace::image; // synthetic crop space doubles as image space
        inst.area = crop_area;
        KeypointSet pred_crop = apply_affine_points(hm_to_crop, dec.kps, CoordSpace::image);
        inst.pred = pred_crop;
        inst.score = score;

        double sample_oks = 0.0;
        if (gt_crop.labeled_count() > 0) {
            sample_oks = oks(pred_crop, inst.gt, inst.area, oks_k);
            oks_sum += sample_oks;
            err_sum += mean_decode_error_hm(dec, gt_hm);
            ++scored;
            if (orig_only) {
                const DecodeResult dec_off = decode(*orig_only);
                KeypointSet off_crop = apply_affine_points(hm_to_crop, dec_off.kps, CoordSpace::image);
                flip_off_oks_sum += oks(off_crop, inst.gt, inst.area, oks_k);
            }
        }
        report.per_sample.push_back({i, sample_oks, mean_decode_error_hm(dec, gt_hm), score});
        instances.push_back(std::move(inst));
    }

    report.metrics = evaluate(instances, default_oks_thresholds(), oks_k);
    report.mean_oks = scored > 0 ? oks_sum / static_cast<double>(scored) : 0.0;
    report.mean_kp_error_hm = scored > 0 ? err_sum / static_cast<double>(scored) : 0.0;
    if (cfg.flip_test && !cfg.eval_oracle && scored > 0)
        report.mean_oks_flip_off = flip_off_oks_sum / static_cast<double>(scored);

    std::filesystem::create_directories(cfg.out_dir);
    {
        std::ofstream dump(std::filesystem::path(cfg.out_dir) / "eval_samples.txt");
        for (const auto& s : report.per_sample)
            dump << "id=" << s.id << " oks=" << s.oks << " mean_err_hm=" << s.mean_err_hm
                 << " score=" << s.score << "\n";
        std::ofstream txt(std::filesystem::path(cfg.out_dir) / "eval.txt");
        txt << report.text();
        std::ofstream js(std::filesystem::path(cfg.out_dir) / "eval.json");
        js << report.json();
    }
    log << report.text();
    return report;
}

std::string EvalReport::text() const {
    std::ostringstream os;
    os << metrics.text();
    os << "mean_oks=" << mean_oks << "\n";
    os << "mean_kp_error_hm=" << mean_kp_error_hm << "\n";
    if (mean_oks_flip_off)
        os << "mean_oks_flip_off=" << *mean_oks_flip_off << "\n";
    return os.str();
}

std::string EvalReport::json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::parse(metrics.json());
    j["mean_oks"] = mean_oks;
    j["mean_kp_error_hm"] = mean_kp_error_hm;
    if (mean_oks_flip_off) j["mean_oks_flip_off"] = *mean_oks_flip_off;
    nlohmann::ordered_json samples = nlohmann::ordered_json::array();
    for (const auto& s : per_sample) {
        nlohmann::ordered_json o;
        o["id"] = s.id;
        o["oks"] = s.oks;
        o["mean_err_hm"] = s.mean_err_hm;
        o["score"] = s.score;
        samples.push_back(o);
    }
    j["samples"] = samples;
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

AnalyzeReport run_analyze(const ModelConfig& config, uint64_t seed) {
    config.validate();
    AnalyzeReport report;
    const HeadSpec spec = head_spec_from_config(config);
    report.formula_standard_params = standard_head_params(spec);
    report.formula_standard_macs = standard_head_macs(spec);
    report.formula_lightweight_params = lightweight_head_params(spec);
    report.formula_lightweight_macs = lightweight_head_macs(spec);
    report.reduction = reduction_ratio(spec);

    PoseModel model = PoseModel::build(config, seed);
    report.instantiated = count_instantiated(model);
    return report;
}

std::string AnalyzeReport::text() const {
    std::ostringstream os;
    os << "formula.standard.params=" << formula_standard_params << "\n";
    os << "formula.standard.macs=" << formula_standard_macs << "\n";
    os << "formula.lightweight.params=" << formula_lightweight_params << "\n";
    os << "formula.lightweight.macs=" << formula_lightweight_macs << "\n";
    os << "reduction.ratio=" << reduction.str() << "\n";
    std::ostringstream dec;
    dec.precision(10);
    dec << reduction.value();
    os << "reduction.decimal=" << dec.str() << "\n";
    os << instantiated.text();
    return os.str();
}

std::string AnalyzeReport::json() const {
    nlohmann::ordered_json j;
    j["formula_standard_params"] = std::to_string(formula_standard_params);
    j["formula_standard_macs"] = std::to_string(formula_standard_macs);
    j["formula_lightweight_params"] = std::to_string(formula_lightweight_params);
    j["formula_lightweight_macs"] = std::to_string(formula_lightweight_macs);
    j["reduction_ratio"] = reduction.str();
    j["reduction_decimal"] = reduction.value();
    j["instantiated"] = nlohmann::ordered_json::parse(instantiated.json());
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

BenchReport run_bench(const RunConfig& cfg, std::ostream& log) {
    cfg.validate();
    PoseModel model = cfg.checkpoint.empty() ? PoseModel::build(cfg.model, cfg.seed)
                                             : PoseModel::load_checkpoint(cfg.checkpoint);
    const ModelConfig& mc = model.config();

    // fixed input, held constant across rounds
    std::mt19937_64 rng(cfg.seed);
    Tensor input = Tensor::zeros({1, mc.in_channels, mc.input_h, mc.input_w});
    for (double& v : input.data()) v = next_uniform01(rng);

    BenchReport report;
    report.rounds = cfg.bench_rounds;
    report.warmup = cfg.bench_warmup;
    report.timed_iterations = cfg.bench_rounds - cfg.bench_warmup;

    std::vector<std::pair<std::string, double>> stage_acc;
    double min_t = std::numeric_limits<double>::infinity();
    double max_t = 0.0;
    double total = 0.0;

    NoGradGuard ng;
    using clock = std::chrono::steady_clock;
    for (int round = 0; round < cfg.bench_rounds; ++round) {
        // pre-processing stand-in stays outside the timed region
        if (cfg.preprocess_delay_ms > 0.0)
            std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(cfg.preprocess_delay_ms));

        std::vector<std::pair<std::string, double>> stages;
        const auto t0 = clock::now();
        Tensor out = model.forward_timed(input, stages);
        const auto t1 = clock::now();
        (void)out;

        if (round < cfg.bench_warmup) continue;
        const double dt = std::chrono::duration<double>(t1 - t0).count();
        total += dt;
        min_t = std::min(min_t, dt);
        max_t = std::max(max_t, dt);
        if (stage_acc.empty()) {
            stage_acc = stages;
        } else {
            for (size_t i = 0; i < stages.size(); ++i) stage_acc[i].second += stages[i].second;
        }
    }

    report.total_seconds = total;
    report.mean_ms = 1000.0 * total / report.timed_iterations;
    report.fps_mean = report.timed_iterations / total;
    report.fps_min = 1.0 / max_t;
    report.fps_max = 1.0 / min_t;

    double stage_total = 0.0;
    for (const auto& [name, t] : stage_acc) stage_total += t;
    for (const auto& [name, t] : stage_acc)
        report.per_layer_share.emplace_back(name, stage_total > 0.0 ? t / stage_total : 0.0);

    log << report.text();
    return report;
}

std::string BenchReport::text() const {
    std::ostringstream os;
    os << "rounds=" << rounds << "\n";
    os << "warmup=" << warmup << "\n";
    os << "timed_iterations=" << timed_iterations << "\n";
    os << "mean_ms=" << mean_ms << "\n";
    os << "fps_mean=" << fps_mean << "\n";
    os << "fps_min=" << fps_min << "\n";
    os << "fps_max=" << fps_max << "\n";
    for (const auto& [name, share] : per_layer_share)
        os << "layer." << name << ".share=" << share << "\n";
    return os.str();
}

std::string BenchReport::json() const {
    nlohmann::ordered_json j;
    j["rounds"] = rounds;
    j["warmup"] = warmup;
    j["timed_iterations"] = timed_iterations;
    j["total_seconds"] = total_seconds;
    j["mean_ms"] = mean_ms;
    j["fps_mean"] = fps_mean;
    j["fps_min"] = fps_min;
    j["fps_max"] = fps_max;
    nlohmann::ordered_json layers = nlohmann::ordered_json::object();
    for (const auto& [name, share] : per_layer_share) layers[name] = share;
    j["layer_shares"] = layers;
    return j.dump(2);
}

} // namespace posekit
