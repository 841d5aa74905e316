#include <doctest.h>

#include <random>

#include "posekit/cost.hpp"

using namespace posekit;

namespace {

HeadSpec reference_spec() {
    HeadSpec spec;
    spec.variant = HeadVariant::lightweight;
    spec.layers = {
        {4, 256, 256, 16, 12},
        {4, 256, 256, 32, 24},
        {4, 256, 256, 64, 48},
    };
    return spec;
}

ModelConfig random_config(std::mt19937_64& rng) {
    ModelConfig cfg;
    cfg.input_h = 32 << (rng() % 2);
    cfg.input_w = 32;
    cfg.in_channels = 1 + static_cast<int>(rng() % 3);
    cfg.num_joints = 1 + static_cast<int>(rng() % 6);
    cfg.backbone_channels = {4, 8};
    for (uint64_t extra = rng() % 2; extra > 0; --extra) cfg.backbone_channels.push_back(8);
    cfg.head_layers = 1 + static_cast<int>(rng() % 3);
    cfg.head_kernel = 2 + 2 * static_cast<int>(rng() % 3);
    cfg.squeeze_ratio = 1 << (rng() % 3);
    cfg.head_channels = cfg.squeeze_ratio * (1 + static_cast<int>(rng() % 8));
    cfg.attention = rng() % 2 == 0;
    cfg.head_variant = rng() % 2 == 0 ? HeadVariant::lightweight : HeadVariant::standard;
    cfg.validate();
    return cfg;
}

} // namespace

TEST_SUITE("cost") {

TEST_CASE("standard head parameter count") {
    CHECK(standard_head_params(reference_spec()) == 3145728); // 3 * 16 * 256 * 256
    HeadSpec one;
    one.layers = {{1, 1, 1, 1, 1}};
    CHECK(standard_head_params(one) == 1);
    HeadSpec empty;
    CHECK(standard_head_params(empty) == 0);
    CHECK(lightweight_head_params(empty) == 0);
    CHECK(standard_head_macs(empty) == 0);
    CHECK(lightweight_head_macs(empty) == 0);
}

TEST_CASE("standard head MACs at the reference resolutions") {
    // 16*256*256 * (16*12 + 32*24 + 64*48)
    CHECK(standard_head_macs(reference_spec()) == 4227858432LL);

    HeadSpec unit;
    unit.layers = {{3, 5, 7, 1, 1}};
    CHECK(standard_head_macs(unit) == standard_head_params(unit)); // W=H=1

    HeadSpec spec = reference_spec();
    for (auto& l : spec.layers) l.out_w *= 2;
    CHECK(standard_head_macs(spec) == 2 * standard_head_macs(reference_spec()));
}

TEST_CASE("lightweight head counts") {
    // per layer: 16*256 + 256*256 = 69632; three layers
    CHECK(lightweight_head_params(reference_spec()) == 208896);
    HeadSpec one = reference_spec();
    one.layers.resize(1);
    CHECK(lightweight_head_params(one) == 69632);
    CHECK(lightweight_head_macs(one) == 69632LL * 16 * 12);

    HeadSpec degenerate;
    degenerate.layers = {{1, 6, 9, 3, 2}};
    CHECK(lightweight_head_macs(degenerate) == (6 + 6 * 9) * 6); // (Cin + Cin*Cout) * W*H
}

TEST_CASE("lightweight never exceeds standard for k >= 2, Cout >= 2") {
    // k^2*Cin + Cin*Cout <= k^2*Cin*Cout iff k^2*(Cout-1) >= Cout, which
    // holds whenever both k and Cout are at least 2
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        HeadSpec spec;
        const int layers = 1 + static_cast<int>(rng() % 4);
        int64_t h = 8, w = 8;
        for (int i = 0; i < layers; ++i) {
            h *= 2;
            w *= 2;
            spec.layers.push_back({static_cast<int64_t>(2 + rng() % 5),
                                   static_cast<int64_t>(1 + rng() % 64),
                                   static_cast<int64_t>(2 + rng() % 63), h, w});
        }
        CHECK(lightweight_head_macs(spec) <= standard_head_macs(spec));
        CHECK(lightweight_head_params(spec) <= standard_head_params(spec));
    }

    // and genuinely fails outside that region: pointwise mixing is pure
    // overhead when there is a single output channel or a 1x1 kernel
    HeadSpec single_out;
    single_out.layers = {{4, 8, 1, 4, 4}};
    CHECK(lightweight_head_params(single_out) > standard_head_params(single_out));
    HeadSpec unit_kernel;
    unit_kernel.layers = {{1, 8, 8, 4, 4}};
    CHECK(lightweight_head_macs(unit_kernel) > standard_head_macs(unit_kernel));
}

TEST_CASE("reduction ratio is exactly 17/256 for the reference head") {
    const Rational r = reduction_ratio(reference_spec());
    CHECK(r.num == 17);
    CHECK(r.den == 256);
    CHECK(r.str() == "17/256");
    CHECK(r.value() == doctest::Approx(0.06640625).epsilon(1e-15));
}

TEST_CASE("reduction ratio algebra") {
    // D_K = 1, Cin = Cout = C: (1 + C)/C before reduction
    for (int64_t c : {3, 7, 16}) {
        HeadSpec spec;
        spec.layers = {{1, c, c, 10, 10}};
        const Rational r = reduction_ratio(spec);
        const Rational want = Rational::of(1 + c, c);
        CHECK(r == want);
    }

    // uniform specs: ratio = (k^2 + C)/(k^2 C), independent of W and H
    HeadSpec spec = reference_spec();
    const Rational a = reduction_ratio(spec);
    for (auto& l : spec.layers) {
        l.out_h *= 3;
        l.out_w *= 5;
    }
    CHECK(reduction_ratio(spec) == a);
    CHECK(a == Rational::of(16 + 256, 16 * 256));
}

TEST_CASE("rational reduction and errors") {
    CHECK(Rational::of(4, 8).str() == "1/2");
    CHECK(Rational::of(-4, 8).str() == "-1/2");
    CHECK(Rational::of(4, -8).str() == "-1/2");
    CHECK_THROWS_AS(Rational::of(1, 0), ValueError);
}

TEST_CASE("head spec from config walks deconv output sizes") {
    ModelConfig cfg; // library defaults: l=3, k=4, C=256
    HeadSpec spec = head_spec_from_config(cfg);
    REQUIRE(spec.layers.size() == 3);
    CHECK(spec.layers[0].out_h == 16);
    CHECK(spec.layers[0].out_w == 12);
    CHECK(spec.layers[2].out_h == 64);
    CHECK(spec.layers[2].out_w == 48);
    CHECK(spec.layers[0].kernel == 4);
    CHECK(spec.layers[0].c_in == 256);
}

TEST_CASE("formula counts equal instantiated counts for random specs") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 20; ++trial) {
        const ModelConfig cfg = random_config(rng);
        PoseModel model = PoseModel::build(cfg, trial);
        const CostReport report = count_instantiated(model);
        const HeadSpec spec = head_spec_from_config(cfg);
        const bool lightweight = cfg.head_variant == HeadVariant::lightweight;
        const int64_t want_params =
            lightweight ? lightweight_head_params(spec) : standard_head_params(spec);
        const int64_t want_macs =
            lightweight ? lightweight_head_macs(spec) : standard_head_macs(spec);
        CHECK(report.head_weights.params == want_params);
        CHECK(report.head_weights.macs == want_macs);
        CHECK(report.reduction == reduction_ratio(spec));
        CHECK(model.parameter_count() == report.params_total);
    }
}

TEST_CASE("attention on/off parameter delta matches the closed form") {
    ModelConfig cfg;
    cfg.input_h = 64;
    cfg.input_w = 64;
    cfg.backbone_channels = {8, 16};
    cfg.head_layers = 2;
    cfg.head_channels = 32;
    cfg.squeeze_ratio = 4;
    cfg.num_joints = 5;

    cfg.attention = true;
    PoseModel with = PoseModel::build(cfg, 1);
    cfg.attention = false;
    PoseModel without = PoseModel::build(cfg, 1);

    const int64_t c = cfg.head_channels, r = cfg.squeeze_ratio;
    const int64_t per_block = 2 * (c * c / r)   // squeeze + excite weights
                              + (c / r + c)     // their biases
                              + (c + 9)         // collapse + 3x3 weights
                              + 2;              // spatial biases
    CHECK(with.parameter_count() - without.parameter_count() == cfg.head_layers * per_block);

    const CostReport report = count_instantiated(with);
    CHECK(report.attention.params == cfg.head_layers * per_block);
}

TEST_CASE("report totals equal the per-layer sums") {
    ModelConfig cfg;
    cfg.input_h = 32;
    cfg.input_w = 32;
    cfg.backbone_channels = {4, 8};
    cfg.head_layers = 1;
    cfg.head_channels = 8;
    cfg.squeeze_ratio = 2;
    cfg.num_joints = 3;
    PoseModel model = PoseModel::build(cfg, 5);
    const CostReport report = count_instantiated(model);
    int64_t params = 0, macs = 0;
    for (const auto& l : report.per_layer) {
        params += l.params;
        macs += l.macs;
    }
    CHECK(report.params_total == params);
    CHECK(report.macs_total == macs);
    CHECK(report.text().find("reduction.ratio=") != std::string::npos);
    CHECK(report.json().find("\"params_total\"") != std::string::npos);
}

} // TEST_SUITE
