#include "posekit/cost.hpp"

#include <numeric>
#include <sstream>

#include <json.hpp>

namespace posekit {

namespace {

int64_t cmul(int64_t a, int64_t b) {
    int64_t r;
    if (__builtin_mul_overflow(a, b, &r)) throw ValueError("cost: integer overflow in exact count");
    return r;
}

int64_t cadd(int64_t a, int64_t b) {
    int64_t r;
    if (__builtin_add_overflow(a, b, &r)) throw ValueError("cost: integer overflow in exact count");
    return r;
}

} // namespace

Rational Rational::of(int64_t num, int64_t den) {
    if (den == 0) throw ValueError("rational: zero denominator");
    if (den < 0) {
        num = -num;
        den = -den;
    }
    const int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    return Rational{num, den};
}

HeadSpec head_spec_from_config(const ModelConfig& config) {
    config.validate();
    HeadSpec spec;
    spec.variant = config.head_variant;
    auto [fh, fw] = config.feature_size();
    int64_t h = fh, w = fw;
    for (int i = 0; i < config.head_layers; ++i) {
        h *= 2;
        w *= 2;
        spec.layers.push_back(HeadLayerSpec{config.head_kernel, config.head_channels,
                                            config.head_channels, h, w});
    }
    return spec;
}

int64_t standard_head_params(const HeadSpec& spec) {
    int64_t total = 0;
    for (const auto& l : spec.layers)
        total = cadd(total, cmul(cmul(l.kernel, l.kernel), cmul(l.c_in, l.c_out)));
    return total;
}

int64_t standard_head_macs(const HeadSpec& spec) {
    int64_t total = 0;
    for (const auto& l : spec.layers)
        total = cadd(total, cmul(cmul(cmul(l.kernel, l.kernel), cmul(l.c_in, l.c_out)),
                                 cmul(l.out_w, l.out_h)));
    return total;
}

int64_t lightweight_head_params(const HeadSpec& spec) {
    int64_t total = 0;
    for (const auto& l : spec.layers)
        total = cadd(total, cadd(cmul(cmul(l.kernel, l.kernel), l.c_in), cmul(l.c_in, l.c_out)));
    return total;
}

int64_t lightweight_head_macs(const HeadSpec& spec) {
    int64_t total = 0;
    for (const auto& l : spec.layers) {
        const int64_t per_pixel = cadd(cmul(cmul(l.kernel, l.kernel), l.c_in), cmul(l.c_in, l.c_out));
        total = cadd(total, cmul(per_pixel, cmul(l.out_w, l.out_h)));
    }
    return total;
}

Rational reduction_ratio(const HeadSpec& spec) {
    return Rational::of(lightweight_head_macs(spec), standard_head_macs(spec));
}

// ---------------------------------------------------------------------------
// Instantiated counts
// ---------------------------------------------------------------------------

namespace {

struct LayerDims {
    int64_t out_h = 1;
    int64_t out_w = 1;
};

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.rfind(prefix, 0) == 0;
}

} // namespace

CostReport count_instantiated(PoseModel& model) {
    const ModelConfig& cfg = model.config();
    CostReport report;
    report.reduction = reduction_ratio(head_spec_from_config(cfg));

    // output resolution per named layer group, from the shape walk
    std::vector<LayerDims> backbone_dims;
    {
        int64_t h = cfg.input_h, w = cfg.input_w;
        for (size_t i = 0; i < cfg.backbone_channels.size(); ++i) {
            h = (h + 2 - 3) / 2 + 1; // conv k3 s2 p1
            w = (w + 2 - 3) / 2 + 1;
            backbone_dims.push_back({h, w});
        }
    }
    auto [fh, fw] = cfg.feature_size();
    std::vector<LayerDims> head_dims;
    {
        int64_t h = fh, w = fw;
        for (int i = 0; i < cfg.head_layers; ++i) {
            h *= 2;
            w *= 2;
            head_dims.push_back({h, w});
        }
    }
    auto [hh, hw] = cfg.heatmap_size();

    // MACs follow the cost derivation's output-size convention: every weight
    // is charged once per output position of its layer; attention squeeze and
    // excite act on the pooled 1x1 map.
    auto spatial_for = [&](const std::string& name) -> int64_t {
        if (starts_with(name, "backbone.")) {
            const size_t idx = static_cast<size_t>(std::stoll(name.substr(9)));
            return backbone_dims[idx].out_h * backbone_dims[idx].out_w;
        }
        if (starts_with(name, "compress.")) return static_cast<int64_t>(fh) * fw;
        if (starts_with(name, "head.")) {
            const size_t idx = static_cast<size_t>(std::stoll(name.substr(5)));
            const int64_t hw_out = head_dims[idx].out_h * head_dims[idx].out_w;
            if (name.find(".att.squeeze") != std::string::npos ||
                name.find(".att.excite") != std::string::npos)
                return 1;
            return hw_out;
        }
        if (starts_with(name, "final")) return static_cast<int64_t>(hh) * hw;
        return 1;
    };

    auto bucket_for = [&](const std::string& name, bool is_weight) -> CostBucket* {
        if (starts_with(name, "backbone.")) return &report.backbone;
        if (starts_with(name, "compress.")) return &report.compression;
        if (starts_with(name, "final")) return &report.final_layer;
        if (name.find(".att.") != std::string::npos) return &report.attention;
        if (starts_with(name, "head.")) {
            const bool head_conv_weight =
                is_weight && (name.find(".deconv.weight") != std::string::npos ||
                              name.find(".pw.weight") != std::string::npos);
            return head_conv_weight ? &report.head_weights : &report.head_bias_norm;
        }
        return nullptr;
    };

    for (Parameter* p : model.parameters()) {
        const std::string& name = p->name;
        const int64_t count = p->value.numel();
        const bool is_conv_weight = name.ends_with(".weight");
        const int64_t macs = is_conv_weight ? cmul(count, spatial_for(name)) : 0;
        report.per_layer.push_back(LayerCost{name, count, macs});
        report.params_total = cadd(report.params_total, count);
        report.macs_total = cadd(report.macs_total, macs);
        if (CostBucket* b = bucket_for(name, is_conv_weight)) {
            b->params = cadd(b->params, count);
            b->macs = cadd(b->macs, macs);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

std::string CostReport::text() const {
    std::ostringstream os;
    os << "params.total=" << params_total << "\n";
    os << "macs.total=" << macs_total << "\n";
    os << "flops.total=" << 2 * macs_total << "\n";
    auto bucket = [&os](const char* name, const CostBucket& b) {
        os << "params." << name << "=" << b.params << "\n";
        os << "macs." << name << "=" << b.macs << "\n";
    };
    bucket("head_weights", head_weights);
    bucket("head_bias_norm", head_bias_norm);
    bucket("attention", attention);
    bucket("backbone", backbone);
    bucket("compression", compression);
    bucket("final_layer", final_layer);
    os << "reduction.ratio=" << reduction.str() << "\n";
    std::ostringstream dec;
    dec.precision(10);
    dec << reduction.value();
    os << "reduction.decimal=" << dec.str() << "\n";
    for (const auto& l : per_layer) {
        os << "layer." << l.name << ".params=" << l.params << "\n";
        os << "layer." << l.name << ".macs=" << l.macs << "\n";
    }
    return os.str();
}

std::string CostReport::json() const {
    nlohmann::ordered_json j;
    j["params_total"] = std::to_string(params_total);
    j["macs_total"] = std::to_string(macs_total);
    j["flops_total"] = std::to_string(2 * macs_total);
    j["flops_note"] = "flops = 2*macs; reported GFLOPs conventionally equals MACs";
    auto bucket = [](const CostBucket& b) {
        nlohmann::ordered_json o;
        o["params"] = std::to_string(b.params);
        o["macs"] = std::to_string(b.macs);
        return o;
    };
    j["head_weights"] = bucket(head_weights);
    j["head_bias_norm"] = bucket(head_bias_norm);
    j["attention"] = bucket(attention);
    j["backbone"] = bucket(backbone);
    j["compression"] = bucket(compression);
    j["final_layer"] = bucket(final_layer);
    j["reduction_ratio"] = reduction.str();
    j["reduction_decimal"] = reduction.value();
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (const auto& l : per_layer) {
        nlohmann::ordered_json o;
        o["name"] = l.name;
        o["params"] = std::to_string(l.params);
        o["macs"] = std::to_string(l.macs);
        layers.push_back(o);
    }
    j["layers"] = layers;
    return j.dump(2);
}

} // namespace posekit
