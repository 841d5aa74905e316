#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "posekit/model.hpp"

namespace posekit {

/// Reduced fraction with positive denominator; all arithmetic exact.
struct Rational {
    int64_t num = 0;
    int64_t den = 1;

    static Rational of(int64_t num, int64_t den);
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }
    bool operator==(const Rational&) const = default;
};

/// Per-layer dimensions of a deconvolution head. out_h/out_w are the layer's
/// output feature-map size.
struct HeadLayerSpec {
    int64_t kernel = 4;
    int64_t c_in = 256;
    int64_t c_out = 256;
    int64_t out_h = 0;
    int64_t out_w = 0;
};

struct HeadSpec {
    HeadVariant variant = HeadVariant::lightweight;
    std::vector<HeadLayerSpec> layers;
};

/// Head dimensions implied by a model config (upsampling stages only; the
/// compression and final layers are excluded, as in the reduction ratio).
HeadSpec head_spec_from_config(const ModelConfig& config);

// Weight counts/MACs of the two head designs; biases and normalization are
// accounted separately by count_instantiated.
int64_t standard_head_params(const HeadSpec& spec);    // sum k^2 * Cin * Cout
int64_t standard_head_macs(const HeadSpec& spec);      // sum k^2 * Cin * Cout * W * H
int64_t lightweight_head_params(const HeadSpec& spec); // sum k^2 * Cin + Cin * Cout
int64_t lightweight_head_macs(const HeadSpec& spec);   // sum (k^2 * Cin + Cin * Cout) * W * H

/// lightweight_head_macs / standard_head_macs as an exact reduced fraction.
Rational reduction_ratio(const HeadSpec& spec);

struct CostBucket {
    int64_t params = 0;
    int64_t macs = 0;
};

struct LayerCost {
    std::string name;
    int64_t params = 0;
    int64_t macs = 0;
};

/// Exact accounting of an instantiated model. params_total/macs_total cover
/// every layer; the buckets split the totals by role. head_weights holds only
/// the head's convolution weights so it is directly comparable with the
/// formula counts above.
struct CostReport {
    std::vector<LayerCost> per_layer;
    int64_t params_total = 0;
    int64_t macs_total = 0;
    CostBucket head_weights;
    CostBucket head_bias_norm;
    CostBucket attention;
    CostBucket backbone;
    CostBucket compression;
    CostBucket final_layer;
    Rational reduction; // this head's MAC formula vs the standard head

    std::string text() const;
    std::string json() const; // exact integers rendered as decimal strings
};

CostReport count_instantiated(PoseModel& model);

} // namespace posekit
