#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "posekit/config.hpp"
#include "posekit/optim.hpp"
#include "posekit/tensor.hpp"

namespace posekit {

enum class HeadVariant { lightweight, standard };

std::string to_string(HeadVariant v);
HeadVariant head_variant_from_string(const std::string& s);

/// Declarative description of the backbone stub plus the deconvolution head.
/// The backbone is a stack of stride-2 conv/norm/relu stages (one entry in
/// backbone_channels per stage); each head stage doubles the resolution, so
/// heatmap size = input / (2^stages / 2^head_layers).
struct ModelConfig {
    int input_h = 256;
    int input_w = 192;
    int in_channels = 3;
    int num_joints = 17;
    std::vector<int> backbone_channels = {16, 24, 32, 64, 128};
    int head_layers = 3;
    int head_kernel = 4;
    int head_channels = 256;
    int squeeze_ratio = 16;
    bool attention = true;
    HeadVariant head_variant = HeadVariant::lightweight;
    bool bias_pointwise = true;  // biases on conv / pointwise layers
    bool bias_deconv = false;    // biases on (depthwise) deconvolution layers
    double heatmap_sigma = 2.0;

    int backbone_stride() const { return 1 << static_cast<int>(backbone_channels.size()); }
    std::pair<int, int> feature_size() const;
    std::pair<int, int> heatmap_size() const;

    void validate() const; // throws ConfigError

    KeyValueConfig to_kv() const;
    static ModelConfig from_kv(const KeyValueConfig& kv);
};

// ---------------------------------------------------------------------------
// Attention block (three parallel branches, summed)
// ---------------------------------------------------------------------------

struct ChannelAttentionWeights {
    Tensor squeeze_w; // (C/r, C, 1, 1)
    Tensor squeeze_b; // (1, C/r, 1, 1)
    Tensor excite_w;  // (C, C/r, 1, 1)
    Tensor excite_b;  // (1, C, 1, 1)
};

struct SpatialAttentionWeights {
    Tensor collapse_w; // (1, C, 1, 1)
    Tensor collapse_b; // (1, 1, 1, 1)
    Tensor conv_w;     // (1, 1, 3, 3)
    Tensor conv_b;     // (1, 1, 1, 1)
};

struct AttentionWeights {
    ChannelAttentionWeights channel;
    SpatialAttentionWeights spatial;
};

/// f (.) hsig(excite(squeeze(GAP(f)))), attention map broadcast over H, W.
Tensor channel_attention(const Tensor& f, const ChannelAttentionWeights& w);

/// f (.) hsig(conv3x3(collapse(f))), attention map broadcast over channels.
Tensor spatial_attention(const Tensor& f, const SpatialAttentionWeights& w);

/// f + channel_attention(f) + spatial_attention(f).
Tensor attention_block(const Tensor& f, const AttentionWeights& w);

/// Zero weights and biases for a C-channel block; attention_block with these
/// computes exactly 2*f (both branch maps are hsig(0) = 0.5).
AttentionWeights zero_attention_weights(int channels, int squeeze_ratio);

// ---------------------------------------------------------------------------
// PoseModel
// ---------------------------------------------------------------------------

class PoseModel {
public:
    PoseModel(const PoseModel&) = delete;
    PoseModel& operator=(const PoseModel&) = delete;
    PoseModel(PoseModel&&) = default;
    PoseModel& operator=(PoseModel&&) = default;

    const ModelConfig& config() const { return config_; }

    /// Forward pass to N x J x heatmap_h x heatmap_w. training selects batch
    /// statistics (and updates running stats) vs stored running statistics.
    Tensor forward(const Tensor& batch, bool training);

    /// Forward with per-stage wall time appended to stage_seconds.
    Tensor forward_timed(const Tensor& batch,
                         std::vector<std::pair<std::string, double>>& stage_seconds);

    std::vector<Parameter*> parameters();
    Parameter* find_parameter(const std::string& name);
    /// Value buffers that are saved but not trained (batch-norm statistics).
    std::vector<std::pair<std::string, Tensor>> buffers();

    int64_t parameter_count() const;
    /// FNV-1a over all parameter bytes in declaration order.
    uint64_t parameter_checksum() const;

    void save_checkpoint(const std::filesystem::path& path) const;
    static PoseModel load_checkpoint(const std::filesystem::path& path);

    /// Deterministic He-style initialization; identical seeds give
    /// bit-identical weights.
    static PoseModel build(const ModelConfig& config, uint64_t seed);

private:
    PoseModel() = default;

    struct ConvUnit {
        Parameter* weight = nullptr;
        Parameter* bias = nullptr; // null when the layer has no bias
    };
    struct NormUnit {
        Parameter* gamma = nullptr;
        Parameter* beta = nullptr;
        Tensor running_mean;
        Tensor running_var;
    };
    struct AttentionUnit {
        ConvUnit squeeze, excite, collapse, conv;
        AttentionWeights weights() const;
    };
    struct BackboneStage {
        ConvUnit conv;
        NormUnit norm;
    };
    struct HeadStage {
        ConvUnit deconv;              // depthwise (lightweight) or full (standard)
        std::optional<ConvUnit> pw;   // pointwise mix, lightweight only
        NormUnit norm;
        std::optional<AttentionUnit> attention;
    };

    Parameter* add_parameter(const std::string& name, Tensor value);
    ConvUnit add_conv(const std::string& name, Shape4 kernel_shape, bool with_bias,
                      int64_t bias_channels, std::mt19937_64& rng);
    NormUnit add_norm(const std::string& name, int64_t channels);
    Tensor run_norm_act(NormUnit& norm, const Tensor& x, bool training);
    Tensor run_head_stage(HeadStage& stage, const Tensor& x, bool training);

    ModelConfig config_;
    std::vector<std::unique_ptr<Parameter>> params_;
    std::vector<BackboneStage> backbone_;
    ConvUnit compress_;
    NormUnit compress_norm_;
    std::vector<HeadStage> head_;
    ConvUnit final_;
};

} // namespace posekit
