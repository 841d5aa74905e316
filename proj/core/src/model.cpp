#include "posekit/model.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "posekit/rand.hpp"

namespace posekit {

std::string to_string(HeadVariant v) {
    return v == HeadVariant::lightweight ? "lightweight" : "standard";
}

HeadVariant head_variant_from_string(const std::string& s) {
    if (s == "lightweight") return HeadVariant::lightweight;
    if (s == "standard") return HeadVariant::standard;
    throw ConfigError("model: unknown head variant '" + s + "' (lightweight|standard)");
}

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

std::pair<int, int> ModelConfig::feature_size() const {
    const int s = backbone_stride();
    return {input_h / s, input_w / s};
}

std::pair<int, int> ModelConfig::heatmap_size() const {
    auto [fh, fw] = feature_size();
    return {fh << head_layers, fw << head_layers};
}

void ModelConfig::validate() const {
    if (num_joints < 1) throw ConfigError("model: num_joints must be >= 1");
    if (head_layers < 1) throw ConfigError("model: head_layers must be >= 1");
    if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
    if (input_h < 1 || input_w < 1) throw ConfigError("model: input size must be positive");
    if (backbone_channels.empty()) throw ConfigError("model: backbone needs at least one stage");
    for (int c : backbone_channels)
        if (c < 1) throw ConfigError("model: backbone channels must be positive");
    if (head_channels < 1) throw ConfigError("model: head_channels must be >= 1");
    if (squeeze_ratio < 1) throw ConfigError("model: squeeze_ratio must be >= 1");
    if (head_channels % squeeze_ratio != 0)
        throw ConfigError("model: head_channels " + std::to_string(head_channels) +
                          " not divisible by squeeze_ratio " + std::to_string(squeeze_ratio));
    if (head_kernel < 2 || head_kernel % 2 != 0)
        throw ConfigError("model: head_kernel must be even and >= 2 for stride-2 stages "
                          "(padding (k-2)/2 must be integral), got " + std::to_string(head_kernel));
    const int s = backbone_stride();
    if (input_h % s != 0 || input_w % s != 0)
        throw ConfigError("model: input " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                          " not divisible by backbone stride " + std::to_string(s));
    auto [fh, fw] = feature_size();
    if (fh < 1 || fw < 1) throw ConfigError("model: backbone collapses the feature map to zero");
}

KeyValueConfig ModelConfig::to_kv() const {
    KeyValueConfig kv;
    kv.set_int("model.input_h", input_h);
    kv.set_int("model.input_w", input_w);
    kv.set_int("model.in_channels", in_channels);
    kv.set_int("model.num_joints", num_joints);
    std::ostringstream bc;
    for (size_t i = 0; i < backbone_channels.size(); ++i) {
        if (i) bc << ",";
        bc << backbone_channels[i];
    }
    kv.set("model.backbone_channels", bc.str());
    kv.set_int("model.head_layers", head_layers);
    kv.set_int("model.head_kernel", head_kernel);
    kv.set_int("model.head_channels", head_channels);
    kv.set_int("model.squeeze_ratio", squeeze_ratio);
    kv.set_bool("model.attention", attention);
    kv.set("model.head_variant", to_string(head_variant));
    kv.set_bool("model.bias_pointwise", bias_pointwise);
    kv.set_bool("model.bias_deconv", bias_deconv);
    kv.set_double("model.heatmap_sigma", heatmap_sigma);
    return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValueConfig& kv) {
    ModelConfig cfg;
    cfg.input_h = static_cast<int>(kv.get_int("model.input_h", cfg.input_h));
    cfg.input_w = static_cast<int>(kv.get_int("model.input_w", cfg.input_w));
    cfg.in_channels = static_cast<int>(kv.get_int("model.in_channels", cfg.in_channels));
    cfg.num_joints = static_cast<int>(kv.get_int("model.num_joints", cfg.num_joints));
    std::vector<int64_t> bc_default(cfg.backbone_channels.begin(), cfg.backbone_channels.end());
    cfg.backbone_channels.clear();
    for (int64_t c : kv.get_int_list("model.backbone_channels", bc_default))
        cfg.backbone_channels.push_back(static_cast<int>(c));
    cfg.head_layers = static_cast<int>(kv.get_int("model.head_layers", cfg.head_layers));
    cfg.head_kernel = static_cast<int>(kv.get_int("model.head_kernel", cfg.head_kernel));
    cfg.head_channels = static_cast<int>(kv.get_int("model.head_channels", cfg.head_channels));
    cfg.squeeze_ratio = static_cast<int>(kv.get_int("model.squeeze_ratio", cfg.squeeze_ratio));
    cfg.attention = kv.get_bool("model.attention", cfg.attention);
    cfg.head_variant = head_variant_from_string(kv.get_string("model.head_variant", to_string(cfg.head_variant)));
    cfg.bias_pointwise = kv.get_bool("model.bias_pointwise", cfg.bias_pointwise);
    cfg.bias_deconv = kv.get_bool("model.bias_deconv", cfg.bias_deconv);
    cfg.heatmap_sigma = kv.get_double("model.heatmap_sigma", cfg.heatmap_sigma);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Attention ops
// ---------------------------------------------------------------------------

Tensor channel_attention(const Tensor& f, const ChannelAttentionWeights& w) {
    Tensor g = global_avg_pool(f);
    Tensor s = conv2d(g, w.squeeze_w, w.squeeze_b.defined() ? std::optional<Tensor>(w.squeeze_b) : std::nullopt, 1, 0, 1);
    Tensor e = conv2d(s, w.excite_w, w.excite_b.defined() ? std::optional<Tensor>(w.excite_b) : std::nullopt, 1, 0, 1);
    return mul(f, hard_sigmoid(e));
}

Tensor spatial_attention(const Tensor& f, const SpatialAttentionWeights& w) {
    Tensor a = conv2d(f, w.collapse_w, w.collapse_b.defined() ? std::optional<Tensor>(w.collapse_b) : std::nullopt, 1, 0, 1);
    a = conv2d(a, w.conv_w, w.conv_b.defined() ? std::optional<Tensor>(w.conv_b) : std::nullopt, 1, 1, 1);
    return mul(f, hard_sigmoid(a));
}

Tensor attention_block(const Tensor& f, const AttentionWeights& w) {
    return add(add(f, channel_attention(f, w.channel)), spatial_attention(f, w.spatial));
}

AttentionWeights zero_attention_weights(int channels, int squeeze_ratio) {
    if (channels % squeeze_ratio != 0)
        throw ConfigError("attention: channels " + std::to_string(channels) +
                          " not divisible by squeeze_ratio " + std::to_string(squeeze_ratio));
    const int64_t c = channels;
    const int64_t cr = channels / squeeze_ratio;
    AttentionWeights w;
    w.channel.squeeze_w = Tensor::zeros({cr, c, 1, 1});
    w.channel.squeeze_b = Tensor::zeros({1, cr, 1, 1});
    w.channel.excite_w = Tensor::zeros({c, cr, 1, 1});
    w.channel.excite_b = Tensor::zeros({1, c, 1, 1});
    w.spatial.collapse_w = Tensor::zeros({1, c, 1, 1});
    w.spatial.collapse_b = Tensor::zeros({1, 1, 1, 1});
    w.spatial.conv_w = Tensor::zeros({1, 1, 3, 3});
    w.spatial.conv_b = Tensor::zeros({1, 1, 1, 1});
    return w;
}

// ---------------------------------------------------------------------------
// Deterministic initialization
// ---------------------------------------------------------------------------

namespace {

Tensor he_init(Shape4 shape, std::mt19937_64& rng) {
    const double fan_in = static_cast<double>(shape.c * shape.h * shape.w);
    const double stddev = std::sqrt(2.0 / fan_in);
    std::vector<double> vals(static_cast<size_t>(shape.numel()));
    for (double& v : vals) v = stddev * next_gaussian(rng);
    return Tensor::from_data(shape, std::move(vals));
}

using binio::put_bytes;
using binio::put_u8;
using binio::put_u32;
using binio::put_f64;

void get_bytes(std::istream& in, void* p, size_t n, const char* what) {
    if (!binio::try_get_bytes(in, p, n))
        throw DataError(std::string("checkpoint: truncated while reading ") + what);
}

uint8_t get_u8(std::istream& in, const char* what) {
    uint8_t v;
    get_bytes(in, &v, 1, what);
    return v;
}

uint32_t get_u32(std::istream& in, const char* what) {
    uint8_t b[4];
    get_bytes(in, b, 4, what);
    return binio::decode_u32(b);
}

double get_f64(std::istream& in, const char* what) {
    uint8_t b[8];
    get_bytes(in, b, 8, what);
    return binio::decode_f64(b);
}

constexpr char kCheckpointMagic[4] = {'P', 'K', 'P', 'T'};
constexpr uint8_t kCheckpointVersion = 1;

} // namespace

// ---------------------------------------------------------------------------
// PoseModel construction
// ---------------------------------------------------------------------------

Parameter* PoseModel::add_parameter(const std::string& name, Tensor value) {
    params_.push_back(std::make_unique<Parameter>(name, std::move(value)));
    return params_.back().get();
}

PoseModel::ConvUnit PoseModel::add_conv(const std::string& name, Shape4 kernel_shape,
                                        bool with_bias, int64_t bias_channels,
                                        std::mt19937_64& rng) {
    ConvUnit unit;
    unit.weight = add_parameter(name + ".weight", he_init(kernel_shape, rng));
    if (with_bias)
        unit.bias = add_parameter(name + ".bias", Tensor::zeros({1, bias_channels, 1, 1}));
    return unit;
}

PoseModel::NormUnit PoseModel::add_norm(const std::string& name, int64_t channels) {
    NormUnit unit;
    unit.gamma = add_parameter(name + ".gamma", Tensor::full({1, channels, 1, 1}, 1.0));
    unit.beta = add_parameter(name + ".beta", Tensor::zeros({1, channels, 1, 1}));
    unit.running_mean = Tensor::zeros({1, channels, 1, 1});
    unit.running_var = Tensor::full({1, channels, 1, 1}, 1.0);
    return unit;
}

PoseModel PoseModel::build(const ModelConfig& config, uint64_t seed) {
    config.validate();
    PoseModel model;
    model.config_ = config;
    std::mt19937_64 rng(seed);

    int64_t c_prev = config.in_channels;
    for (size_t i = 0; i < config.backbone_channels.size(); ++i) {
        const int64_t c = config.backbone_channels[i];
        const std::string name = "backbone." + std::to_string(i);
        BackboneStage stage;
        stage.conv = model.add_conv(name + ".conv", {c, c_prev, 3, 3}, config.bias_pointwise, c, rng);
        stage.norm = model.add_norm(name + ".norm", c);
        model.backbone_.push_back(std::move(stage));
        c_prev = c;
    }

    const int64_t hc = config.head_channels;
    model.compress_ = model.add_conv("compress.conv", {hc, c_prev, 1, 1}, config.bias_pointwise, hc, rng);
    model.compress_norm_ = model.add_norm("compress.norm", hc);

    const int64_t k = config.head_kernel;
    for (int i = 0; i < config.head_layers; ++i) {
        const std::string name = "head." + std::to_string(i);
        HeadStage stage;
        if (config.head_variant == HeadVariant::lightweight) {
            stage.deconv = model.add_conv(name + ".deconv", {hc, 1, k, k}, config.bias_deconv, hc, rng);
            stage.pw = model.add_conv(name + ".pw", {hc, hc, 1, 1}, config.bias_pointwise, hc, rng);
        } else {
            stage.deconv = model.add_conv(name + ".deconv", {hc, hc, k, k}, config.bias_deconv, hc, rng);
        }
        stage.norm = model.add_norm(name + ".norm", hc);
        if (config.attention) {
            const int64_t cr = hc / config.squeeze_ratio;
            AttentionUnit att;
            att.squeeze = model.add_conv(name + ".att.squeeze", {cr, hc, 1, 1}, config.bias_pointwise, cr, rng);
            att.excite = model.add_conv(name + ".att.excite", {hc, cr, 1, 1}, config.bias_pointwise, hc, rng);
            att.collapse = model.add_conv(name + ".att.collapse", {1, hc, 1, 1}, config.bias_pointwise, 1, rng);
            att.conv = model.add_conv(name + ".att.conv", {1, 1, 3, 3}, config.bias_pointwise, 1, rng);
            stage.attention = std::move(att);
        }
        model.head_.push_back(std::move(stage));
    }

    model.final_ = model.add_conv("final", {config.num_joints, hc, 1, 1}, config.bias_pointwise,
                                  config.num_joints, rng);
    return model;
}

AttentionWeights PoseModel::AttentionUnit::weights() const {
    AttentionWeights w;
    w.channel.squeeze_w = squeeze.weight->value;
    if (squeeze.bias) w.channel.squeeze_b = squeeze.bias->value;
    w.channel.excite_w = excite.weight->value;
    if (excite.bias) w.channel.excite_b = excite.bias->value;
    w.spatial.collapse_w = collapse.weight->value;
    if (collapse.bias) w.spatial.collapse_b = collapse.bias->value;
    w.spatial.conv_w = conv.weight->value;
    if (conv.bias) w.spatial.conv_b = conv.bias->value;
    return w;
}

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

namespace {

std::optional<Tensor> bias_of(const Parameter* p) {
    if (!p) return std::nullopt;
    return p->value;
}

} // namespace

Tensor PoseModel::run_norm_act(NormUnit& norm, const Tensor& x, bool training) {
    Tensor y = batch_norm(x, norm.gamma->value, norm.beta->value,
                          norm.running_mean, norm.running_var, training);
    return relu(y);
}

Tensor PoseModel::run_head_stage(HeadStage& stage, const Tensor& x, bool training) {
    const int k = config_.head_kernel;
    const int pad = (k - 2) / 2;
    Tensor y;
    if (config_.head_variant == HeadVariant::lightweight) {
        y = deconv2d(x, stage.deconv.weight->value, bias_of(stage.deconv.bias), 2, pad,
                     static_cast<int>(config_.head_channels));
        y = conv2d(y, stage.pw->weight->value, bias_of(stage.pw->bias), 1, 0, 1);
    } else {
        y = deconv2d(x, stage.deconv.weight->value, bias_of(stage.deconv.bias), 2, pad, 1);
    }
    y = run_norm_act(stage.norm, y, training);
    if (stage.attention) y = attention_block(y, stage.attention->weights());
    return y;
}

Tensor PoseModel::forward(const Tensor& batch, bool training) {
    const Shape4& s = batch.shape();
    if (s.c != config_.in_channels || s.h != config_.input_h || s.w != config_.input_w)
        throw ShapeError("forward: expected batch of Nx" + std::to_string(config_.in_channels) + "x" +
                         std::to_string(config_.input_h) + "x" + std::to_string(config_.input_w) +
                         ", got " + s.str());
    Tensor x = batch;
    for (auto& stage : backbone_) {
        x = conv2d(x, stage.conv.weight->value, bias_of(stage.conv.bias), 2, 1, 1);
        x = run_norm_act(stage.norm, x, training);
    }
    x = conv2d(x, compress_.weight->value, bias_of(compress_.bias), 1, 0, 1);
    x = run_norm_act(compress_norm_, x, training);
    for (auto& stage : head_) x = run_head_stage(stage, x, training);
    return conv2d(x, final_.weight->value, bias_of(final_.bias), 1, 0, 1);
}

Tensor PoseModel::forward_timed(const Tensor& batch,
                                std::vector<std::pair<std::string, double>>& stage_seconds) {
    using clock = std::chrono::steady_clock;
    auto timed = [&stage_seconds](const std::string& name, auto&& fn) {
        const auto t0 = clock::now();
        Tensor out = fn();
        const auto t1 = clock::now();
        stage_seconds.emplace_back(name, std::chrono::duration<double>(t1 - t0).count());
        return out;
    };

    Tensor x = batch;
    for (size_t i = 0; i < backbone_.size(); ++i) {
        x = timed("backbone." + std::to_string(i), [&] {
            Tensor y = conv2d(x, backbone_[i].conv.weight->value, bias_of(backbone_[i].conv.bias), 2, 1, 1);
            return run_norm_act(backbone_[i].norm, y, false);
        });
    }
    x = timed("compress", [&] {
        Tensor y = conv2d(x, compress_.weight->value, bias_of(compress_.bias), 1, 0, 1);
        return run_norm_act(compress_norm_, y, false);
    });
    for (size_t i = 0; i < head_.size(); ++i) {
        x = timed("head." + std::to_string(i), [&] { return run_head_stage(head_[i], x, false); });
    }
    return timed("final", [&] { return conv2d(x, final_.weight->value, bias_of(final_.bias), 1, 0, 1); });
}

// ---------------------------------------------------------------------------
// Parameter access, checksums, checkpoints
// ---------------------------------------------------------------------------

std::vector<Parameter*> PoseModel::parameters() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
}

Parameter* PoseModel::find_parameter(const std::string& name) {
    for (auto& p : params_)
        if (p->name == name) return p.get();
    return nullptr;
}

std::vector<std::pair<std::string, Tensor>> PoseModel::buffers() {
    std::vector<std::pair<std::string, Tensor>> out;
    auto push_norm = [&out](const std::string& name, const NormUnit& n) {
        out.emplace_back(name + ".running_mean", n.running_mean);
        out.emplace_back(name + ".running_var", n.running_var);
    };
    for (size_t i = 0; i < backbone_.size(); ++i)
        push_norm("backbone." + std::to_string(i) + ".norm", backbone_[i].norm);
    push_norm("compress.norm", compress_norm_);
    for (size_t i = 0; i < head_.size(); ++i)
        push_norm("head." + std::to_string(i) + ".norm", head_[i].norm);
    return out;
}

int64_t PoseModel::parameter_count() const {
    int64_t total = 0;
    for (const auto& p : params_) total += p->value.numel();
    return total;
}

uint64_t PoseModel::parameter_checksum() const {
    uint64_t hash = 1469598103934665603ull; // FNV-1a offset basis
    for (const auto& p : params_) {
        for (double v : p->value.data()) {
            uint64_t u;
            std::memcpy(&u, &v, 8);
            for (int i = 0; i < 8; ++i) {
                hash ^= (u >> (8 * i)) & 0xffull;
                hash *= 1099511628211ull;
            }
        }
    }
    return hash;
}

void PoseModel::save_checkpoint(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + path.string());
    put_bytes(out, kCheckpointMagic, 4);
    put_u8(out, kCheckpointVersion);
    const std::string cfg = config_.to_kv().serialize();
    put_u32(out, static_cast<uint32_t>(cfg.size()));
    put_bytes(out, cfg.data(), cfg.size());

    auto& self = const_cast<PoseModel&>(*this);
    std::vector<std::pair<std::string, Tensor>> blobs;
    for (auto& p : self.params_) blobs.emplace_back(p->name, p->value);
    for (auto& [name, buf] : self.buffers()) blobs.emplace_back(name, buf);

    put_u32(out, static_cast<uint32_t>(blobs.size()));
    for (auto& [name, t] : blobs) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        put_bytes(out, name.data(), name.size());
        const Shape4& s = t.shape();
        put_u32(out, static_cast<uint32_t>(s.n));
        put_u32(out, static_cast<uint32_t>(s.c));
        put_u32(out, static_cast<uint32_t>(s.h));
        put_u32(out, static_cast<uint32_t>(s.w));
        for (double v : t.data()) put_f64(out, v);
    }
    if (!out) throw DataError("checkpoint: write failed for " + path.string());
}

PoseModel PoseModel::load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path.string());
    char magic[4];
    get_bytes(in, magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in " + path.string());
    const uint8_t version = get_u8(in, "version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version));
    const uint32_t cfg_len = get_u32(in, "config length");
    std::string cfg_text(cfg_len, '\0');
    get_bytes(in, cfg_text.data(), cfg_len, "config");
    const ModelConfig config = ModelConfig::from_kv(KeyValueConfig::parse(cfg_text));

    PoseModel model = build(config, 0);
    std::vector<std::pair<std::string, Tensor>> buffers = model.buffers();

    const uint32_t blob_count = get_u32(in, "blob count");
    for (uint32_t b = 0; b < blob_count; ++b) {
        const uint32_t name_len = get_u32(in, "name length");
        std::string name(name_len, '\0');
        get_bytes(in, name.data(), name_len, "name");
        Shape4 s;
        s.n = get_u32(in, "shape");
        s.c = get_u32(in, "shape");
        s.h = get_u32(in, "shape");
        s.w = get_u32(in, "shape");

        Tensor target;
        if (Parameter* p = model.find_parameter(name)) {
            target = p->value;
        } else {
            for (auto& [bn, bt] : buffers)
                if (bn == name) { target = bt; break; }
        }
        if (!target.defined())
            throw DataError("checkpoint: unknown blob '" + name + "' in " + path.string());
        if (!(target.shape() == s))
            throw DataError("checkpoint: blob '" + name + "' has shape " + s.str() +
                            ", model expects " + target.shape().str());
        auto dst = target.data();
        for (int64_t i = 0; i < s.numel(); ++i) dst[static_cast<size_t>(i)] = get_f64(in, name.c_str());
    }
    return model;
}

} // namespace posekit
