#include "posekit/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binio.hpp"
#include "posekit/config.hpp"
#include "posekit/rand.hpp"

namespace posekit {

// ---------------------------------------------------------------------------
// Tensor files
// ---------------------------------------------------------------------------

namespace {

constexpr char kTensorMagic[4] = {'P', 'H', 'T', '1'};
constexpr uint8_t kTensorRank = 4;
constexpr int64_t kMaxElements = int64_t(1) << 33; // 64 GiB of doubles, way past desk scale

} // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor& tensor) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("tensor file: cannot write " + path.string());
    binio::put_bytes(out, kTensorMagic, 4);
    binio::put_u8(out, kTensorRank);
    const Shape4& s = tensor.shape();
    binio::put_u32(out, static_cast<uint32_t>(s.n));
    binio::put_u32(out, static_cast<uint32_t>(s.c));
    binio::put_u32(out, static_cast<uint32_t>(s.h));
    binio::put_u32(out, static_cast<uint32_t>(s.w));
    for (double v : tensor.data()) binio::put_f64(out, v);
    if (!out) throw DataError("tensor file: write failed for " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("tensor file: cannot open " + path.string());

    char magic[4];
    if (!binio::try_get_bytes(in, magic, 4))
        throw TruncatedFileError("tensor file: truncated magic in " + path.string());
    if (std::memcmp(magic, kTensorMagic, 4) != 0)
        throw BadMagicError("tensor file: bad magic in " + path.string());

    uint8_t rank;
    if (!binio::try_get_bytes(in, &rank, 1))
        throw TruncatedFileError("tensor file: truncated rank in " + path.string());
    if (rank != kTensorRank)
        throw DataError("tensor file: unsupported rank " + std::to_string(rank) + " in " + path.string());

    int64_t dims[4];
    for (int i = 0; i < 4; ++i) {
        uint8_t b[4];
        if (!binio::try_get_bytes(in, b, 4))
            throw TruncatedFileError("tensor file: truncated dims in " + path.string());
        dims[i] = static_cast<int64_t>(binio::decode_u32(b));
    }
    int64_t numel = 1;
    for (int i = 0; i < 4; ++i) {
        if (dims[i] > kMaxElements || (dims[i] > 0 && numel > kMaxElements / std::max<int64_t>(dims[i], 1)))
            throw DimOverflowError("tensor file: dimensions overflow in " + path.string());
        numel *= dims[i];
    }

    std::vector<double> values(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) {
        uint8_t b[8];
        if (!binio::try_get_bytes(in, b, 8))
            throw TruncatedFileError("tensor file: truncated payload in " + path.string() +
                                     " (element " + std::to_string(i) + " of " + std::to_string(numel) + ")");
        values[static_cast<size_t>(i)] = binio::decode_f64(b);
    }
    return Tensor::from_data(Shape4{dims[0], dims[1], dims[2], dims[3]}, std::move(values));
}

// ---------------------------------------------------------------------------
// COCO-style documents
// ---------------------------------------------------------------------------

std::vector<EvalInstance> load_coco_keypoints(const std::filesystem::path& path,
                                              CocoLoadReport* report) {
    std::ifstream in(path);
    if (!in) throw DataError("coco: cannot open " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("coco: unparseable document " + path.string() + ": " + e.what());
    }
    if (!doc.contains("annotations") || !doc["annotations"].is_array())
        throw DataError("coco: document " + path.string() + " has no 'annotations' array");

    std::vector<EvalInstance> out;
    CocoLoadReport local;
    auto skip = [&local](int64_t idx, const std::string& why) {
        ++local.skipped;
        local.skip_reasons.push_back("annotation " + std::to_string(idx) + ": " + why);
    };

    int64_t idx = -1;
    for (const auto& ann : doc["annotations"]) {
        ++idx;
        if (!ann.is_object()) { skip(idx, "not an object"); continue; }
        if (!ann.contains("id") || !ann["id"].is_number()) { skip(idx, "missing id"); continue; }
        if (!ann.contains("keypoints") || !ann["keypoints"].is_array()) {
            skip(idx, "missing keypoints");
            continue;
        }
        const auto& kp = ann["keypoints"];
        if (kp.size() != 51) {
            skip(idx, "keypoints length " + std::to_string(kp.size()) + " != 51");
            continue;
        }
        if (!ann.contains("area") || !ann["area"].is_number()) { skip(idx, "missing area"); continue; }
        const double area = ann["area"].get<double>();
        if (!(area > 0.0)) { skip(idx, "non-positive area"); continue; }

        EvalInstance inst;
        inst.id = ann["id"].get<int64_t>();
        inst.area = area;
        inst.gt.space = CoordSpace::image;
        bool bad = false;
        for (size_t j = 0; j < 17; ++j) {
            if (!kp[3 * j].is_number() || !kp[3 * j + 1].is_number() || !kp[3 * j + 2].is_number()) {
                bad = true;
                break;
            }
            Keypoint p;
            p.x = kp[3 * j].get<double>();
            p.y = kp[3 * j + 1].get<double>();
            p.vis = kp[3 * j + 2].get<int>();
            inst.gt.pts.push_back(p);
        }
        if (bad) { skip(idx, "non-numeric keypoint entry"); continue; }
        if (ann.contains("score") && ann["score"].is_number())
            inst.score = ann["score"].get<double>();
        ++local.loaded;
        out.push_back(std::move(inst));
    }
    if (report) *report = std::move(local);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic dataset
// ---------------------------------------------------------------------------

namespace {

constexpr double kMinJointSeparation = 8.0;
constexpr double kRidgeSigma = 1.0;
constexpr double kBlobSigma = 1.5;
constexpr double kInstancePadding = 1.25;

double pair_min_distance(const std::vector<Keypoint>& pts) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j)
            best = std::min(best, std::hypot(pts[i].x - pts[j].x, pts[i].y - pts[j].y));
    return best;
}

} // namespace

KeypointSet sample_skeleton(std::mt19937_64& rng, int joints, int h, int w) {
    const double margin = std::max(4.0, 0.08 * std::min(h, w));
    const double lo_x = margin, hi_x = w - 1 - margin;
    const double lo_y = margin, hi_y = h - 1 - margin;
    if (hi_x <= lo_x || hi_y <= lo_y)
        throw DataError("synth: map " + std::to_string(h) + "x" + std::to_string(w) +
                        " too small for the margins");

    KeypointSet kps;
    kps.space = CoordSpace::crop;
    for (int attempt = 0; attempt < 300; ++attempt) {
        kps.pts.clear();
        double x = next_uniform(rng, lo_x, hi_x);
        double y = next_uniform(rng, lo_y, hi_y);
        kps.pts.push_back({x, y, 2});
        for (int j = 1; j < joints; ++j) {
            const double r = next_uniform(rng, kMinJointSeparation, 2.0 * kMinJointSeparation);
            const double a = next_uniform(rng, 0.0, 2.0 * std::numbers::pi);
            x = std::clamp(x + r * std::cos(a), lo_x, hi_x);
            y = std::clamp(y + r * std::sin(a), lo_y, hi_y);
            kps.pts.push_back({x, y, 2});
        }
        if (joints == 1 || pair_min_distance(kps.pts) >= kMinJointSeparation) return kps;
    }

    // rejection failed (crowded map): fall back to a jittered grid
    kps.pts.clear();
    const double spacing = kMinJointSeparation + 2.0;
    const int cols = std::max(1, static_cast<int>((hi_x - lo_x) / spacing) + 1);
    const int rows = std::max(1, static_cast<int>((hi_y - lo_y) / spacing) + 1);
    if (cols * rows < joints)
        throw DataError("synth: cannot place " + std::to_string(joints) +
                        " separated joints on a " + std::to_string(h) + "x" + std::to_string(w) + " map");
    for (int j = 0; j < joints; ++j) {
        const int gy = j / cols, gx = j % cols;
        const double jx = std::clamp(lo_x + gx * spacing + next_uniform(rng, -1.0, 1.0), lo_x, hi_x);
        const double jy = std::clamp(lo_y + gy * spacing + next_uniform(rng, -1.0, 1.0), lo_y, hi_y);
        kps.pts.push_back({jx, jy, 2});
    }
    return kps;
}

int blob_channel_index(int channels) { return channels >= 2 ? 1 : 0; }

Tensor render_sample_input(const KeypointSet& kps, int channels, int h, int w) {
    if (channels < 1 || h < 1 || w < 1)
        throw ValueError("render: non-positive output size");
    std::vector<double> ridges(static_cast<size_t>(h) * w, 0.0);
    std::vector<double> blobs(static_cast<size_t>(h) * w, 0.0);

    // limb ridges: oriented Gaussian falloff from each chain segment
    const double inv2r2 = 1.0 / (2.0 * kRidgeSigma * kRidgeSigma);
    for (size_t j = 0; j + 1 < kps.pts.size(); ++j) {
        const Keypoint& a = kps.pts[j];
        const Keypoint& b = kps.pts[j + 1];
        if (a.vis == 0 || b.vis == 0) continue;
        const double pad = 4.0;
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - pad)));
        const int x1 = std::min(w - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + pad)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - pad)));
        const int y1 = std::min(h - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + pad)));
        const double vx = b.x - a.x, vy = b.y - a.y;
        const double len2 = vx * vx + vy * vy;
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double t = len2 > 0.0 ? ((x - a.x) * vx + (y - a.y) * vy) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double dx = x - (a.x + t * vx);
                const double dy = y - (a.y + t * vy);
                const double v = std::exp(-(dx * dx + dy * dy) * inv2r2);
                double& cell = ridges[static_cast<size_t>(y) * w + x];
                cell = std::max(cell, v);
            }
    }

    // joint blobs: the argmax of this field sits on a keypoint
    const double inv2b2 = 1.0 / (2.0 * kBlobSigma * kBlobSigma);
    const int radius = static_cast<int>(std::ceil(4.0 * kBlobSigma));
    for (const Keypoint& p : kps.pts) {
        if (p.vis == 0) continue;
        const int cx = static_cast<int>(std::llround(p.x));
        const int cy = static_cast<int>(std::llround(p.y));
        for (int y = std::max(0, cy - radius); y <= std::min(h - 1, cy + radius); ++y)
            for (int x = std::max(0, cx - radius); x <= std::min(w - 1, cx + radius); ++x) {
                const double dx = x - p.x, dy = y - p.y;
                blobs[static_cast<size_t>(y) * w + x] += std::exp(-(dx * dx + dy * dy) * inv2b2);
            }
    }

    Tensor out = Tensor::zeros({1, channels, h, w});
    auto dst = out.data();
    const size_t plane = static_cast<size_t>(h) * w;
    if (channels == 1) {
        for (size_t i = 0; i < plane; ++i) dst[i] = blobs[i] + 0.5 * ridges[i];
    } else {
        std::copy(ridges.begin(), ridges.end(), dst.begin());
        std::copy(blobs.begin(), blobs.end(), dst.begin() + static_cast<int64_t>(plane));
        for (int c = 2; c < channels; ++c)
            for (size_t i = 0; i < plane; ++i)
                dst[static_cast<size_t>(c) * plane + i] = 0.5 * ridges[i] + 0.5 * blobs[i];
    }
    return out;
}

BBox keypoint_bbox(const KeypointSet& kps, double padding) {
    double minx = std::numeric_limits<double>::infinity(), maxx = -minx;
    double miny = std::numeric_limits<double>::infinity(), maxy = -miny;
    int64_t labeled = 0;
    for (const Keypoint& p : kps.pts) {
        if (p.vis == 0) continue;
        ++labeled;
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    if (labeled == 0) throw ValueError("bbox: no labeled joints");
    const double ex = std::max(maxx - minx, 1.0);
    const double ey = std::max(maxy - miny, 1.0);
    return BBox{0.5 * (minx + maxx), 0.5 * (miny + maxy), ex * padding, ey * padding};
}

// ---------------------------------------------------------------------------
// Dataset directory layout
// ---------------------------------------------------------------------------

std::string sample_filename(int64_t index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06lld.pht", static_cast<long long>(index));
    return buf;
}

void write_manifest(const std::filesystem::path& dir, const DatasetManifest& m) {
    KeyValueConfig kv;
    kv.set_int("dataset.format_version", m.format_version);
    kv.set_int("dataset.samples", m.samples);
    kv.set_int("dataset.input_h", m.input_h);
    kv.set_int("dataset.input_w", m.input_w);
    kv.set_int("dataset.channels", m.channels);
    kv.set_int("dataset.joints", m.joints);
    kv.set_double("dataset.sigma", m.sigma);
    kv.set_int("dataset.seed", static_cast<int64_t>(m.seed));
    kv.save(dir / "manifest.txt");
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.txt";
    if (!std::filesystem::exists(path))
        throw DataError("dataset: missing manifest " + path.string());
    KeyValueConfig kv = KeyValueConfig::load(path);
    DatasetManifest m;
    m.format_version = kv.get_int("dataset.format_version", 1);
    if (m.format_version != 1)
        throw DataError("dataset: unsupported format version " + std::to_string(m.format_version));
    m.samples = kv.get_int("dataset.samples", 0);
    m.input_h = static_cast<int>(kv.get_int("dataset.input_h", 0));
    m.input_w = static_cast<int>(kv.get_int("dataset.input_w", 0));
    m.channels = static_cast<int>(kv.get_int("dataset.channels", 0));
    m.joints = static_cast<int>(kv.get_int("dataset.joints", 0));
    m.sigma = kv.get_double("dataset.sigma", 2.0);
    m.seed = static_cast<uint64_t>(kv.get_int("dataset.seed", 0));
    if (m.samples < 1 || m.input_h < 1 || m.input_w < 1 || m.channels < 1 || m.joints < 1)
        throw DataError("dataset: manifest " + path.string() + " has invalid dimensions");
    return m;
}

void synth_generate(const std::filesystem::path& dir, int64_t n, const ModelConfig& config,
                    uint64_t seed) {
    if (n < 1) throw ValueError("synth: sample count must be >= 1");
    config.validate();
    std::filesystem::create_directories(dir / "samples");

    DatasetManifest m;
    m.samples = n;
    m.input_h = config.input_h;
    m.input_w = config.input_w;
    m.channels = config.in_channels;
    m.joints = config.num_joints;
    m.sigma = config.heatmap_sigma;
    m.seed = seed;
    write_manifest(dir, m);

    std::ofstream kp_out(dir / "keypoints.txt");
    if (!kp_out) throw DataError("synth: cannot write keypoints file in " + dir.string());
    kp_out.precision(17);

    std::mt19937_64 rng(seed);
    for (int64_t i = 0; i < n; ++i) {
        const KeypointSet kps = sample_skeleton(rng, config.num_joints, config.input_h, config.input_w);
        const Tensor input = render_sample_input(kps, config.in_channels, config.input_h, config.input_w);
        write_tensor_file(dir / "samples" / sample_filename(i), input);
        kp_out << i;
        for (const Keypoint& p : kps.pts) kp_out << " " << p.x << " " << p.y << " " << p.vis;
        kp_out << "\n";
    }
    if (!kp_out) throw DataError("synth: keypoints write failed in " + dir.string());
}

std::vector<KeypointSet> load_keypoint_records(const std::filesystem::path& dir,
                                               const DatasetManifest& manifest) {
    std::ifstream in(dir / "keypoints.txt");
    if (!in) throw DataError("dataset: missing keypoints file in " + dir.string());
    std::vector<KeypointSet> out;
    std::string line;
    int64_t lineno = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        int64_t id;
        if (!(ls >> id) || id != lineno)
            throw DataError("dataset: keypoints line " + std::to_string(lineno + 1) +
                            " has unexpected id");
        KeypointSet kps;
        kps.space = CoordSpace::crop;
        for (int j = 0; j < manifest.joints; ++j) {
            Keypoint p;
            if (!(ls >> p.x >> p.y >> p.vis))
                throw DataError("dataset: keypoints line " + std::to_string(lineno + 1) +
                                " is short (joint " + std::to_string(j) + ")");
            kps.pts.push_back(p);
        }
        out.push_back(std::move(kps));
        ++lineno;
    }
    if (lineno != manifest.samples)
        throw DataError("dataset: keypoints file has " + std::to_string(lineno) +
                        " records, manifest says " + std::to_string(manifest.samples));
    return out;
}

SampleRecord load_sample(const std::filesystem::path& dir, const DatasetManifest& manifest,
                         int64_t index) {
    if (index < 0 || index >= manifest.samples)
        throw DataError("dataset: sample index " + std::to_string(index) + " out of range");
    SampleRecord rec;
    rec.id = index;
    rec.input = read_tensor_file(dir / "samples" / sample_filename(index));
    const auto all = load_keypoint_records(dir, manifest);
    rec.kps = all[static_cast<size_t>(index)];
    rec.bbox = keypoint_bbox(rec.kps, kInstancePadding);
    rec.crop_to_image = AffineTransform::identity();
    return rec;
}

} // namespace posekit
