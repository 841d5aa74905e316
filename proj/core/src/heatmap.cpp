#include "posekit/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "posekit/rand.hpp"

namespace posekit {

int64_t KeypointSet::labeled_count() const {
    int64_t n = 0;
    for (const auto& p : pts)
        if (p.vis > 0) ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Affine geometry
// ---------------------------------------------------------------------------

std::pair<double, double> AffineTransform::apply(double x, double y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
}

AffineTransform AffineTransform::compose(const AffineTransform& inner) const {
    AffineTransform out;
    out.m[0] = m[0] * inner.m[0] + m[1] * inner.m[3];
    out.m[1] = m[0] * inner.m[1] + m[1] * inner.m[4];
    out.m[2] = m[0] * inner.m[2] + m[1] * inner.m[5] + m[2];
    out.m[3] = m[3] * inner.m[0] + m[4] * inner.m[3];
    out.m[4] = m[3] * inner.m[1] + m[4] * inner.m[4];
    out.m[5] = m[3] * inner.m[2] + m[4] * inner.m[5] + m[5];
    return out;
}

AffineTransform AffineTransform::inverse() const {
    const double det = det2();
    if (std::abs(det) < 1e-12)
        throw ValueError("affine: transform is singular (det ~ 0), cannot invert");
    const double inv = 1.0 / det;
    AffineTransform out;
    out.m[0] = m[4] * inv;
    out.m[1] = -m[1] * inv;
    out.m[3] = -m[3] * inv;
    out.m[4] = m[0] * inv;
    out.m[2] = -(out.m[0] * m[2] + out.m[1] * m[5]);
    out.m[5] = -(out.m[3] * m[2] + out.m[4] * m[5]);
    return out;
}

AffineTransform build_crop_affine(const BBox& bbox, double aspect, double rotation_deg,
                                  double scale, int out_h, int out_w) {
    if (bbox.w <= 0.0 || bbox.h <= 0.0)
        throw ValueError("crop: zero-area box (w=" + std::to_string(bbox.w) +
                         ", h=" + std::to_string(bbox.h) + ")");
    if (out_h < 1 || out_w < 1) throw ValueError("crop: output size must be positive");
    if (aspect <= 0.0) throw ValueError("crop: aspect must be positive");
    if (scale <= 0.0) throw ValueError("crop: scale must be positive");

    // grow the short side about the center until w/h == aspect
    double w = bbox.w, h = bbox.h;
    if (w / h < aspect)
        w = h * aspect;
    else
        h = w / aspect;
    w *= scale;
    h *= scale;

    const double theta = rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta), sn = std::sin(theta);
    const double sx = static_cast<double>(out_w) / w;
    const double sy = static_cast<double>(out_h) / h;

    // translate(-center) -> rotate(-theta) -> scale -> translate(out center);
    // a source box rotated by rotation_deg maps upright onto [0,out_w)x[0,out_h)
    AffineTransform t;
    t.m[0] = sx * cs;
    t.m[1] = sx * sn;
    t.m[3] = -sy * sn;
    t.m[4] = sy * cs;
    t.m[2] = 0.5 * out_w - (t.m[0] * bbox.cx + t.m[1] * bbox.cy);
    t.m[5] = 0.5 * out_h - (t.m[3] * bbox.cx + t.m[4] * bbox.cy);
    return t;
}

KeypointSet apply_affine_points(const AffineTransform& t, const KeypointSet& kps,
                                CoordSpace new_space) {
    KeypointSet out;
    out.space = new_space;
    out.pts.reserve(kps.pts.size());
    for (const Keypoint& p : kps.pts) {
        auto [x, y] = t.apply(p.x, p.y);
        out.pts.push_back({x, y, p.vis});
    }
    return out;
}

// ---------------------------------------------------------------------------
// HeatmapStack
// ---------------------------------------------------------------------------

HeatmapStack HeatmapStack::zeros(int64_t joints, int64_t h, int64_t w) {
    if (joints < 1 || h < 1 || w < 1)
        throw ValueError("heatmap: non-positive size " + std::to_string(joints) + "x" +
                         std::to_string(h) + "x" + std::to_string(w));
    HeatmapStack hm;
    hm.joints = joints;
    hm.h = h;
    hm.w = w;
    hm.data.assign(static_cast<size_t>(joints * h * w), 0.0);
    return hm;
}

double& HeatmapStack::at(int64_t j, int64_t y, int64_t x) {
    return data[static_cast<size_t>((j * h + y) * w + x)];
}

double HeatmapStack::at(int64_t j, int64_t y, int64_t x) const {
    return data[static_cast<size_t>((j * h + y) * w + x)];
}

HeatmapStack heatmaps_from_tensor(const Tensor& t, int64_t batch_index) {
    const Shape4& s = t.shape();
    if (batch_index < 0 || batch_index >= s.n)
        throw ShapeError("heatmap: batch index " + std::to_string(batch_index) +
                         " out of range for " + s.str());
    HeatmapStack hm = HeatmapStack::zeros(s.c, s.h, s.w);
    const auto src = t.data();
    const size_t offset = static_cast<size_t>(batch_index * s.c * s.h * s.w);
    std::copy(src.begin() + offset, src.begin() + offset + hm.data.size(), hm.data.begin());
    return hm;
}

Tensor tensor_from_heatmaps(const HeatmapStack& hm) {
    return Tensor::from_data({1, hm.joints, hm.h, hm.w}, hm.data);
}

// ---------------------------------------------------------------------------
// Gaussian encode / quarter-pixel decode
// ---------------------------------------------------------------------------

EncodeResult gaussian_encode(const KeypointSet& kps, int64_t h, int64_t w, double sigma) {
    if (sigma <= 0.0) throw ValueError("encode: sigma must be positive");
    const int64_t joints = kps.size();
    EncodeResult out{HeatmapStack::zeros(joints, h, w), std::vector<double>(joints, 0.0)};

    const int64_t radius = static_cast<int64_t>(std::ceil(3.0 * sigma));
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int64_t j = 0; j < joints; ++j) {
        const Keypoint& p = kps.pts[static_cast<size_t>(j)];
        if (p.vis == 0) continue;
        const int64_t cx = std::llround(p.x);
        const int64_t cy = std::llround(p.y);
        if (cx < 0 || cx >= w || cy < 0 || cy >= h) continue; // off-map center
        for (int64_t y = std::max<int64_t>(0, cy - radius); y <= std::min(h - 1, cy + radius); ++y)
            for (int64_t x = std::max<int64_t>(0, cx - radius); x <= std::min(w - 1, cx + radius); ++x) {
                const double dx = static_cast<double>(x - cx);
                const double dy = static_cast<double>(y - cy);
                out.maps.at(j, y, x) = std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
        out.joint_weights[static_cast<size_t>(j)] = 1.0;
    }
    return out;
}

DecodeResult decode(const HeatmapStack& hm) {
    DecodeResult out;
    out.kps.space = CoordSpace::heatmap;
    out.kps.pts.resize(static_cast<size_t>(hm.joints));
    out.scores.resize(static_cast<size_t>(hm.joints), 0.0);
    const double ninf = -std::numeric_limits<double>::infinity();

    for (int64_t j = 0; j < hm.joints; ++j) {
        int64_t bx = 0, by = 0;
        double best = hm.at(j, 0, 0);
        for (int64_t y = 0; y < hm.h; ++y)
            for (int64_t x = 0; x < hm.w; ++x) {
                const double v = hm.at(j, y, x);
                if (v > best) { // strict: first occurrence wins on ties
                    best = v;
                    bx = x;
                    by = y;
                }
            }
        const double left = bx > 0 ? hm.at(j, by, bx - 1) : ninf;
        const double right = bx < hm.w - 1 ? hm.at(j, by, bx + 1) : ninf;
        const double up = by > 0 ? hm.at(j, by - 1, bx) : ninf;
        const double down = by < hm.h - 1 ? hm.at(j, by + 1, bx) : ninf;

        // shift toward the strictly larger neighbor; a neighbor tying the
        // peak (plateau) gives no second-highest direction, so no shift
        double x = static_cast<double>(bx);
        double y = static_cast<double>(by);
        if (right > left && right < best) x += 0.25;
        else if (left > right && left < best) x -= 0.25;
        if (down > up && down < best) y += 0.25;
        else if (up > down && up < best) y -= 0.25;

        out.kps.pts[static_cast<size_t>(j)] = {x, y, 2};
        out.scores[static_cast<size_t>(j)] = best;
    }
    return out;
}

HeatmapStack flip_average(const HeatmapStack& hm_orig, const HeatmapStack& hm_flipped,
                          std::span<const std::pair<int, int>> flip_pairs) {
    if (hm_orig.joints != hm_flipped.joints || hm_orig.h != hm_flipped.h || hm_orig.w != hm_flipped.w)
        throw ShapeError("flip_average: stacks differ on an axis (" +
                         std::to_string(hm_orig.joints) + "x" + std::to_string(hm_orig.h) + "x" +
                         std::to_string(hm_orig.w) + " vs " + std::to_string(hm_flipped.joints) +
                         "x" + std::to_string(hm_flipped.h) + "x" + std::to_string(hm_flipped.w) + ")");

    std::vector<int64_t> perm(static_cast<size_t>(hm_orig.joints));
    for (size_t j = 0; j < perm.size(); ++j) perm[j] = static_cast<int64_t>(j);
    std::set<int> seen;
    for (const auto& [a, b] : flip_pairs) {
        if (a < 0 || b < 0 || a >= hm_orig.joints || b >= hm_orig.joints)
            throw ValueError("flip_average: pair (" + std::to_string(a) + "," + std::to_string(b) +
                             ") out of range for " + std::to_string(hm_orig.joints) + " joints");
        if (!seen.insert(a).second || !seen.insert(b).second)
            throw ValueError("flip_average: joint index repeated in flip pairs");
        perm[static_cast<size_t>(a)] = b;
        perm[static_cast<size_t>(b)] = a;
    }

    HeatmapStack out = HeatmapStack::zeros(hm_orig.joints, hm_orig.h, hm_orig.w);
    for (int64_t j = 0; j < hm_orig.joints; ++j)
        for (int64_t y = 0; y < hm_orig.h; ++y)
            for (int64_t x = 0; x < hm_orig.w; ++x)
                out.at(j, y, x) = 0.5 * (hm_orig.at(j, y, x) +
                                         hm_flipped.at(perm[static_cast<size_t>(j)], y, hm_orig.w - 1 - x));
    return out;
}

KeypointSet flip_keypoints(const KeypointSet& kps, int64_t width,
                           std::span<const std::pair<int, int>> flip_pairs) {
    KeypointSet out = kps;
    for (Keypoint& p : out.pts) p.x = static_cast<double>(width - 1) - p.x;
    for (const auto& [a, b] : flip_pairs) {
        if (a < 0 || b < 0 || a >= kps.size() || b >= kps.size())
            throw ValueError("flip_keypoints: pair (" + std::to_string(a) + "," + std::to_string(b) +
                             ") out of range for " + std::to_string(kps.size()) + " joints");
        std::swap(out.pts[static_cast<size_t>(a)], out.pts[static_cast<size_t>(b)]);
    }
    return out;
}

Tensor mirror_width(const Tensor& t) {
    const Shape4& s = t.shape();
    Tensor out = Tensor::zeros(s);
    const auto src = t.data();
    auto dst = out.data();
    for (int64_t n = 0; n < s.n; ++n)
        for (int64_t c = 0; c < s.c; ++c)
            for (int64_t y = 0; y < s.h; ++y) {
                const size_t row = static_cast<size_t>(((n * s.c + c) * s.h + y) * s.w);
                for (int64_t x = 0; x < s.w; ++x)
                    dst[row + static_cast<size_t>(x)] = src[row + static_cast<size_t>(s.w - 1 - x)];
            }
    return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

std::optional<BBox> half_body_transform(const KeypointSet& kps,
                                        std::span<const int> upper_ids,
                                        std::span<const int> lower_ids,
                                        std::mt19937_64& rng) {
    const bool pick_upper = next_bernoulli(rng, 0.5);
    const std::span<const int> ids = pick_upper ? upper_ids : lower_ids;

    double minx = std::numeric_limits<double>::infinity(), maxx = -minx;
    double miny = std::numeric_limits<double>::infinity(), maxy = -miny;
    int64_t labeled = 0;
    for (int id : ids) {
        if (id < 0 || id >= kps.size()) continue;
        const Keypoint& p = kps.pts[static_cast<size_t>(id)];
        if (p.vis == 0) continue;
        ++labeled;
        minx = std::min(minx, p.x);
        maxx = std::max(maxx, p.x);
        miny = std::min(miny, p.y);
        maxy = std::max(maxy, p.y);
    }
    if (labeled < 2) return std::nullopt;
    const double ex = maxx - minx, ey = maxy - miny;
    if (ex < 1e-9 || ey < 1e-9) return std::nullopt; // collinear joints, degenerate box

    constexpr double kPadding = 1.5;
    return BBox{0.5 * (minx + maxx), 0.5 * (miny + maxy), ex * kPadding, ey * kPadding};
}

AugmentSample sample_augmentation(std::mt19937_64& rng, const AugmentFlags& flags) {
    AugmentSample s;
    if (flags.rotation) s.rotation_deg = next_uniform(rng, -80.0, 80.0);
    if (flags.scaling) s.scale = next_uniform(rng, 0.5, 1.5);
    if (flags.flip) s.flip = next_bernoulli(rng, 0.5);
    if (flags.half_body) s.half_body = next_bernoulli(rng, 0.3);
    return s;
}

// ---------------------------------------------------------------------------
// Skeleton tables
// ---------------------------------------------------------------------------

const FlipPairTable& coco17_flip_pairs() {
    static const FlipPairTable table{
        "coco17.v1",
        {{1, 2}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}, {13, 14}, {15, 16}},
    };
    return table;
}

// Text format: optional "version <name>" first line, then one "j k" pair per line.
FlipPairTable load_flip_pairs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("flip pairs: cannot open " + path);
    FlipPairTable table;
    table.version = "custom";
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first) || first[0] == '#') continue;
        if (first == "version") {
            if (!(ls >> table.version))
                throw DataError("flip pairs: line " + std::to_string(lineno) + ": missing version name");
            continue;
        }
        int a, b;
        std::istringstream ps(line);
        if (!(ps >> a >> b))
            throw DataError("flip pairs: line " + std::to_string(lineno) + ": expected 'j k'");
        table.pairs.emplace_back(a, b);
    }
    return table;
}

namespace {
constexpr int kCocoUpper[] = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
constexpr int kCocoLower[] = {11, 12, 13, 14, 15, 16};
} // namespace

std::span<const int> coco17_upper_body_ids() { return kCocoUpper; }
std::span<const int> coco17_lower_body_ids() { return kCocoLower; }

} // namespace posekit
