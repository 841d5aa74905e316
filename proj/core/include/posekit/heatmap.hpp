#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "posekit/errors.hpp"
#include "posekit/tensor.hpp"

namespace posekit {

enum class CoordSpace { image, crop, heatmap };

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    int vis = 0; // 0 absent, 1 occluded-labeled, 2 visible
};

struct KeypointSet {
    std::vector<Keypoint> pts;
    CoordSpace space = CoordSpace::image;

    int64_t size() const { return static_cast<int64_t>(pts.size()); }
    int64_t labeled_count() const;
};

/// Center/size box.
struct BBox {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

/// Row-major 2x3 matrix mapping (x, y, 1) to (x', y').
struct AffineTransform {
    std::array<double, 6> m = {1, 0, 0, 0, 1, 0};

    static AffineTransform identity() { return {}; }
    std::pair<double, double> apply(double x, double y) const;
    /// this after inner: apply(compose(inner), p) == apply(this, apply(inner, p)).
    AffineTransform compose(const AffineTransform& inner) const;
    AffineTransform inverse() const; // throws ValueError when singular
    double det2() const { return m[0] * m[4] - m[1] * m[3]; }
};

/// J stacked H x W confidence maps.
struct HeatmapStack {
    int64_t joints = 0;
    int64_t h = 0;
    int64_t w = 0;
    std::vector<double> data;

    static HeatmapStack zeros(int64_t joints, int64_t h, int64_t w);
    double& at(int64_t j, int64_t y, int64_t x);
    double at(int64_t j, int64_t y, int64_t x) const;
};

/// One batch element of an NxJxHxW tensor as a heatmap stack.
HeatmapStack heatmaps_from_tensor(const Tensor& t, int64_t batch_index);
Tensor tensor_from_heatmaps(const HeatmapStack& hm);

/// Crop geometry: expands bbox to the aspect ratio (width/height) by growing
/// the short side about the center, applies scale about the center (scale > 1
/// enlarges the source box, shrinking the subject in the output) and rotation
/// about the center, then maps the box onto [0,out_w) x [0,out_h).
AffineTransform build_crop_affine(const BBox& bbox, double aspect, double rotation_deg,
                                  double scale, int out_h, int out_w);

KeypointSet apply_affine_points(const AffineTransform& t, const KeypointSet& kps,
                                CoordSpace new_space);

struct EncodeResult {
    HeatmapStack maps;
    std::vector<double> joint_weights; // 1 for encodable joints, else 0
};

/// Unnormalized Gaussians with peak 1.0 on the integer grid point nearest
/// each labeled joint, written inside a +-3*sigma window. Joints that are
/// unlabeled or whose rounded center falls off the map give a zero map and
/// weight 0.
EncodeResult gaussian_encode(const KeypointSet& kps, int64_t h, int64_t w, double sigma);

struct DecodeResult {
    KeypointSet kps;    // heatmap space
    std::vector<double> scores; // per-joint max value
};

/// Argmax per joint (row-major first occurrence on ties) with a quarter-pixel
/// shift per axis toward the strictly larger of the two neighbors; missing
/// border neighbors compare as -inf. A neighbor that ties the peak value
/// (plateau, e.g. a constant map) gives no shift: there is no second-highest
/// direction to move toward.
DecodeResult decode(const HeatmapStack& hm);

/// Mirrors hm_flipped along width, swaps paired joint channels, then averages
/// with hm_orig 0.5/0.5.
HeatmapStack flip_average(const HeatmapStack& hm_orig, const HeatmapStack& hm_flipped,
                          std::span<const std::pair<int, int>> flip_pairs);

/// x -> (width-1) - x with paired joint labels swapped (train-time flip).
KeypointSet flip_keypoints(const KeypointSet& kps, int64_t width,
                           std::span<const std::pair<int, int>> flip_pairs);

/// Width-mirrored copy of a tensor (value only, not differentiated).
Tensor mirror_width(const Tensor& t);

/// Bounding box of the visible joints of one randomly chosen half, padded by
/// 1.5. Returns nullopt when the chosen half has fewer than 2 labeled joints
/// or a degenerate extent.
std::optional<BBox> half_body_transform(const KeypointSet& kps,
                                        std::span<const int> upper_ids,
                                        std::span<const int> lower_ids,
                                        std::mt19937_64& rng);

struct AugmentFlags {
    bool rotation = true;
    bool scaling = true;
    bool flip = true;
    bool half_body = true;
};

struct AugmentSample {
    double rotation_deg = 0.0; // uniform [-80, 80]
    double scale = 1.0;        // uniform [0.5, 1.5]
    bool flip = false;         // p = 0.5
    bool half_body = false;    // p = 0.3
};

AugmentSample sample_augmentation(std::mt19937_64& rng, const AugmentFlags& flags);

/// Versioned left/right channel pairs for a skeleton layout.
struct FlipPairTable {
    std::string version;
    std::vector<std::pair<int, int>> pairs;
};

const FlipPairTable& coco17_flip_pairs();
FlipPairTable load_flip_pairs(const std::string& path);

std::span<const int> coco17_upper_body_ids();
std::span<const int> coco17_lower_body_ids();

} // namespace posekit
