#include <doctest.h>

#include <cmath>
#include <random>

#include "posekit/heatmap.hpp"
#include "posekit/rand.hpp"

using namespace posekit;

namespace {

// seed whose first bernoulli(0.5) draw lands on the requested half
uint64_t seed_for_half(bool want_upper) {
    for (uint64_t seed = 0; seed < 64; ++seed) {
        std::mt19937_64 probe(seed);
        if (next_bernoulli(probe, 0.5) == want_upper) return seed;
    }
    REQUIRE(false);
    return 0;
}

} // namespace

TEST_SUITE("heatmap") {

TEST_CASE("crop affine maps box corners onto the output corners") {
    const BBox box{50.0, 40.0, 30.0, 40.0}; // already at 3:4 w:h
    AffineTransform t = build_crop_affine(box, 0.75, 0.0, 1.0, 256, 192);
    auto [x0, y0] = t.apply(50.0 - 15.0, 40.0 - 20.0);
    auto [x1, y1] = t.apply(50.0 + 15.0, 40.0 + 20.0);
    CHECK(x0 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(y0 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(x1 == doctest::Approx(192.0).epsilon(1e-12));
    CHECK(y1 == doctest::Approx(256.0).epsilon(1e-12));
}

TEST_CASE("crop affine: scale 2 halves the subject") {
    const BBox box{0.0, 0.0, 40.0, 40.0};
    AffineTransform t = build_crop_affine(box, 1.0, 0.0, 2.0, 100, 100);
    auto [cx, cy] = t.apply(0.0, 0.0);
    CHECK(cx == doctest::Approx(50.0));
    CHECK(cy == doctest::Approx(50.0));
    auto [ex, ey] = t.apply(20.0, 0.0); // box edge
    CHECK(ex == doctest::Approx(75.0)); // inside the output with margin
    CHECK(ey == doctest::Approx(50.0));
}

TEST_CASE("crop affine: 180 degree rotation flips both axes about the center") {
    const BBox box{10.0, 20.0, 20.0, 20.0};
    AffineTransform t = build_crop_affine(box, 1.0, 180.0, 1.0, 64, 64);
    auto [cx, cy] = t.apply(10.0, 20.0);
    CHECK(cx == doctest::Approx(32.0).epsilon(1e-9));
    CHECK(cy == doctest::Approx(32.0).epsilon(1e-9));
    auto [px, py] = t.apply(10.0 + 5.0, 20.0);
    CHECK(px == doctest::Approx(32.0 - 16.0).epsilon(1e-9)); // mirrored across the center
    CHECK(py == doctest::Approx(32.0).epsilon(1e-9));
}

TEST_CASE("crop affine grows the short side to reach the aspect") {
    const BBox tall{0.0, 0.0, 10.0, 40.0};
    // target w/h = 1: width grows to 40
    AffineTransform t = build_crop_affine(tall, 1.0, 0.0, 1.0, 80, 80);
    auto [left, mid] = t.apply(-20.0, 0.0);
    CHECK(left == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mid == doctest::Approx(40.0).epsilon(1e-12));
}

TEST_CASE("crop affine rejects degenerate boxes") {
    CHECK_THROWS_AS(build_crop_affine({0, 0, 0.0, 10.0}, 1.0, 0.0, 1.0, 10, 10), ValueError);
}

TEST_CASE("affine composition and inverse") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        AffineTransform a, b;
        for (double& m : a.m) m = next_uniform(rng, -2.0, 2.0);
        for (double& m : b.m) m = next_uniform(rng, -2.0, 2.0);
        if (std::abs(a.det2()) < 0.1 || std::abs(b.det2()) < 0.1) continue;

        const double x = next_uniform(rng, -10.0, 10.0);
        const double y = next_uniform(rng, -10.0, 10.0);
        auto [ix, iy] = b.apply(x, y);
        auto [wx, wy] = a.apply(ix, iy);
        auto [gx, gy] = a.compose(b).apply(x, y);
        CHECK(gx == doctest::Approx(wx).epsilon(1e-9));
        CHECK(gy == doctest::Approx(wy).epsilon(1e-9));

        auto [rx, ry] = a.inverse().apply(wx, wy);
        CHECK(rx == doctest::Approx(ix).epsilon(1e-9));
        CHECK(ry == doctest::Approx(iy).epsilon(1e-9));
    }
    AffineTransform singular;
    singular.m = {1, 0, 0, 2, 0, 0};
    CHECK_THROWS_AS(singular.inverse(), ValueError);
}

TEST_CASE("apply_affine_points") {
    KeypointSet kps;
    kps.space = CoordSpace::image;
    kps.pts = {{1.0, 2.0, 2}, {3.0, 4.0, 0}, {5.0, 6.0, 1}};

    KeypointSet same = apply_affine_points(AffineTransform::identity(), kps, CoordSpace::crop);
    CHECK(same.space == CoordSpace::crop);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(same.pts[i].x == kps.pts[i].x);
        CHECK(same.pts[i].y == kps.pts[i].y);
        CHECK(same.pts[i].vis == kps.pts[i].vis); // visibility preserved
    }

    AffineTransform shift;
    shift.m = {1, 0, 10, 0, 1, -5};
    KeypointSet moved = apply_affine_points(shift, kps, CoordSpace::crop);
    CHECK(moved.pts[0].x == doctest::Approx(11.0));
    CHECK(moved.pts[0].y == doctest::Approx(-3.0));
}

TEST_CASE("gaussian encode values") {
    KeypointSet kps;
    kps.space = CoordSpace::heatmap;
    kps.pts = {{10.0, 12.0, 2}};
    EncodeResult enc = gaussian_encode(kps, 24, 32, 2.0);
    CHECK(enc.joint_weights[0] == 1.0);
    CHECK(enc.maps.at(0, 12, 10) == 1.0);
    // one pixel to the right: exp(-1/(2*sigma^2)) = exp(-1/8)
    CHECK(enc.maps.at(0, 12, 11) == doctest::Approx(0.8824969025845955).epsilon(1e-12));
    for (double v : enc.maps.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("gaussian encode masks unlabeled and off-map joints") {
    KeypointSet kps;
    kps.space = CoordSpace::heatmap;
    kps.pts = {{5.0, 5.0, 0}, {100.0, 5.0, 2}, {5.0, 5.0, 2}};
    EncodeResult enc = gaussian_encode(kps, 16, 16, 2.0);
    CHECK(enc.joint_weights[0] == 0.0);
    CHECK(enc.joint_weights[1] == 0.0); // center rounds off the map
    CHECK(enc.joint_weights[2] == 1.0);
    for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 0; x < 16; ++x) {
            CHECK(enc.maps.at(0, y, x) == 0.0);
            CHECK(enc.maps.at(1, y, x) == 0.0);
        }
}

TEST_CASE("gaussian mass is invariant under interior integer translation") {
    auto mass = [](double cx, double cy) {
        KeypointSet kps;
        kps.space = CoordSpace::heatmap;
        kps.pts = {{cx, cy, 2}};
        EncodeResult enc = gaussian_encode(kps, 48, 48, 2.0);
        double m = 0.0;
        for (double v : enc.maps.data) m += v;
        return m;
    };
    CHECK(mass(20.0, 20.0) == doctest::Approx(mass(25.0, 17.0)).epsilon(1e-12));
}

TEST_CASE("encode rounds the center to the nearest grid point") {
    KeypointSet kps;
    kps.space = CoordSpace::heatmap;
    kps.pts = {{10.4, 11.6, 2}};
    EncodeResult enc = gaussian_encode(kps, 24, 24, 2.0);
    CHECK(enc.maps.at(0, 12, 10) == 1.0);
}

TEST_CASE("decode applies the quarter-pixel rule per axis") {
    HeatmapStack hm = HeatmapStack::zeros(1, 3, 5);
    hm.at(0, 1, 2) = 1.0;
    hm.at(0, 1, 3) = 0.5; // right > left
    hm.at(0, 1, 1) = 0.2;
    hm.at(0, 0, 2) = 0.3; // up > down
    hm.at(0, 2, 2) = 0.1;
    DecodeResult dec = decode(hm);
    CHECK(dec.kps.pts[0].x == doctest::Approx(2.25).epsilon(1e-12));
    CHECK(dec.kps.pts[0].y == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(dec.scores[0] == 1.0);

    // mirrored asymmetry flips the offset sign
    HeatmapStack hm2 = HeatmapStack::zeros(1, 3, 5);
    hm2.at(0, 1, 2) = 1.0;
    hm2.at(0, 1, 1) = 0.5;
    hm2.at(0, 2, 2) = 0.3;
    DecodeResult dec2 = decode(hm2);
    CHECK(dec2.kps.pts[0].x == doctest::Approx(1.75).epsilon(1e-12));
    CHECK(dec2.kps.pts[0].y == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("decode tie-breaking contract") {
    // constant map: first cell row-major, no offsets (border neighbors = -inf)
    HeatmapStack flat = HeatmapStack::zeros(1, 3, 3);
    for (double& v : flat.data) v = 0.7;
    DecodeResult dec = decode(flat);
    CHECK(dec.kps.pts[0].x == 0.0);
    CHECK(dec.kps.pts[0].y == 0.0);
    CHECK(dec.scores[0] == 0.7);

    // equal neighbors: no quarter-pixel shift
    HeatmapStack sym = HeatmapStack::zeros(1, 3, 3);
    sym.at(0, 1, 1) = 1.0;
    sym.at(0, 1, 0) = 0.4;
    sym.at(0, 1, 2) = 0.4;
    sym.at(0, 0, 1) = 0.2;
    sym.at(0, 2, 1) = 0.2;
    DecodeResult dsym = decode(sym);
    CHECK(dsym.kps.pts[0].x == 1.0);
    CHECK(dsym.kps.pts[0].y == 1.0);
}

TEST_CASE("encode-decode round trip stays within a quarter pixel") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const double gx = static_cast<double>(rng() % 48);
        const double gy = static_cast<double>(rng() % 64);
        KeypointSet kps;
        kps.space = CoordSpace::heatmap;
        kps.pts = {{gx, gy, 2}};
        EncodeResult enc = gaussian_encode(kps, 64, 48, 2.0);
        REQUIRE(enc.joint_weights[0] == 1.0);
        DecodeResult dec = decode(enc.maps);
        CHECK(std::abs(dec.kps.pts[0].x - gx) <= 0.25);
        CHECK(std::abs(dec.kps.pts[0].y - gy) <= 0.25);
    }

    // fractional joints decode to within a quarter pixel of the rounded center
    for (int trial = 0; trial < 100; ++trial) {
        const double gx = next_uniform(rng, 1.0, 46.0);
        const double gy = next_uniform(rng, 1.0, 62.0);
        KeypointSet kps;
        kps.space = CoordSpace::heatmap;
        kps.pts = {{gx, gy, 2}};
        DecodeResult dec = decode(gaussian_encode(kps, 64, 48, 2.0).maps);
        CHECK(std::abs(dec.kps.pts[0].x - std::llround(gx)) <= 0.25);
        CHECK(std::abs(dec.kps.pts[0].y - std::llround(gy)) <= 0.25);
    }
}

TEST_CASE("flip_average fixed point and hand case") {
    std::mt19937_64 rng(19);
    const std::vector<std::pair<int, int>> pairs = {{0, 1}};
    HeatmapStack orig = HeatmapStack::zeros(3, 4, 5);
    for (double& v : orig.data) v = next_uniform01(rng);

    // hm_flipped = mirror-and-swap of hm_orig => average returns hm_orig
    HeatmapStack flipped = HeatmapStack::zeros(3, 4, 5);
    auto mirrored_channel = [&](int64_t dst, int64_t src) {
        for (int64_t y = 0; y < 4; ++y)
            for (int64_t x = 0; x < 5; ++x) flipped.at(dst, y, x) = orig.at(src, y, 4 - x);
    };
    mirrored_channel(0, 1);
    mirrored_channel(1, 0);
    mirrored_channel(2, 2);
    HeatmapStack avg = flip_average(orig, flipped, pairs);
    for (size_t i = 0; i < avg.data.size(); ++i)
        CHECK(avg.data[i] == doctest::Approx(orig.data[i]).epsilon(1e-14));

    // symmetric stack with empty pairs stays unchanged
    HeatmapStack sym = HeatmapStack::zeros(1, 2, 3);
    sym.at(0, 0, 0) = 0.3;
    sym.at(0, 0, 2) = 0.3;
    sym.at(0, 0, 1) = 0.9;
    sym.at(0, 1, 0) = 0.1;
    sym.at(0, 1, 2) = 0.1;
    HeatmapStack same = flip_average(sym, sym, {});
    for (size_t i = 0; i < sym.data.size(); ++i)
        CHECK(same.data[i] == doctest::Approx(sym.data[i]).epsilon(1e-14));

    // 3x3 single joint: out = 0.5*(a + mirror(b))
    HeatmapStack a = HeatmapStack::zeros(1, 1, 3);
    HeatmapStack b = HeatmapStack::zeros(1, 1, 3);
    a.at(0, 0, 0) = 1.0;
    b.at(0, 0, 2) = 0.5;
    HeatmapStack out = flip_average(a, b, {});
    CHECK(out.at(0, 0, 0) == doctest::Approx(0.75));
    CHECK(out.at(0, 0, 1) == 0.0);
    CHECK(out.at(0, 0, 2) == 0.0);
}

TEST_CASE("flip_average rejects malformed pairs and shapes") {
    HeatmapStack a = HeatmapStack::zeros(3, 2, 2);
    std::vector<std::pair<int, int>> repeated = {{0, 1}, {1, 2}};
    CHECK_THROWS_AS(flip_average(a, a, repeated), ValueError);
    std::vector<std::pair<int, int>> self_pair = {{1, 1}};
    CHECK_THROWS_AS(flip_average(a, a, self_pair), ValueError);
    HeatmapStack b = HeatmapStack::zeros(3, 2, 3);
    CHECK_THROWS_AS(flip_average(a, b, {}), ShapeError);
}

TEST_CASE("flip_average commutes with scalar multiplication") {
    std::mt19937_64 rng(23);
    HeatmapStack a = HeatmapStack::zeros(2, 3, 4);
    HeatmapStack b = HeatmapStack::zeros(2, 3, 4);
    for (double& v : a.data) v = next_uniform01(rng);
    for (double& v : b.data) v = next_uniform01(rng);
    const std::vector<std::pair<int, int>> pairs = {{0, 1}};

    HeatmapStack scaled_in_a = a, scaled_in_b = b;
    for (double& v : scaled_in_a.data) v *= 3.0;
    for (double& v : scaled_in_b.data) v *= 3.0;
    HeatmapStack left = flip_average(scaled_in_a, scaled_in_b, pairs);
    HeatmapStack right = flip_average(a, b, pairs);
    for (size_t i = 0; i < left.data.size(); ++i)
        CHECK(left.data[i] == doctest::Approx(3.0 * right.data[i]).epsilon(1e-13));
}

TEST_CASE("flip_keypoints mirrors and swaps") {
    KeypointSet kps;
    kps.pts = {{1.0, 5.0, 2}, {8.0, 6.0, 1}};
    const std::vector<std::pair<int, int>> pairs = {{0, 1}};
    KeypointSet out = flip_keypoints(kps, 10, pairs);
    CHECK(out.pts[0].x == doctest::Approx(9.0 - 8.0));
    CHECK(out.pts[0].vis == 1);
    CHECK(out.pts[1].x == doctest::Approx(9.0 - 1.0));
    CHECK(out.pts[1].vis == 2);
}

TEST_CASE("half body transform") {
    KeypointSet kps;
    kps.pts.resize(6);
    const std::array<int, 3> upper_storage{0, 1, 2};
    const std::array<int, 3> lower_storage{3, 4, 5};
    std::span<const int> upper = upper_storage;
    std::span<const int> lower = lower_storage;

    // all joints invisible: no-op whatever half is chosen
    std::mt19937_64 rng(seed_for_half(true));
    CHECK_FALSE(half_body_transform(kps, upper, lower, rng).has_value());

    // visible joints all upper, lower selection: no-op
    kps.pts = {{10, 20, 2}, {30, 40, 2}, {20, 60, 2}, {0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
    std::mt19937_64 rng_lower(seed_for_half(false));
    CHECK_FALSE(half_body_transform(kps, upper, lower, rng_lower).has_value());

    // 3 upper joints: padded box by hand (pad factor 1.5)
    std::mt19937_64 rng_upper(seed_for_half(true));
    auto box = half_body_transform(kps, upper, lower, rng_upper);
    REQUIRE(box.has_value());
    CHECK(box->cx == doctest::Approx(20.0));
    CHECK(box->cy == doctest::Approx(40.0));
    CHECK(box->w == doctest::Approx(30.0));  // (30-10) * 1.5
    CHECK(box->h == doctest::Approx(60.0));  // (60-20) * 1.5
}

TEST_CASE("sample_augmentation ranges and determinism") {
    AugmentFlags off{false, false, false, false};
    std::mt19937_64 rng(5);
    AugmentSample none = sample_augmentation(rng, off);
    CHECK(none.rotation_deg == 0.0);
    CHECK(none.scale == 1.0);
    CHECK_FALSE(none.flip);
    CHECK_FALSE(none.half_body);

    std::mt19937_64 r1(99), r2(99);
    AugmentFlags on;
    for (int i = 0; i < 10; ++i) {
        AugmentSample a = sample_augmentation(r1, on);
        AugmentSample b = sample_augmentation(r2, on);
        CHECK(a.rotation_deg == b.rotation_deg);
        CHECK(a.scale == b.scale);
        CHECK(a.flip == b.flip);
        CHECK(a.half_body == b.half_body);
    }

    std::mt19937_64 rs(123);
    double rot_min = 1e9, rot_max = -1e9;
    int flips = 0;
    for (int i = 0; i < 10000; ++i) {
        AugmentSample s = sample_augmentation(rs, on);
        CHECK(s.rotation_deg >= -80.0);
        CHECK(s.rotation_deg <= 80.0);
        CHECK(s.scale >= 0.5);
        CHECK(s.scale <= 1.5);
        rot_min = std::min(rot_min, s.rotation_deg);
        rot_max = std::max(rot_max, s.rotation_deg);
        flips += s.flip ? 1 : 0;
    }
    // 10k draws cover at least 95% of the rotation range
    CHECK(rot_min <= -76.0);
    CHECK(rot_max >= 76.0);
    CHECK(flips > 4500);
    CHECK(flips < 5500);
}

TEST_CASE("coco flip pair table is a partial involution") {
    const FlipPairTable& t = coco17_flip_pairs();
    CHECK(t.version == "coco17.v1");
    CHECK(t.pairs.size() == 8);
    std::vector<int> seen;
    for (auto [a, b] : t.pairs) {
        CHECK(a >= 0);
        CHECK(b < 17);
        CHECK(a != b);
        seen.push_back(a);
        seen.push_back(b);
    }
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

} // TEST_SUITE
