// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "splatstyle/geometry/guidance.hpp"

using namespace splatstyle;
namespace st = splatstyle::testing;

namespace {

CameraView identity_camera(float fx, float fy, float cx, float cy, int size) {
    CameraView cam;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.width = cam.height = size;
    cam.validate();
    return cam;
}

CameraView translated_camera(const CameraView& base, const Eigen::Vector3f& w2c_translation) {
    CameraView cam = base;
    cam.world_to_camera.topRightCorner<3, 1>() = w2c_translation;
    return cam;
}

} // namespace

TEST_CASE("self-reprojection is the identity grid") {
    const CameraView cam = identity_camera(40.f, 40.f, 16.f, 16.f, 32);
    const ScalarMap depth = ScalarMap::Constant(32, 32, 3.7f);
    const auto [grid, raw] = compute_grid(cam, cam, depth);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            CHECK(grid.gx(y, x) == Catch::Approx(to_norm_coord(x + 0.5f, 32)).margin(1e-5));
            CHECK(grid.gy(y, x) == Catch::Approx(to_norm_coord(y + 0.5f, 32)).margin(1e-5));
            CHECK(raw(y, x) == Catch::Approx(3.7f));
        }
}

TEST_CASE("hand-computed pinhole back-projection and re-projection") {
    const CameraView ref = identity_camera(100.f, 100.f, 32.f, 32.f, 64);
    // source camera sits at world (1,0,0): w2c translation is (-1,0,0)
    const CameraView src = translated_camera(ref, {-1.f, 0.f, 0.f});
    ScalarMap depth = ScalarMap::Zero(64, 64);
    depth(32, 32) = 10.f;
    const auto [grid, raw] = compute_grid(ref, src, depth);

    // pixel (32,32), center (32.5,32.5): ray ((32.5-32)/100, (32.5-32)/100, 1),
    // world point at depth 10 is (0.05, 0.05, 10); in src frame (-0.95, 0.05, 10)
    CHECK(raw(32, 32) == Catch::Approx(10.f));
    const float u = 100.f * -0.95f / 10.f + 32.f; // 22.5
    const float v = 100.f * 0.05f / 10.f + 32.f;  // 32.5
    CHECK(grid.gx(32, 32) == Catch::Approx(to_norm_coord(u, 64)).margin(1e-5));
    CHECK(grid.gy(32, 32) == Catch::Approx(to_norm_coord(v, 64)).margin(1e-5));

    // zero-depth pixels are parked out of domain
    CHECK(grid.gx(0, 0) == 2.f);
    CHECK(raw(0, 0) == -1.f);
}

TEST_CASE("points behind the source camera are invisible") {
    const CameraView ref = identity_camera(40.f, 40.f, 16.f, 16.f, 32);
    // source looks back along -z from in front of the scene content
    const CameraView src = st::lookat_camera({0.f, 0.f, 10.f}, {0.f, 0.f, 20.f});
    const ScalarMap depth = ScalarMap::Constant(32, 32, 5.f); // world z in [~5]
    const auto [grid, raw] = compute_grid(ref, src, depth);
    const VisibilityMask m = compute_visibility(grid, raw);
    CHECK((raw < 0.f).all());
    CHECK(m.v.maxCoeff() == 0.f);
}

TEST_CASE("visibility matches a per-pixel brute-force oracle") {
    std::mt19937 rng(21);
    std::uniform_real_distribution<float> du(0.5f, 8.f);
    const auto cams = st::ring_cameras(3, 4.f, 16, 12.f);
    ScalarMap depth(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) depth(y, x) = (x % 3 == 0) ? 0.f : du(rng);

    const auto [grid, raw] = compute_grid(cams[0], cams[1], depth);
    const VisibilityMask m = compute_visibility(grid, raw);
    const Eigen::Matrix4f rel = cams[1].world_to_camera * cams[0].camera_to_world();
    int visible = 0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            float expected = 0.f;
            if (depth(y, x) > 0.f) {
                const Eigen::Vector4f p_ref(depth(y, x) * (x + 0.5f - cams[0].cx) / cams[0].fx,
                                            depth(y, x) * (y + 0.5f - cams[0].cy) / cams[0].fy,
                                            depth(y, x), 1.f);
                const Eigen::Vector4f p = rel * p_ref;
                if (p.z() > 0.f) {
                    const float u = cams[1].fx * p.x() / p.z() + cams[1].cx;
                    const float v = cams[1].fy * p.y() / p.z() + cams[1].cy;
                    if (u >= 0.5f && u <= 15.5f && v >= 0.5f && v <= 15.5f) expected = 1.f;
                }
            }
            CHECK(m.v(y, x) == expected);
            visible += static_cast<int>(expected);
        }
    CHECK(visible > 0);       // oracle exercises both branches
    CHECK(visible < 16 * 16);
}

TEST_CASE("bilinear warp of a 2x2 grid at its center averages all four tokens") {
    ad::Mat features(4, 1);
    features << 1.f, 2.f, 3.f, 4.f;
    SamplingGrid grid;
    grid.gx = ScalarMap::Constant(1, 1, 0.f);
    grid.gy = ScalarMap::Constant(1, 1, 0.f);
    grid.src_width = grid.src_height = 2;
    const ad::Mat out = warp_features(features, grid, 2, 2);
    CHECK(out(0, 0) == Catch::Approx(2.5f));
}

TEST_CASE("identity grid warps features to themselves") {
    std::mt19937 rng(22);
    std::normal_distribution<float> d(0.f, 1.f);
    ad::Mat features(8 * 8, 3);
    for (Eigen::Index i = 0; i < features.size(); ++i)
        features(i / 3, i % 3) = d(rng);
    SamplingGrid grid;
    grid.gx.resize(8, 8);
    grid.gy.resize(8, 8);
    grid.src_width = grid.src_height = 8;
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            grid.gx(y, x) = to_norm_coord(x + 0.5f, 8);
            grid.gy(y, x) = to_norm_coord(y + 0.5f, 8);
        }
    const ad::Mat out = warp_features(features, grid, 8, 8);
    CHECK((out - features).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("out-of-domain samples warp to zero") {
    const ad::Mat features = ad::Mat::Constant(16, 2, 5.f);
    SamplingGrid grid;
    grid.gx = ScalarMap::Constant(2, 2, 2.f); // the out-of-domain sentinel
    grid.gy = ScalarMap::Constant(2, 2, 2.f);
    grid.src_width = grid.src_height = 4;
    const ad::Mat out = warp_features(features, grid, 4, 4);
    CHECK(out.cwiseAbs().maxCoeff() == 0.f);
}

TEST_CASE("first-observer mask matches the product formula") {
    std::mt19937 rng(23);
    std::bernoulli_distribution coin(0.5);
    const int n = 4, h = 6, w = 5;
    std::vector<std::vector<ScalarMap>> vis(n);
    for (int b = 0; b < n; ++b)
        for (int j = 0; j < b; ++j) {
            ScalarMap v(h, w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) v(y, x) = coin(rng) ? 1.f : 0.f;
            vis[b].push_back(v);
        }
    const GeometryMask mg = geometry_aware_mask(vis);
    REQUIRE(mg.masks.size() == n);
    CHECK((mg.masks[0] == 1.f).all());
    for (int b = 1; b < n; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                float expect = 1.f;
                for (int j = 0; j < b; ++j) expect *= 1.f - vis[b][j](y, x);
                CHECK(mg.masks[b](y, x) == expect);
            }
}

TEST_CASE("grid and mask resampling") {
    SamplingGrid grid;
    grid.gx.resize(8, 8);
    grid.gy.resize(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            grid.gx(y, x) = 0.1f * x;
            grid.gy(y, x) = -0.05f * y;
        }
    SECTION("same-size resample is exact") {
        const SamplingGrid same = resample_grid(grid, 8, 8);
        CHECK((same.gx - grid.gx).cwiseAbs().maxCoeff() < 1e-6f);
        CHECK((same.gy - grid.gy).cwiseAbs().maxCoeff() < 1e-6f);
    }
    SECTION("2x downsample of a linear field lands between samples") {
        const SamplingGrid half = resample_grid(grid, 4, 4);
        // source index (x+0.5)*2 - 0.5 = 2x + 0.5 -> midpoint of columns 2x, 2x+1
        for (int x = 0; x < 4; ++x)
            CHECK(half.gx(0, x) == Catch::Approx(0.1f * (2 * x + 0.5f)).margin(1e-5));
    }
    SECTION("nearest mask downsample picks the covering source pixel") {
        ScalarMap checker(4, 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) checker(y, x) = static_cast<float>((x + y) % 2);
        const ScalarMap half = resample_mask_nearest(checker, 2, 2);
        // src index floor((i+0.5)*2) = 2i+1
        CHECK(half(0, 0) == checker(1, 1));
        CHECK(half(0, 1) == checker(1, 3));
        CHECK(half(1, 0) == checker(3, 1));
        CHECK(half(1, 1) == checker(3, 3));
        // binary masks stay binary
        for (int i = 0; i < 4; ++i) CHECK((half(i / 2, i % 2) == 0.f || half(i / 2, i % 2) == 1.f));
    }
}

TEST_CASE("planar-depth warp round-trip is cycle consistent") {
    const int res = 32;
    const CameraView a = identity_camera(40.f, 40.f, 16.f, 16.f, res);
    const CameraView b = translated_camera(a, {-0.5f, 0.2f, 0.f});
    // a plane at world z = 5 has camera depth 5 in both (translated, unrotated) views
    const ScalarMap depth = ScalarMap::Constant(res, res, 5.f);
    const auto [fwd, raw_f] = compute_grid(a, b, depth);
    const auto [bwd, raw_b] = compute_grid(b, a, depth);
    int checked = 0;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            const float u = from_norm_coord(fwd.gx(y, x), res);
            const float v = from_norm_coord(fwd.gy(y, x), res);
            const int xi = static_cast<int>(std::lround(u));
            const int yi = static_cast<int>(std::lround(v));
            if (xi < 0 || xi >= res || yi < 0 || yi >= res) continue;
            ++checked;
            // sample the reverse grid at the (rounded) forward target; a plane
            // keeps the mapping affine so half-pixel rounding stays small
            const float back_x = from_norm_coord(bwd.gx(yi, xi), res);
            const float back_y = from_norm_coord(bwd.gy(yi, xi), res);
            CHECK(std::abs(back_x - (x + 0.5f)) < 1.f);
            CHECK(std::abs(back_y - (y + 0.5f)) < 1.f);
        }
    CHECK(checked > res * res / 2);
}

TEST_CASE("compute_guidance wires grids, visibility, and the mask together") {
    const auto cams = st::ring_cameras(3, 4.f, 16, 12.f);
    std::vector<ScalarMap> depths(3, ScalarMap::Constant(16, 16, 4.f));
    std::vector<ScalarMap> alphas(3, ScalarMap::Constant(16, 16, 1.f));
    alphas[0].topRows(8).setConstant(0.2f); // background half in view 0

    const GeometryGuidance g = compute_guidance(cams, depths, alphas);
    REQUIRE(g.grids.size() == 3);
    REQUIRE(g.visibility.size() == 3);
    REQUIRE(g.mask.masks.size() == 3);
    CHECK((g.mask.masks[0] == 1.f).all());
    // background pixels of view 0 are invisible in every other view
    for (int j = 1; j < 3; ++j)
        CHECK(g.visibility[0][j].topRows(8).maxCoeff() == 0.f);
    // each view-b mask equals the product over earlier views
    for (int b = 1; b < 3; ++b) {
        ScalarMap expect = ScalarMap::Ones(16, 16);
        for (int j = 0; j < b; ++j) expect *= (1.f - g.visibility[b][j]);
        CHECK((g.mask.masks[b] == expect).all());
    }
}

TEST_CASE("single-view guidance degenerates to an all-ones mask") {
    const auto cams = st::ring_cameras(1, 4.f, 8, 12.f);
    const GeometryGuidance g =
        compute_guidance(cams, {ScalarMap::Constant(8, 8, 3.f)}, {ScalarMap::Ones(8, 8)});
    REQUIRE(g.mask.masks.size() == 1);
    CHECK((g.mask.masks[0] == 1.f).all());
    CHECK(g.mask.masks[0].rows() == 8);
}
