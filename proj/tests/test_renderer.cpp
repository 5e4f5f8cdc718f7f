// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "splatstyle/render/renderer.hpp"

using namespace splatstyle;
namespace st = splatstyle::testing;

namespace {

GaussianScene single_gaussian(const Eigen::Vector3f& pos, float opacity_logit = 8.f) {
    GaussianScene s;
    s.sh_degree = 0;
    s.positions.resize(1, 3);
    s.positions.row(0) = pos.transpose();
    s.rotations.resize(1, 4);
    s.rotations.row(0) << 1.f, 0.f, 0.f, 0.f;
    s.scales.resize(1, 3);
    s.scales.row(0) << -1.f, -1.f, -1.f;
    s.opacities.resize(1);
    s.opacities(0) = opacity_logit;
    s.sh_dc.resize(1, 3);
    s.sh_dc.row(0) << 0.5f, 0.2f, -0.3f;
    s.sh_rest.resize(1, 0);
    s.validate();
    return s;
}

CameraView frontal_camera(int res = 32, float fx = 40.f) {
    CameraView cam;
    cam.fx = cam.fy = fx;
    cam.cx = cam.cy = res / 2.f;
    cam.width = cam.height = res;
    cam.validate();
    return cam;
}

float mean_rgb(const RenderOutput& out) {
    float s = 0;
    for (float v : out.rgb.data) s += v;
    return s / static_cast<float>(out.rgb.data.size());
}

} // namespace

TEST_CASE("opaque gaussian on the optical axis composites its depth") {
    const GaussianScene s = single_gaussian({0.f, 0.f, 5.f});
    const CameraView cam = frontal_camera();
    const RenderOutput out = render(s, cam);
    // analytic single-splat compositing: depth = alpha * z at the center
    const int c = cam.width / 2;
    CHECK(out.alpha(c, c) > 0.95f);
    CHECK(out.depth(c, c) / out.alpha(c, c) == Catch::Approx(5.f).epsilon(0.02));
}

TEST_CASE("fully transparent scene renders background") {
    GaussianScene s = st::toy_scene(20, 1);
    s.opacities.setConstant(-30.f); // sigmoid -> ~0
    RenderOptions opts;
    opts.background << 0.25f, 0.5f, 0.75f;
    const RenderOutput out = render(s, st::ring_cameras(1)[0], opts);
    CHECK(out.alpha.maxCoeff() == 0.f);
    for (int y = 0; y < out.rgb.height; ++y)
        for (int x = 0; x < out.rgb.width; ++x) {
            CHECK(out.rgb.at(y, x, 0) == Catch::Approx(0.25f));
            CHECK(out.rgb.at(y, x, 2) == Catch::Approx(0.75f));
        }
}

TEST_CASE("camera behind the scene yields empty alpha, not an error") {
    const GaussianScene s = single_gaussian({0.f, 0.f, 5.f});
    const CameraView cam = st::lookat_camera({0.f, 0.f, 10.f}, {0.f, 0.f, 20.f});
    const RenderOutput out = render(s, cam);
    CHECK(out.alpha.maxCoeff() == 0.f);
}

TEST_CASE("brightening sh_dc brightens covered pixels monotonically") {
    GaussianScene s = st::toy_scene(30, 2, 0);
    s.sh_dc.setConstant(0.f); // gray via the +0.5 offset
    const CameraView cam = st::ring_cameras(1)[0];
    const RenderOutput base = render(s, cam);
    s.sh_dc.setConstant(0.5f);
    const RenderOutput brighter = render(s, cam);
    int covered = 0;
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x)
            if (base.alpha(y, x) > 0.5f) {
                ++covered;
                for (int c = 0; c < 3; ++c)
                    CHECK(brighter.rgb.at(y, x, c) > base.rgb.at(y, x, c));
            }
    CHECK(covered > 10);
}

TEST_CASE("render_batch equals independent renders and is permutation-equivariant") {
    const GaussianScene s = st::toy_scene(25, 3);
    auto cams = st::ring_cameras(4);
    const auto batch = render_batch(s, cams);
    REQUIRE(batch.size() == 4);
    for (size_t i = 0; i < 4; ++i) {
        const RenderOutput solo = render(s, cams[i]);
        CHECK(batch[i].rgb.data == solo.rgb.data);
        CHECK((batch[i].depth == solo.depth).all());
    }
    std::swap(cams[1], cams[3]);
    const auto permuted = render_batch(s, cams);
    CHECK(permuted[1].rgb.data == batch[3].rgb.data);
    CHECK(permuted[3].rgb.data == batch[1].rgb.data);
}

TEST_CASE("analytic SH gradient matches finite differences") {
    GaussianScene s = st::toy_scene(10, 4, 1);
    const CameraView cam = st::ring_cameras(1, 4.f, 32)[0];

    RenderCache cache;
    render(s, cam, {}, &cache);
    Image grad_ones(cam.height, cam.width);
    const float scale = 1.f / static_cast<float>(grad_ones.data.size());
    for (auto& v : grad_ones.data) v = scale; // d(mean rgb)/d(pixel)
    MatX grad_dc, grad_rest;
    backward_to_sh(s, cache, grad_ones, grad_dc, grad_rest);

    std::mt19937 rng(9);
    std::uniform_int_distribution<int> gi(0, 9), ci(0, 2);
    const float h = 5e-3f;
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int g = gi(rng), c = ci(rng);
        const float orig = s.sh_dc(g, c);
        s.sh_dc(g, c) = orig + h;
        const float fp = mean_rgb(render(s, cam));
        s.sh_dc(g, c) = orig - h;
        const float fm = mean_rgb(render(s, cam));
        s.sh_dc(g, c) = orig;
        const float fd = (fp - fm) / (2 * h);
        const float an = grad_dc(g, c);
        if (std::abs(fd) < 1e-6f && std::abs(an) < 1e-6f) continue; // not visible
        ++checked;
        INFO("gaussian " << g << " channel " << c << ": fd=" << fd << " analytic=" << an);
        CHECK(std::abs(fd - an) / std::max(std::abs(fd), std::abs(an)) < 1e-2f);
    }
    CHECK(checked > 5);
}

TEST_CASE("depth is invariant under color changes") {
    GaussianScene s = st::toy_scene(40, 5);
    const CameraView cam = st::ring_cameras(1)[0];
    const RenderOutput before = render(s, cam);
    std::mt19937 rng(10);
    std::normal_distribution<float> d(0.f, 0.2f);
    for (int it = 0; it < 100; ++it) {
        for (Eigen::Index i = 0; i < s.sh_dc.rows(); ++i)
            for (int c = 0; c < 3; ++c) s.sh_dc(i, c) += 0.01f * d(rng);
    }
    const RenderOutput after = render(s, cam);
    CHECK(std::sqrt((before.depth - after.depth).square().mean()) <= 1e-5f);
    CHECK((before.alpha == after.alpha).all());
}

TEST_CASE("COLMAP text cameras load with correct pose") {
    const auto dir = std::filesystem::temp_directory_path() / "colmap_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream c(dir / "cameras.txt");
        c << "# comment line\n1 PINHOLE 64 48 50.0 52.0 32.0 24.0\n";
        std::ofstream i(dir / "images.txt");
        i << "# comment\n1 1 0 0 0 0.5 -0.25 2.0 1 frame0.png\n\n";
    }
    const auto views = load_colmap_cameras(dir.string());
    REQUIRE(views.size() == 1);
    CHECK(views[0].fx == Catch::Approx(50.f));
    CHECK(views[0].fy == Catch::Approx(52.f));
    CHECK(views[0].width == 64);
    CHECK(views[0].world_to_camera(0, 3) == Catch::Approx(0.5f));
    CHECK(views[0].world_to_camera(2, 3) == Catch::Approx(2.0f));
}

TEST_CASE("transforms.json cameras load and invert the c2w matrix") {
    const auto path = std::filesystem::temp_directory_path() / "transforms_test.json";
    {
        std::ofstream f(path);
        f << R"({"w": 32, "h": 32, "fl_x": 40.0, "fl_y": 40.0, "cx": 16.0, "cy": 16.0,
                 "frames": [{"transform_matrix":
                   [[1,0,0,0.5],[0,1,0,0],[0,0,1,-3.0],[0,0,0,1]]}]})";
    }
    const auto views = load_transforms_json(path.string());
    REQUIRE(views.size() == 1);
    // w2c is the inverse of the stored c2w
    CHECK(views[0].world_to_camera(0, 3) == Catch::Approx(-0.5f));
    CHECK(views[0].world_to_camera(2, 3) == Catch::Approx(3.0f));
    CHECK(views[0].center().z() == Catch::Approx(-3.0f));
}
