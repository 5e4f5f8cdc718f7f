// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "helpers.hpp"
#include "splatstyle/backbone/tiny_backbone.hpp"

using namespace splatstyle;
namespace a = splatstyle::ad;
namespace st = splatstyle::testing;

namespace {

a::Mat random_pixels(int res, uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.f, 1.f);
    a::Mat m(static_cast<Eigen::Index>(res) * res, 3);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (int c = 0; c < 3; ++c) m(i, c) = u(rng);
    return m;
}

SamplingGrid identity_grid(int res) {
    SamplingGrid g;
    g.gx.resize(res, res);
    g.gy.resize(res, res);
    g.src_width = g.src_height = res;
    for (int y = 0; y < res; ++y)
        for (int x = 0; x < res; ++x) {
            g.gx(y, x) = to_norm_coord(x + 0.5f, res);
            g.gy(y, x) = to_norm_coord(y + 0.5f, res);
        }
    return g;
}

GeometryGuidance uniform_guidance(int res, size_t n, float vis_value) {
    GeometryGuidance g;
    g.height = g.width = res;
    g.grids.assign(n, std::vector<SamplingGrid>(n));
    g.visibility.assign(n, std::vector<ScalarMap>(n));
    for (size_t b = 0; b < n; ++b)
        for (size_t j = 0; j < n; ++j) {
            if (j == b) continue;
            g.grids[b][j] = identity_grid(res);
            g.visibility[b][j] = ScalarMap::Constant(res, res, vis_value);
        }
    g.mask.masks.assign(n, ScalarMap::Ones(res, res));
    return g;
}

} // namespace

TEST_CASE("backbone geometry contract: resolution, reduction, sites") {
    const TinyBackbone bb;
    CHECK(bb.native_resolution() == 32);
    CHECK(bb.latent_reduction() == 8);
    CHECK(bb.latent_channels() == 4);
    REQUIRE(bb.sites().size() == 2);
    CHECK(bb.sites()[0].h == 4);
    CHECK(bb.sites()[1].h == 2);

    const a::Var z = bb.encode(a::Var::constant(random_pixels(32, 1)), 32, 32);
    CHECK(z.value().rows() == 16); // 4x4 latent tokens
    CHECK(z.value().cols() == 4);

    const auto states = bb.extract_features({z}, 1, FeatureMode::plain);
    REQUIRE(states.size() == 1);
    REQUIRE(states[0].layers.size() == 2);
    CHECK(states[0].layers[0].q.value().rows() == 16);
    CHECK(states[0].layers[0].q.value().cols() == 16);
    CHECK(states[0].layers[1].attn_out.value().rows() == 4); // after 2x pooling
    CHECK(states[0].layers[1].h == 2);
}

TEST_CASE("weights are seed-deterministic and frozen") {
    const TinyBackbone b1, b2;
    CHECK(b1.weight_checksum() == b2.weight_checksum());
    TinyBackboneConfig other;
    other.seed = 99;
    CHECK(TinyBackbone(other).weight_checksum() != b1.weight_checksum());

    // forward passes leave the weights untouched
    const uint64_t before = b1.weight_checksum();
    const a::Var z = b1.encode(a::Var::constant(random_pixels(32, 2)), 32, 32);
    b1.extract_features({z}, 5, FeatureMode::plain);
    CHECK(b1.weight_checksum() == before);

    // identical inputs give identical captured features
    const a::Var z2 = b2.encode(a::Var::constant(random_pixels(32, 2)), 32, 32);
    const auto s1 = b1.extract_features({z}, 5, FeatureMode::plain);
    const auto s2 = b2.extract_features({z2}, 5, FeatureMode::plain);
    for (size_t l = 0; l < 2; ++l)
        CHECK(s1[0].layers[l].attn_out.value() == s2[0].layers[l].attn_out.value());
}

TEST_CASE("gradient flows from captured features back to the pixels") {
    const TinyBackbone bb;
    const a::Mat px0 = random_pixels(32, 3);
    auto scalar = [&](const a::Var& pixels) {
        const a::Var z = bb.encode(pixels, 32, 32);
        const auto states = bb.extract_features({z}, 1, FeatureMode::plain);
        return a::mean(states[0].layers[1].attn_out);
    };
    const a::Var pixels = a::Var::leaf(px0);
    a::backward(scalar(pixels));
    const a::Mat analytic = pixels.grad();
    REQUIRE(analytic.rows() == px0.rows());
    CHECK(analytic.cwiseAbs().maxCoeff() > 0.f);

    std::mt19937 rng(4);
    std::uniform_int_distribution<int> ri(0, static_cast<int>(px0.rows()) - 1), ci(0, 2);
    const float h = 1e-2f;
    int checked = 0;
    for (int trial = 0; trial < 12; ++trial) {
        const int r = ri(rng), c = ci(rng);
        a::Mat xp = px0, xm = px0;
        xp(r, c) += h;
        xm(r, c) -= h;
        const float fd = (scalar(a::Var::constant(xp)).value()(0, 0) -
                          scalar(a::Var::constant(xm)).value()(0, 0)) /
                         (2 * h);
        const float an = analytic(r, c);
        if (std::abs(fd) < 1e-6f && std::abs(an) < 1e-6f) continue;
        ++checked;
        INFO("pixel (" << r << "," << c << "): fd=" << fd << " analytic=" << an);
        CHECK(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4f}) < 3e-2f);
    }
    CHECK(checked > 4);
}

TEST_CASE("gga mode with a single view is bit-identical to plain") {
    const TinyBackbone bb;
    const GeometryGuidance g = uniform_guidance(32, 1, 1.f);
    const a::Var z = bb.encode(a::Var::constant(random_pixels(32, 5)), 32, 32);
    const auto plain = bb.extract_features({z}, 3, FeatureMode::plain);
    const auto gga = bb.extract_features({z}, 3, FeatureMode::gga, &g);
    for (size_t l = 0; l < 2; ++l)
        CHECK(plain[0].layers[l].attn_out.value() == gga[0].layers[l].attn_out.value());
}

TEST_CASE("fully occluded cross-view tokens reduce gga to plain attention") {
    const TinyBackbone bb;
    const GeometryGuidance g = uniform_guidance(32, 2, 0.f);
    std::vector<a::Var> z{bb.encode(a::Var::constant(random_pixels(32, 6)), 32, 32),
                          bb.encode(a::Var::constant(random_pixels(32, 7)), 32, 32)};
    const auto plain = bb.extract_features(z, 2, FeatureMode::plain);
    const auto gga = bb.extract_features(z, 2, FeatureMode::gga, &g);
    for (size_t i = 0; i < 2; ++i)
        for (size_t l = 0; l < 2; ++l)
            CHECK((plain[i].layers[l].attn_out.value() - gga[i].layers[l].attn_out.value())
                      .cwiseAbs()
                      .maxCoeff() <= 1e-6f);
}

TEST_CASE("visible cross-view tokens change the attention output") {
    const TinyBackbone bb;
    const GeometryGuidance g = uniform_guidance(32, 2, 1.f);
    std::vector<a::Var> z{bb.encode(a::Var::constant(random_pixels(32, 8)), 32, 32),
                          bb.encode(a::Var::constant(random_pixels(32, 9)), 32, 32)};
    const auto plain = bb.extract_features(z, 2, FeatureMode::plain);
    const auto gga = bb.extract_features(z, 2, FeatureMode::gga, &g);
    CHECK((plain[0].layers[0].attn_out.value() - gga[0].layers[0].attn_out.value())
              .cwiseAbs()
              .maxCoeff() > 1e-4f);
}

TEST_CASE("style bank captures per-layer K/V at the right shapes") {
    const TinyBackbone bb;
    const StyleBank bank = bb.build_style_bank(st::gradient_style_image(48), 7); // resized down
    CHECK(bank.timestep == 7);
    REQUIRE(bank.layers.size() == 2);
    CHECK(bank.layers[0].k.rows() == 16);
    CHECK(bank.layers[0].k.cols() == 16);
    CHECK(bank.layers[1].v.rows() == 4);
    CHECK(bank.layers[0].attn_out.rows() == 16);
    CHECK(bank.layers[0].h == 4);
    CHECK(bank.layers[1].h == 2);
}

TEST_CASE("timestep schedules") {
    std::mt19937 rng(10);
    TimestepStrategy fixed;
    fixed.fixed_t = 9;
    CHECK(timestep_schedule(fixed, 123, 200, 50, rng) == 9);

    TimestepStrategy random;
    random.kind = TimestepStrategy::Kind::random;
    for (int i = 0; i < 200; ++i) {
        const int t = timestep_schedule(random, i, 200, 50, rng);
        CHECK(t >= 1);
        CHECK(t <= 50);
    }

    TimestepStrategy dec;
    dec.kind = TimestepStrategy::Kind::decreasing;
    CHECK(timestep_schedule(dec, 0, 200, 50, rng) == 50);
    CHECK(timestep_schedule(dec, 100, 200, 50, rng) == 25);
    CHECK(timestep_schedule(dec, 200, 200, 50, rng) == 1); // clamped to >= 1
}

TEST_CASE("contract violations are format errors") {
    const TinyBackbone bb;
    const a::Var z = bb.encode(a::Var::constant(random_pixels(32, 11)), 32, 32);
    CHECK_THROWS_AS(bb.extract_features({z}, 0, FeatureMode::plain), FormatError);
    CHECK_THROWS_AS(bb.extract_features({z}, 51, FeatureMode::plain), FormatError);
    CHECK_THROWS_AS(bb.encode(a::Var::constant(random_pixels(16, 12)), 16, 16), FormatError);
    CHECK_THROWS_AS(bb.extract_features({a::Var::constant(a::Mat::Zero(5, 4))}, 1,
                                        FeatureMode::plain),
                    FormatError);
    // gga with several views demands guidance at the native resolution
    std::vector<a::Var> zs{z, z};
    CHECK_THROWS_AS(bb.extract_features(zs, 1, FeatureMode::gga, nullptr), FormatError);
    const GeometryGuidance bad = uniform_guidance(16, 2, 1.f);
    CHECK_THROWS_AS(bb.extract_features(zs, 1, FeatureMode::gga, &bad), FormatError);
}

TEST_CASE("forward counters audit plain vs gga passes") {
    const TinyBackbone bb;
    const a::Var z = bb.encode(a::Var::constant(random_pixels(32, 13)), 32, 32);
    const GeometryGuidance g = uniform_guidance(32, 1, 1.f);
    CHECK(bb.plain_forwards == 0);
    bb.extract_features({z}, 1, FeatureMode::plain);
    bb.extract_features({z}, 1, FeatureMode::plain);
    bb.extract_features({z}, 1, FeatureMode::gga, &g);
    CHECK(bb.plain_forwards == 2);
    CHECK(bb.gga_forwards == 1);
}
