// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "splatstyle/attention/attention.hpp"
#include "splatstyle/core/autodiff.hpp"
#include "splatstyle/core/image.hpp"
#include "splatstyle/geometry/guidance.hpp"

namespace splatstyle {

/// One self-attention site of the denoiser.
struct AttentionSite {
    int layer_id = 0;
    int h = 0, w = 0; // token grid
    int dim = 0;      // full channel width
    int heads = 1;
};

/// Captured Q/K/V and attention output at one site, for one view.
struct LayerState {
    ad::Var q, k, v;
    ad::Var attn_out; // pre-output-projection, heads concatenated
    int h = 0, w = 0;
};

/// All captured sites from one forward pass.
struct AttentionState {
    std::vector<LayerState> layers;
    int timestep = 0;
};

/// Per-layer K/V (and self-attention output, for the direct-signal ablation)
/// extracted once from the style image.
struct StyleBank {
    struct Layer {
        ad::Mat k, v;
        ad::Mat attn_out;
        int h = 0, w = 0;
    };
    std::vector<Layer> layers;
    int timestep = 0;
};

enum class FeatureMode { plain, gga };

/// Latent encoder + denoiser with frozen weights. Forward passes capture
/// every self-attention site; gradients flow through captured tensors back to
/// the latent (and further to the input pixels through encode()).
class FeatureBackbone {
public:
    virtual ~FeatureBackbone() = default;

    virtual int native_resolution() const = 0;
    virtual int latent_reduction() const = 0;
    virtual int latent_channels() const = 0;
    virtual int max_timestep() const = 0;
    virtual const std::vector<AttentionSite>& sites() const = 0;

    /// image pixels as a (H*W) x 3 token matrix -> latent tokens.
    virtual ad::Var encode(const ad::Var& pixels, int h, int w) const = 0;

    /// One forward pass per view, lockstep across the batch. In gga mode the
    /// guidance must be at the backbone's native resolution.
    virtual std::vector<AttentionState> extract_features(
        const std::vector<ad::Var>& latents, int t, FeatureMode mode,
        const GeometryGuidance* guidance = nullptr) const = 0;

    virtual uint64_t weight_checksum() const = 0;

    StyleBank build_style_bank(const Image& style_image, int t) const {
        Image resized = style_image;
        if (style_image.height != native_resolution() || style_image.width != native_resolution())
            resized = resize_bilinear(style_image, native_resolution(), native_resolution());
        const ad::Var pixels = ad::Var::constant(image_to_tokens(resized));
        const ad::Var z = encode(pixels, resized.height, resized.width);
        const auto states = extract_features({z}, t, FeatureMode::plain);
        StyleBank bank;
        bank.timestep = t;
        for (const auto& layer : states[0].layers)
            bank.layers.push_back({layer.k.value(), layer.v.value(), layer.attn_out.value(),
                                   layer.h, layer.w});
        return bank;
    }

    static ad::Mat image_to_tokens(const Image& img) {
        ad::Mat m(static_cast<Eigen::Index>(img.height) * img.width, 3);
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                for (int c = 0; c < 3; ++c)
                    m(static_cast<Eigen::Index>(y) * img.width + x, c) = img.at(y, x, c);
        return m;
    }

    // forward-pass audit counters
    mutable int plain_forwards = 0;
    mutable int gga_forwards = 0;
};

struct TimestepStrategy {
    enum class Kind { fixed, random, decreasing };
    Kind kind = Kind::fixed;
    int fixed_t = 1;
};

/// fixed -> t; random -> uniform in [1, T]; decreasing -> round(T * (1 - s/S))
/// clamped to >= 1, for step s of S.
inline int timestep_schedule(const TimestepStrategy& strategy, int step, int total_steps,
                             int max_t, std::mt19937& rng) {
    switch (strategy.kind) {
    case TimestepStrategy::Kind::fixed:
        return strategy.fixed_t;
    case TimestepStrategy::Kind::random:
        return std::uniform_int_distribution<int>(1, max_t)(rng);
    case TimestepStrategy::Kind::decreasing: {
        const double frac = 1.0 - static_cast<double>(step) / total_steps;
        return std::max(1, static_cast<int>(std::lround(max_t * frac)));
    }
    }
    return strategy.fixed_t;
}

} // namespace splatstyle
