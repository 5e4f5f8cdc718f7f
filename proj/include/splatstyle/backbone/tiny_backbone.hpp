// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <random>

#include "splatstyle/backbone/backbone.hpp"

namespace splatstyle {

// Deterministic CPU-sized stand-in for the production latent-diffusion
// backbone. Same contract: frozen weights, latent encoder, two self-attention
// sites at different token resolutions, timestep conditioning, full gradient
// flow from captured features back to the input pixels.

struct TinyBackboneConfig {
    uint32_t seed = 17;
    int resolution = 32; // native image size
    int max_timestep = 50;
};

class TinyBackbone final : public FeatureBackbone {
public:
    explicit TinyBackbone(const TinyBackboneConfig& cfg = {}) : cfg_(cfg) {
        std::mt19937 rng(cfg.seed);
        auto randn = [&rng](Eigen::Index r, Eigen::Index c, float sd) {
            std::normal_distribution<float> dist(0.f, sd);
            ad::Mat m(r, c);
            for (Eigen::Index i = 0; i < r; ++i)
                for (Eigen::Index j = 0; j < c; ++j) m(i, j) = dist(rng);
            return m;
        };

        encoder_w_ = randn(12, kLatentDim, 0.5f);
        encoder_b_ = randn(1, kLatentDim, 0.2f);
        in_proj_w_ = randn(kLatentDim, kDim, 0.4f);
        in_proj_b_ = randn(1, kDim, 0.2f);
        t_embed_ = randn(cfg.max_timestep, kDim, 0.2f);
        for (auto& blk : blocks_) {
            blk.wq = randn(kDim, kDim, 0.35f);
            blk.wk = randn(kDim, kDim, 0.35f);
            blk.wv = randn(kDim, kDim, 0.35f);
            blk.wo = randn(kDim, kDim, 0.25f);
            blk.mlp1 = randn(kDim, 2 * kDim, 0.3f);
            blk.mlp2 = randn(2 * kDim, kDim, 0.3f);
        }

        const int lh = cfg.resolution / kReduction;
        sites_ = {{0, lh, lh, kDim, kHeads}, {1, lh / 2, lh / 2, kDim, kHeads}};
        build_encoder_filters();
        build_pool_map();
    }

    int native_resolution() const override { return cfg_.resolution; }
    int latent_reduction() const override { return kReduction; }
    int latent_channels() const override { return kLatentDim; }
    int max_timestep() const override { return cfg_.max_timestep; }
    const std::vector<AttentionSite>& sites() const override { return sites_; }

    ad::Var encode(const ad::Var& pixels, int h, int w) const override {
        if (h != cfg_.resolution || w != cfg_.resolution)
            throw FormatError("encode: expected " + std::to_string(cfg_.resolution) + "x" +
                              std::to_string(cfg_.resolution) + " input, got " +
                              std::to_string(h) + "x" + std::to_string(w));
        if (pixels.value().rows() != static_cast<Eigen::Index>(h) * w ||
            pixels.value().cols() != 3)
            throw FormatError("encode: pixel matrix shape mismatch");
        // spatial filter bank over 8x8 patches, then a pointwise projection
        std::vector<ad::Var> feats;
        for (const auto& f : encoder_filters_) feats.push_back(ad::apply_row_map(pixels, f));
        const ad::Var stacked = ad::hconcat(feats); // tokens x 12
        return ad::tanh(ad::add_rowvec(ad::matmul(stacked, ad::Var::constant(encoder_w_)),
                                       ad::Var::constant(encoder_b_)));
    }

    std::vector<AttentionState> extract_features(
        const std::vector<ad::Var>& latents, int t, FeatureMode mode,
        const GeometryGuidance* guidance = nullptr) const override {
        if (t < 1 || t > cfg_.max_timestep)
            throw FormatError("timestep " + std::to_string(t) + " outside schedule [1, " +
                              std::to_string(cfg_.max_timestep) + "]");
        const size_t n = latents.size();
        const int lh = cfg_.resolution / kReduction;
        for (const auto& z : latents)
            if (z.value().rows() != static_cast<Eigen::Index>(lh) * lh ||
                z.value().cols() != kLatentDim)
                throw FormatError("extract_features: latent shape mismatch");
        const bool use_gga = (mode == FeatureMode::gga) && n > 1;
        if (mode == FeatureMode::gga && n > 1) {
            if (!guidance) throw FormatError("gga mode requires geometry guidance");
            if (guidance->height != cfg_.resolution || guidance->width != cfg_.resolution)
                throw FormatError("guidance resolution does not match backbone");
        }
        if (mode == FeatureMode::plain)
            ++plain_forwards;
        else
            ++gga_forwards;

        const ad::Var t_emb =
            ad::Var::constant(t_embed_.row(t - 1));
        std::vector<ad::Var> x(n);
        for (size_t i = 0; i < n; ++i)
            x[i] = ad::add_rowvec(
                ad::tanh(ad::add_rowvec(ad::matmul(latents[i], ad::Var::constant(in_proj_w_)),
                                        ad::Var::constant(in_proj_b_))),
                t_emb);

        std::vector<AttentionState> states(n);
        for (auto& s : states) s.timestep = t;

        int site_h = lh;
        for (size_t blk_i = 0; blk_i < blocks_.size(); ++blk_i) {
            const auto& blk = blocks_[blk_i];
            std::vector<ad::Var> q(n), k(n), v(n);
            for (size_t i = 0; i < n; ++i) {
                q[i] = ad::matmul(x[i], ad::Var::constant(blk.wq));
                k[i] = ad::matmul(x[i], ad::Var::constant(blk.wk));
                v[i] = ad::matmul(x[i], ad::Var::constant(blk.wv));
            }
            for (size_t i = 0; i < n; ++i) {
                ad::Var a;
                if (use_gga) {
                    const AugmentedKV kv = augment_kv(k, v, i, *guidance, site_h, site_h);
                    a = gga_attention(q[i], kv, kHeads);
                } else {
                    a = attention(q[i], k[i], v[i], kHeads);
                }
                states[i].layers.push_back({q[i], k[i], v[i], a, site_h, site_h});
                x[i] = ad::add(x[i], ad::matmul(a, ad::Var::constant(blk.wo)));
                x[i] = ad::add(x[i], ad::matmul(ad::tanh(ad::matmul(
                                                    x[i], ad::Var::constant(blk.mlp1))),
                                                ad::Var::constant(blk.mlp2)));
            }
            if (blk_i + 1 < blocks_.size()) {
                for (size_t i = 0; i < n; ++i) x[i] = ad::apply_row_map(x[i], pool_map_);
                site_h /= 2;
            }
        }
        return states;
    }

    uint64_t weight_checksum() const override {
        uint64_t h = 1469598103934665603ull; // FNV-1a
        auto mix = [&h](const ad::Mat& m) {
            const auto* bytes = reinterpret_cast<const uint8_t*>(m.data());
            for (size_t i = 0; i < m.size() * sizeof(float); ++i) {
                h ^= bytes[i];
                h *= 1099511628211ull;
            }
        };
        mix(encoder_w_);
        mix(encoder_b_);
        mix(in_proj_w_);
        mix(in_proj_b_);
        mix(t_embed_);
        for (const auto& blk : blocks_) {
            mix(blk.wq), mix(blk.wk), mix(blk.wv), mix(blk.wo), mix(blk.mlp1), mix(blk.mlp2);
        }
        return h;
    }

private:
    static constexpr int kReduction = 8;
    static constexpr int kLatentDim = 4;
    static constexpr int kDim = 16;
    static constexpr int kHeads = 2;

    struct Block {
        ad::Mat wq, wk, wv, wo, mlp1, mlp2;
    };

    void build_encoder_filters() {
        const int res = cfg_.resolution;
        const int lh = res / kReduction;
        const int p = kReduction;
        // four fixed spatial kernels per patch: mean, x-gradient, y-gradient,
        // center-surround
        for (int f = 0; f < 4; ++f) {
            auto map = std::make_shared<ad::RowMap>();
            map->rows.resize(static_cast<size_t>(lh) * lh);
            for (int ty = 0; ty < lh; ++ty)
                for (int tx = 0; tx < lh; ++tx) {
                    auto& entries = map->rows[static_cast<size_t>(ty) * lh + tx];
                    for (int dy = 0; dy < p; ++dy)
                        for (int dx = 0; dx < p; ++dx) {
                            const float u = (dx + 0.5f) / p - 0.5f; // [-0.5, 0.5]
                            const float v = (dy + 0.5f) / p - 0.5f;
                            float wgt = 0;
                            switch (f) {
                            case 0: wgt = 1.f / (p * p); break;
                            case 1: wgt = 2.f * u / (p * p); break;
                            case 2: wgt = 2.f * v / (p * p); break;
                            case 3: wgt = (u * u + v * v < 0.08f ? 3.f : -1.f) / (p * p); break;
                            }
                            const Eigen::Index src =
                                static_cast<Eigen::Index>(ty * p + dy) * res + (tx * p + dx);
                            entries.push_back({src, wgt});
                        }
                }
            encoder_filters_.push_back(std::move(map));
        }
    }

    void build_pool_map() {
        const int lh = cfg_.resolution / kReduction;
        const int oh = lh / 2;
        pool_map_ = std::make_shared<ad::RowMap>();
        pool_map_->rows.resize(static_cast<size_t>(oh) * oh);
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < oh; ++x) {
                auto& entries = pool_map_->rows[static_cast<size_t>(y) * oh + x];
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx)
                        entries.push_back(
                            {static_cast<Eigen::Index>(2 * y + dy) * lh + (2 * x + dx), 0.25f});
            }
    }

    TinyBackboneConfig cfg_;
    ad::Mat encoder_w_, encoder_b_, in_proj_w_, in_proj_b_, t_embed_;
    std::array<Block, 2> blocks_;
    std::vector<AttentionSite> sites_;
    std::vector<std::shared_ptr<ad::RowMap>> encoder_filters_;
    std::shared_ptr<ad::RowMap> pool_map_;
};

} // namespace splatstyle
