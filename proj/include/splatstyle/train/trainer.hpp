// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "splatstyle/backbone/backbone.hpp"
#include "splatstyle/loss/losses.hpp"
#include "splatstyle/render/renderer.hpp"
#include "splatstyle/scene/gaussian_scene.hpp"
#include "splatstyle/scene/ply_io.hpp"

namespace splatstyle {

struct AblationFlags {
    bool gga = true;
    bool geometry_mask = true;
    bool normalize = true;
    bool direct_style_signal = false; // style image's own attention output as target
};

enum class StyleQuerySource { content, rendered };

struct TrainingConfig {
    int iterations = 200;
    int views_per_batch = 4;
    TimestepStrategy timestep{};
    float lambda = 0.1f;
    float lr_sh_dc = 2.5e-3f;
    float lr_sh_rest = 1.25e-4f;
    uint32_t seed = 0;
    AblationFlags ablation{};
    StyleQuerySource style_query_source = StyleQuerySource::content;
    int checkpoint_every = 0; // 0 disables periodic checkpoints
    RenderOptions render{};

    void validate() const {
        if (views_per_batch < 1) throw FormatError("views_per_batch must be >= 1");
        if (iterations < 0) throw FormatError("iterations must be >= 0");
        if (lambda < 0.f) throw FormatError("lambda must be >= 0");
    }
};

class AdamOptimizer {
public:
    void step(MatX& dc, MatX& rest, const MatX& grad_dc, const MatX& grad_rest, float lr_dc,
              float lr_rest) {
        if (m_dc_.rows() != dc.rows()) {
            m_dc_ = MatX::Zero(dc.rows(), dc.cols());
            v_dc_ = MatX::Zero(dc.rows(), dc.cols());
            m_rest_ = MatX::Zero(rest.rows(), rest.cols());
            v_rest_ = MatX::Zero(rest.rows(), rest.cols());
        }
        ++t_;
        update(dc, grad_dc, m_dc_, v_dc_, lr_dc);
        update(rest, grad_rest, m_rest_, v_rest_, lr_rest);
    }

    void save(std::ostream& out) const {
        const int64_t t = t_;
        out.write(reinterpret_cast<const char*>(&t), sizeof(t));
        for (const MatX* m : {&m_dc_, &v_dc_, &m_rest_, &v_rest_}) {
            const int64_t rows = m->rows(), cols = m->cols();
            out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
            out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
            out.write(reinterpret_cast<const char*>(m->data()),
                      static_cast<std::streamsize>(m->size() * sizeof(float)));
        }
    }

    void load(std::istream& in) {
        in.read(reinterpret_cast<char*>(&t_), sizeof(t_));
        for (MatX* m : {&m_dc_, &v_dc_, &m_rest_, &v_rest_}) {
            int64_t rows = 0, cols = 0;
            in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
            in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
            m->resize(rows, cols);
            in.read(reinterpret_cast<char*>(m->data()),
                    static_cast<std::streamsize>(m->size() * sizeof(float)));
        }
        if (!in) throw FormatError("truncated optimizer state");
    }

private:
    void update(MatX& p, const MatX& g, MatX& m, MatX& v, float lr) {
        m = beta1_ * m + (1.f - beta1_) * g;
        v = (beta2_ * v.array() + (1.f - beta2_) * g.array().square()).matrix();
        const float bc1 = 1.f - std::pow(beta1_, static_cast<float>(t_));
        const float bc2 = 1.f - std::pow(beta2_, static_cast<float>(t_));
        p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps_);
    }

    float beta1_ = 0.9f, beta2_ = 0.999f, eps_ = 1e-8f;
    int64_t t_ = 0;
    MatX m_dc_, v_dc_, m_rest_, v_rest_;
};

/// N cameras from the pool: without replacement when the pool is large
/// enough, with replacement otherwise. Order defines the "previous view"
/// relation of the geometry mask.
inline std::vector<CameraView> sample_cameras(const std::vector<CameraView>& pool, int n,
                                              std::mt19937& rng) {
    if (pool.empty()) throw FormatError("camera pool is empty");
    std::vector<CameraView> out;
    out.reserve(static_cast<size_t>(n));
    if (pool.size() >= static_cast<size_t>(n)) {
        std::vector<size_t> idx(pool.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        for (int i = 0; i < n; ++i) out.push_back(pool[idx[static_cast<size_t>(i)]]);
    } else {
        std::uniform_int_distribution<size_t> dist(0, pool.size() - 1);
        for (int i = 0; i < n; ++i) out.push_back(pool[dist(rng)]);
    }
    return out;
}

/// The stylization loop: renders a camera batch, builds geometry guidance,
/// extracts features from content / style / rendered branches, and steps the
/// color parameters on the masked attention-space objective.
class Trainer {
public:
    Trainer(GaussianScene& scene, const FeatureBackbone& backbone, const Image& style_image,
            TrainingConfig config)
        : scene_(scene), original_(scene), backbone_(backbone), cfg_(std::move(config)),
          rng_(cfg_.seed) {
        cfg_.validate();
        style_image_ = style_image;
    }

    const TrainingConfig& config() const { return cfg_; }
    const GaussianScene& original_scene() const { return original_; }
    int step_count() const { return step_; }
    std::mt19937& rng() { return rng_; }

    LossReport training_step(const std::vector<CameraView>& cameras) {
        const size_t n = cameras.size();
        const int res = backbone_.native_resolution();
        for (const auto& cam : cameras)
            if (cam.width != res || cam.height != res)
                throw FormatError("camera resolution does not match backbone");
        ++step_;
        const int t = timestep_schedule(cfg_.timestep, step_, std::max(cfg_.iterations, 1),
                                        backbone_.max_timestep(), rng_);
        const StyleBank& bank = bank_for(t);

        // rendered branch images, with caches for the color backward pass
        std::vector<RenderCache> caches(n);
        std::vector<RenderOutput> renders(n);
        std::vector<ScalarMap> depths(n), alphas(n);
        for (size_t i = 0; i < n; ++i) {
            renders[i] = render(scene_, cameras[i], cfg_.render, &caches[i]);
            depths[i] = renders[i].depth;
            alphas[i] = renders[i].alpha;
        }

        const bool need_guidance =
            (cfg_.ablation.gga && n > 1) || cfg_.ablation.geometry_mask;
        GeometryGuidance guidance;
        if (need_guidance) guidance = compute_guidance(cameras, depths, alphas);

        // content branch: plain forward on renders of the frozen original scene
        std::vector<ad::Var> content_latents(n);
        for (size_t i = 0; i < n; ++i) {
            const RenderOutput content = render(original_, cameras[i], cfg_.render);
            content_latents[i] = backbone_.encode(
                ad::Var::constant(FeatureBackbone::image_to_tokens(content.rgb)), res, res);
        }
        const auto content_states =
            backbone_.extract_features(content_latents, t, FeatureMode::plain);

        // rendered branch: differentiable leaves through encoder and denoiser
        std::vector<ad::Var> pixel_leaves(n), latents(n);
        for (size_t i = 0; i < n; ++i) {
            pixel_leaves[i] = ad::Var::leaf(FeatureBackbone::image_to_tokens(renders[i].rgb));
            latents[i] = backbone_.encode(pixel_leaves[i], res, res);
        }
        const auto rendered_states = backbone_.extract_features(
            latents, t, cfg_.ablation.gga ? FeatureMode::gga : FeatureMode::plain,
            need_guidance ? &guidance : nullptr);

        // per-site loss inputs
        const auto& sites = backbone_.sites();
        std::vector<LayerLossInput> layer_inputs(sites.size());
        for (size_t l = 0; l < sites.size(); ++l) {
            auto& li = layer_inputs[l];
            const int lh = rendered_states[0].layers[l].h;
            const int lw = rendered_states[0].layers[l].w;
            for (size_t b = 0; b < n; ++b) {
                const auto& rl = rendered_states[b].layers[l];
                const auto& cl = content_states[b].layers[l];
                li.rendered.push_back(normalize(rl.attn_out));

                ad::Var style_target;
                if (cfg_.ablation.direct_style_signal) {
                    style_target = normalize(ad::Var::constant(bank.layers[l].attn_out));
                } else {
                    const ad::Var q = cfg_.style_query_source == StyleQuerySource::content
                                          ? cl.q
                                          : rl.q.detach();
                    const ad::Var a = attention(q.detach(),
                                                ad::Var::constant(bank.layers[l].k),
                                                ad::Var::constant(bank.layers[l].v),
                                                sites[l].heads);
                    style_target = normalize(a);
                }
                li.style_target.push_back(style_target.detach());
                li.content_target.push_back(normalize(cl.attn_out).detach());

                ScalarMap mask;
                if (cfg_.ablation.geometry_mask)
                    mask = resample_mask_nearest(guidance.mask.masks[b], lh, lw);
                else
                    mask = ScalarMap::Ones(lh, lw);
                li.mask.push_back(mask_to_tokens(mask));
            }
        }

        auto [loss, report] = total_loss(layer_inputs, cfg_.lambda);
        last_timestep_ = t;
        ad::backward(loss);

        // chain pixel gradients through the renderer into the SH coefficients
        MatX grad_dc = MatX::Zero(scene_.count(), 3);
        MatX grad_rest = MatX::Zero(scene_.count(), scene_.sh_rest.cols());
        for (size_t i = 0; i < n; ++i) {
            Image grad_img(res, res);
            const ad::Mat& g = pixel_leaves[i].grad();
            if (g.size() > 0)
                for (int y = 0; y < res; ++y)
                    for (int x = 0; x < res; ++x)
                        for (int c = 0; c < 3; ++c)
                            grad_img.at(y, x, c) = g(static_cast<Eigen::Index>(y) * res + x, c);
            backward_to_sh(scene_, caches[i], grad_img, grad_dc, grad_rest);
        }
        adam_.step(scene_.sh_dc, scene_.sh_rest, grad_dc, grad_rest, cfg_.lr_sh_dc,
                   cfg_.lr_sh_rest);
        return report;
    }

    /// Runs the configured number of iterations; writes periodic checkpoints
    /// and a per-step loss log when an output directory is given.
    void run(const std::vector<CameraView>& camera_pool, const std::string& output_dir = "",
             const std::function<void(int, const LossReport&)>& on_step = {}) {
        std::ofstream log;
        if (!output_dir.empty()) {
            std::filesystem::create_directories(output_dir);
            log.open(output_dir + "/loss_log.csv", step_ == 0 ? std::ios::trunc : std::ios::app);
            if (step_ == 0) log << "step,timestep,total,style,content,mask_fill\n";
        }
        while (step_ < cfg_.iterations) {
            const auto cameras = sample_cameras(camera_pool, cfg_.views_per_batch, rng_);
            const LossReport report = training_step(cameras);
            if (log)
                log << step_ << ',' << last_timestep_ << ',' << report.total << ','
                    << report.style << ',' << report.content << ',' << report.mask_fill << '\n';
            if (on_step) on_step(step_, report);
            if (!output_dir.empty() && cfg_.checkpoint_every > 0 &&
                step_ % cfg_.checkpoint_every == 0 && step_ < cfg_.iterations)
                save_checkpoint(output_dir);
        }
        if (!output_dir.empty()) save_scene(scene_, output_dir + "/stylized.ply");
    }

    void save_checkpoint(const std::string& dir) const {
        std::filesystem::create_directories(dir);
        save_scene(scene_, dir + "/ckpt_" + std::to_string(step_) + ".ply");
        std::ofstream out(dir + "/state_" + std::to_string(step_), std::ios::binary);
        if (!out) throw FormatError("cannot write checkpoint state in " + dir);
        const int32_t step = step_;
        out.write(reinterpret_cast<const char*>(&step), sizeof(step));
        adam_.save(out);
        std::ostringstream rng_text;
        rng_text << rng_;
        const std::string s = rng_text.str();
        const uint64_t len = s.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(s.data(), static_cast<std::streamsize>(len));
    }

    /// Restores optimizer, RNG, and step counter; the scene itself must be
    /// loaded from the matching ckpt_{step}.ply by the caller.
    void load_checkpoint_state(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw FormatError("cannot open checkpoint state: " + path);
        int32_t step = 0;
        in.read(reinterpret_cast<char*>(&step), sizeof(step));
        adam_.load(in);
        uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string s(len, '\0');
        in.read(s.data(), static_cast<std::streamsize>(len));
        if (!in) throw FormatError("truncated checkpoint state: " + path);
        std::istringstream rng_text(s);
        rng_text >> rng_;
        step_ = step;
    }

private:
    ad::Var normalize(const ad::Var& a) const {
        return cfg_.ablation.normalize ? center_normalize(a) : a;
    }

    const StyleBank& bank_for(int t) {
        auto it = banks_.find(t);
        if (it == banks_.end())
            it = banks_.emplace(t, backbone_.build_style_bank(style_image_, t)).first;
        return it->second;
    }

    GaussianScene& scene_;
    GaussianScene original_; // frozen copy for content renders
    const FeatureBackbone& backbone_;
    TrainingConfig cfg_;
    Image style_image_;
    std::map<int, StyleBank> banks_;
    std::mt19937 rng_;
    AdamOptimizer adam_;
    int step_ = 0;
    int last_timestep_ = 0;
};

/// RMSE between two depth maps; used by the frozen-geometry checks.
inline float depth_rmse(const ScalarMap& a, const ScalarMap& b) {
    return std::sqrt((a - b).square().mean());
}

} // namespace splatstyle
