// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatstyle/core/image.hpp"
#include "splatstyle/geometry/guidance.hpp"
#include "splatstyle/render/camera.hpp"

namespace splatstyle {

// Evaluation harness. The embedding and feature extractors are pluggable;
// the desk-scale defaults are small deterministic stand-ins with the same
// interfaces as CLIP / VGG19-class models, so all score formulas, reductions,
// and report plumbing are exercised end to end.

class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual Eigen::VectorXf embed(const Image& img) const = 0;
    virtual std::string name() const = 0;
};

/// Downsampled RGB pushed through a fixed random projection.
class ToyEmbedder final : public ImageEmbedder {
public:
    explicit ToyEmbedder(uint32_t seed = 7, int dim = 64) : dim_(dim) {
        std::mt19937 rng(seed);
        std::normal_distribution<float> dist(0.f, 1.f);
        proj_.resize(dim, kPatch * kPatch * 3);
        for (int r = 0; r < proj_.rows(); ++r)
            for (int c = 0; c < proj_.cols(); ++c) proj_(r, c) = dist(rng);
    }
    Eigen::VectorXf embed(const Image& img) const override {
        const Image small = resize_bilinear(img, kPatch, kPatch);
        Eigen::VectorXf v(kPatch * kPatch * 3);
        for (size_t i = 0; i < small.data.size(); ++i) v(static_cast<Eigen::Index>(i)) = small.data[i];
        return proj_ * v;
    }
    std::string name() const override { return "toy-random-projection"; }

private:
    static constexpr int kPatch = 8;
    int dim_;
    Eigen::MatrixXf proj_;
};

/// Multi-scale feature maps for Gram-style and perceptual distances.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    /// Each entry: tokens x channels feature map at one scale.
    virtual std::vector<Eigen::MatrixXf> features(const Image& img) const = 0;
    virtual std::string name() const = 0;
};

/// Fixed random 3x3 conv stacks at three scales.
class TinyConvExtractor final : public FeatureExtractor {
public:
    explicit TinyConvExtractor(uint32_t seed = 11) {
        std::mt19937 rng(seed);
        std::normal_distribution<float> dist(0.f, 0.4f);
        for (auto& k : kernels_) {
            k.resize(kChannels, 3 * 3 * 3);
            for (int r = 0; r < k.rows(); ++r)
                for (int c = 0; c < k.cols(); ++c) k(r, c) = dist(rng);
        }
    }

    std::vector<Eigen::MatrixXf> features(const Image& img) const override {
        std::vector<Eigen::MatrixXf> out;
        int size = kBaseSize;
        for (const auto& kernel : kernels_) {
            const Image scaled = resize_bilinear(img, size, size);
            out.push_back(conv3x3(scaled, kernel));
            size /= 2;
        }
        return out;
    }
    std::string name() const override { return "tiny-conv"; }

private:
    static constexpr int kBaseSize = 32;
    static constexpr int kChannels = 8;

    static Eigen::MatrixXf conv3x3(const Image& img, const Eigen::MatrixXf& kernel) {
        const int h = img.height, w = img.width;
        Eigen::MatrixXf out(static_cast<Eigen::Index>(h) * w, kernel.rows());
        Eigen::VectorXf patch(27);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                int i = 0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int yy = std::clamp(y + dy, 0, h - 1);
                        const int xx = std::clamp(x + dx, 0, w - 1);
                        for (int c = 0; c < 3; ++c) patch(i++) = img.at(yy, xx, c);
                    }
                out.row(static_cast<Eigen::Index>(y) * w + x) =
                    (kernel * patch).array().tanh().transpose();
            }
        return out;
    }

    std::array<Eigen::MatrixXf, 3> kernels_;
};

struct MetricReport {
    float clip_s = 0, clip_c = 0;
    std::optional<float> clip_cons, clip_f;
    std::optional<float> s_vgg;
    std::optional<float> fid;
    std::optional<float> lpips_short, rmse_short, lpips_long, rmse_long;
    bool fid_ridge_applied = false;
    int frame_count = 0;
    std::vector<std::string> notes;
};

inline float cosine(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
    const float na = a.norm(), nb = b.norm();
    if (na == 0.f || nb == 0.f) return 0.f;
    return a.dot(b) / (na * nb);
}

struct ClipScores {
    float clip_s = 0, clip_c = 0;
    std::optional<float> clip_cons, clip_f;
};

/// CLIP-style scores over embedded frames. CLIP-CONS uses the harness
/// definition: mean over consecutive stylized pairs of
/// cos(f_i, f_{i+1}) - cos(c_i, c_{i+1}).
inline ClipScores clip_scores(const std::vector<Image>& stylized,
                              const std::vector<Image>& content, const Image& style,
                              const ImageEmbedder& embedder) {
    if (stylized.empty() || stylized.size() != content.size())
        throw FormatError("clip_scores: need equal, nonempty frame sequences");
    std::vector<Eigen::VectorXf> f, c;
    for (const auto& img : stylized) f.push_back(embedder.embed(img));
    for (const auto& img : content) c.push_back(embedder.embed(img));
    const Eigen::VectorXf s = embedder.embed(style);

    ClipScores out;
    for (size_t i = 0; i < f.size(); ++i) {
        out.clip_s += cosine(f[i], s);
        out.clip_c += cosine(f[i], c[i]);
    }
    out.clip_s /= static_cast<float>(f.size());
    out.clip_c /= static_cast<float>(f.size());

    if (f.size() >= 2) {
        float cons = 0, ff = 0, cc = 0;
        for (size_t i = 0; i + 1 < f.size(); ++i) {
            const float cf = cosine(f[i], f[i + 1]);
            const float ccv = cosine(c[i], c[i + 1]);
            cons += cf - ccv;
            ff += cf;
            cc += ccv;
        }
        const float pairs = static_cast<float>(f.size() - 1);
        out.clip_cons = cons / pairs;
        out.clip_f = (cc != 0.f) ? std::optional<float>(ff / cc) : std::nullopt;
    }
    return out;
}

/// Mean over frames of the layer-averaged squared-Frobenius Gram distance
/// between frame and style features, x100.
inline float vgg_style_distance(const std::vector<Image>& frames, const Image& style,
                                const FeatureExtractor& extractor) {
    if (frames.empty()) throw FormatError("vgg_style_distance: no frames");
    const auto style_feats = extractor.features(style);
    std::vector<Eigen::MatrixXf> style_grams;
    for (const auto& fm : style_feats)
        style_grams.push_back(fm.transpose() * fm / static_cast<float>(fm.rows()));

    float total = 0;
    for (const auto& frame : frames) {
        const auto feats = extractor.features(frame);
        float layer_sum = 0;
        for (size_t l = 0; l < feats.size(); ++l) {
            const Eigen::MatrixXf g =
                feats[l].transpose() * feats[l] / static_cast<float>(feats[l].rows());
            layer_sum += (g - style_grams[l]).squaredNorm();
        }
        total += layer_sum / static_cast<float>(feats.size());
    }
    return 100.f * total / static_cast<float>(frames.size());
}

struct ConsistencyResult {
    float lpips = 0, rmse = 0;
    int pairs = 0;
};

/// Warps frame i+delta into frame i with the depth-based grid and compares on
/// the visible region: masked RMSE plus a masked feature-space distance.
inline ConsistencyResult consistency(const std::vector<Image>& frames,
                                     const std::vector<ScalarMap>& depths,
                                     const std::vector<CameraView>& cameras, int delta,
                                     const FeatureExtractor& extractor) {
    if (frames.size() < static_cast<size_t>(delta) + 1)
        throw FormatError("consistency: camera path shorter than delta + 1");
    ConsistencyResult res;
    float rmse_sum = 0, lpips_sum = 0;
    for (size_t i = 0; i + delta < frames.size(); ++i) {
        const size_t j = i + static_cast<size_t>(delta);
        auto [grid, raw] = compute_grid(cameras[i], cameras[j], depths[i]);
        const ScalarMap vis = compute_visibility(grid, raw).v;
        const float vis_sum = vis.sum();
        if (vis_sum == 0.f) continue;

        const int h = frames[i].height, w = frames[i].width;
        const ad::Mat src = [&] {
            ad::Mat m(static_cast<Eigen::Index>(h) * w, 3);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c)
                        m(static_cast<Eigen::Index>(y) * w + x, c) = frames[j].at(y, x, c);
            return m;
        }();
        const ad::Mat warped = warp_features(src, grid, h, w);

        // masked RMSE
        double se = 0;
        Image warped_img(h, w), ref_img(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const float m = vis(y, x);
                for (int c = 0; c < 3; ++c) {
                    const float wv = warped(static_cast<Eigen::Index>(y) * w + x, c);
                    const float rv = frames[i].at(y, x, c);
                    se += m * (wv - rv) * (wv - rv);
                    warped_img.at(y, x, c) = m * wv;
                    ref_img.at(y, x, c) = m * rv;
                }
            }
        rmse_sum += static_cast<float>(std::sqrt(se / (3.0 * vis_sum)));

        // masked perceptual distance on background-zeroed images
        const auto fa = extractor.features(warped_img);
        const auto fb = extractor.features(ref_img);
        float d = 0;
        for (size_t l = 0; l < fa.size(); ++l)
            d += (fa[l] - fb[l]).squaredNorm() / static_cast<float>(fa[l].rows());
        lpips_sum += d / static_cast<float>(fa.size());
        ++res.pairs;
    }
    if (res.pairs > 0) {
        res.rmse = rmse_sum / static_cast<float>(res.pairs);
        res.lpips = lpips_sum / static_cast<float>(res.pairs);
    }
    return res;
}

namespace fid_detail {

/// Symmetric PSD square root via eigendecomposition.
inline Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
    const Eigen::VectorXd vals = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace fid_detail

struct FidResult {
    float value = 0;
    bool ridge_applied = false;
    bool small_sample = false;
};

/// Frechet distance between Gaussian fits of the two embedding sets.
inline FidResult fid(const std::vector<Eigen::VectorXf>& a,
                     const std::vector<Eigen::VectorXf>& b, double ridge = 1e-6) {
    if (a.size() < 2 || b.size() < 2) throw FormatError("fid: need >= 2 images per set");
    const auto fit = [](const std::vector<Eigen::VectorXf>& set) {
        const Eigen::Index d = set[0].size();
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
        for (const auto& v : set) mu += v.cast<double>();
        mu /= static_cast<double>(set.size());
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
        for (const auto& v : set) {
            const Eigen::VectorXd c = v.cast<double>() - mu;
            cov += c * c.transpose();
        }
        cov /= std::max<double>(1.0, static_cast<double>(set.size()) - 1.0);
        return std::make_pair(mu, cov);
    };
    auto [mu1, cov1] = fit(a);
    auto [mu2, cov2] = fit(b);

    FidResult res;
    res.small_sample = a.size() < 16 || b.size() < 16;
    const auto min_eig = [](const Eigen::MatrixXd& m) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
        return es.eigenvalues().minCoeff();
    };
    if (min_eig(cov1) < ridge || min_eig(cov2) < ridge) {
        cov1.diagonal().array() += ridge;
        cov2.diagonal().array() += ridge;
        res.ridge_applied = true;
    }
    const Eigen::MatrixXd s1 = fid_detail::sqrt_psd(cov1);
    const Eigen::MatrixXd cross = fid_detail::sqrt_psd(s1 * cov2 * s1);
    const double d2 = (mu1 - mu2).squaredNorm() +
                      (cov1 + cov2 - 2.0 * cross).trace();
    res.value = static_cast<float>(std::max(0.0, d2));
    return res;
}

inline nlohmann::json report_to_json(const MetricReport& r) {
    auto opt = [](const std::optional<float>& v) {
        return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    nlohmann::json j;
    j["CLIP-S"] = r.clip_s;
    j["CLIP-C"] = r.clip_c;
    j["CLIP-CONS"] = opt(r.clip_cons);
    j["CLIP-F"] = opt(r.clip_f);
    j["S_vgg"] = opt(r.s_vgg);
    j["FID"] = opt(r.fid);
    j["Short-range LPIPS"] = opt(r.lpips_short);
    j["Short-range RMSE"] = opt(r.rmse_short);
    j["Long-range LPIPS"] = opt(r.lpips_long);
    j["Long-range RMSE"] = opt(r.rmse_long);
    j["frame_count"] = r.frame_count;
    j["fid_ridge_applied"] = r.fid_ridge_applied;
    j["notes"] = r.notes;
    return j;
}

inline void write_report_csv(const MetricReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write report: " + path);
    auto cell = [](const std::optional<float>& v) {
        return v ? std::to_string(*v) : std::string("null");
    };
    out << "CLIP-S,CLIP-C,CLIP-CONS,CLIP-F,S_vgg,FID,"
           "Short-range LPIPS,Short-range RMSE,Long-range LPIPS,Long-range RMSE\n";
    out << r.clip_s << ',' << r.clip_c << ',' << cell(r.clip_cons) << ',' << cell(r.clip_f)
        << ',' << cell(r.s_vgg) << ',' << cell(r.fid) << ',' << cell(r.lpips_short) << ','
        << cell(r.rmse_short) << ',' << cell(r.lpips_long) << ',' << cell(r.rmse_long) << '\n';
}

} // namespace splatstyle
