// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "splatstyle/core/autodiff.hpp"
#include "splatstyle/geometry/guidance.hpp"

namespace splatstyle {

// Attention math shared by the backbone, the style signal, and the
// geometry-guided variant. Q/K/V are token-major (tokens x d) at full channel
// width; head splitting happens inside.

constexpr float kMaskedLogit = -std::numeric_limits<float>::infinity();

/// Softmax(Q Kᵀ / sqrt(d_head) + bias) V, per head, heads concatenated.
/// `bias` is one value per key column (0 = attendable, -inf = masked),
/// shared across queries and heads.
inline ad::Var attention(const ad::Var& q, const ad::Var& k, const ad::Var& v, int heads = 1,
                         const ad::RowVec& bias = ad::RowVec()) {
    const Eigen::Index d = q.value().cols();
    if (k.value().cols() != d || v.value().cols() != d)
        throw FormatError("attention: Q/K/V channel widths differ");
    if (d % heads != 0) throw FormatError("attention: width not divisible by head count");
    const Eigen::Index dh = d / heads;
    const float inv_sqrt_dk = 1.f / std::sqrt(static_cast<float>(dh));
    std::vector<ad::Var> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int hd = 0; hd < heads; ++hd) {
        const ad::Var qh = heads == 1 ? q : ad::slice_cols(q, hd * dh, dh);
        const ad::Var kh = heads == 1 ? k : ad::slice_cols(k, hd * dh, dh);
        const ad::Var vh = heads == 1 ? v : ad::slice_cols(v, hd * dh, dh);
        const ad::Var logits = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dk);
        const ad::Var weights = ad::softmax_rows(logits, bias);
        outs.push_back(ad::matmul(weights, vh));
    }
    return heads == 1 ? outs[0] : ad::hconcat(outs);
}

/// Per-token centering over channels followed by L2 normalization.
inline ad::Var center_normalize(const ad::Var& a) { return ad::center_normalize_rows(a); }

/// Keys/values of one view augmented with warped tokens from the other batch
/// views, plus the per-key visibility bias.
struct AugmentedKV {
    ad::Var k, v;
    ad::RowVec bias;
    Eigen::Index self_tokens = 0;
};

/// Builds K'_b / V'_b for view `ref`: self tokens first, then bilinearly
/// warped tokens from every other view in ascending view order. Warped token
/// p is masked out when v_{ref<-j}(p) = 0.
inline AugmentedKV augment_kv(const std::vector<ad::Var>& keys,
                              const std::vector<ad::Var>& values, size_t ref,
                              const GeometryGuidance& guidance, int layer_h, int layer_w) {
    const size_t n = keys.size();
    const Eigen::Index tokens = keys[ref].value().rows();
    if (tokens != static_cast<Eigen::Index>(layer_h) * layer_w)
        throw FormatError("augment_kv: token count does not match layer resolution");

    std::vector<ad::Var> k_parts{keys[ref]};
    std::vector<ad::Var> v_parts{values[ref]};
    std::vector<float> bias{};
    bias.assign(static_cast<size_t>(tokens), 0.f); // self tokens always attendable

    for (size_t j = 0; j < n; ++j) {
        if (j == ref) continue;
        const SamplingGrid grid =
            resample_grid(guidance.grids[ref][j], layer_h, layer_w);
        const ScalarMap vis =
            resample_mask_nearest(guidance.visibility[ref][j], layer_h, layer_w);
        const auto warp = build_warp_row_map(grid, layer_h, layer_w);
        k_parts.push_back(ad::apply_row_map(keys[j], warp));
        v_parts.push_back(ad::apply_row_map(values[j], warp));
        for (Eigen::Index p = 0; p < tokens; ++p)
            bias.push_back(vis(p / layer_w, p % layer_w) > 0.5f ? 0.f : kMaskedLogit);
    }

    AugmentedKV out;
    out.self_tokens = tokens;
    out.k = k_parts.size() == 1 ? k_parts[0] : ad::vconcat(k_parts);
    out.v = v_parts.size() == 1 ? v_parts[0] : ad::vconcat(v_parts);
    out.bias = Eigen::Map<ad::RowVec>(bias.data(), static_cast<Eigen::Index>(bias.size()));
    return out;
}

/// Geometry-guided attention for one view.
inline ad::Var gga_attention(const ad::Var& q, const AugmentedKV& kv, int heads) {
    return attention(q, kv.k, kv.v, heads, kv.bias);
}

/// Style signal: the view's queries against the style image's cached K/V.
/// The result is a constant optimization target, so inputs are detached.
inline ad::Var style_signal(const ad::Var& q, const ad::Mat& style_k, const ad::Mat& style_v,
                            int heads) {
    if (style_k.cols() != q.value().cols())
        throw FormatError("style_signal: bank layer width does not match queries");
    const ad::Var a = attention(q.detach(), ad::Var::constant(style_k),
                                ad::Var::constant(style_v), heads);
    return center_normalize(a);
}

} // namespace splatstyle
