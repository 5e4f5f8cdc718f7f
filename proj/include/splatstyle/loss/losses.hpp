// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "splatstyle/core/autodiff.hpp"
#include "splatstyle/core/image.hpp"

namespace splatstyle {

/// Style, content, and masked total loss values with per-layer breakdown.
struct LossReport {
    std::vector<float> style_per_layer;
    std::vector<float> content_per_layer;
    float style = 0.f;
    float content = 0.f;
    float total = 0.f;
    float lambda = 0.f;
    float mask_fill = 0.f; // fraction of mask tokens equal to 1, over all views/layers
};

namespace loss_detail {

/// Per-token mean-over-channels squared difference, as a tokens x 1 var.
inline ad::Var token_sq_error(const ad::Var& a, const ad::Var& target) {
    if (a.value().rows() != target.value().rows() ||
        a.value().cols() != target.value().cols())
        throw FormatError("loss: feature shape mismatch");
    const ad::Var d = ad::sub(a, target);
    const ad::Var sq = ad::cmul(d, d);
    const ad::Mat ones =
        ad::Mat::Constant(a.value().cols(), 1, 1.f / static_cast<float>(a.value().cols()));
    return ad::matmul(sq, ad::Var::constant(ones));
}

} // namespace loss_detail

/// Unmasked style term for one layer: mean over views, tokens, channels.
inline ad::Var style_loss(const std::vector<ad::Var>& rendered,
                          const std::vector<ad::Var>& style_targets) {
    ad::Var acc;
    Eigen::Index tokens = 0;
    for (size_t b = 0; b < rendered.size(); ++b) {
        const ad::Var s = ad::sum(loss_detail::token_sq_error(rendered[b], style_targets[b]));
        acc = acc.valid() ? ad::add(acc, s) : s;
        tokens += rendered[b].value().rows();
    }
    return ad::scale(acc, 1.f / static_cast<float>(tokens));
}

/// Content term; identical contract with the content-branch targets.
inline ad::Var content_loss(const std::vector<ad::Var>& rendered,
                            const std::vector<ad::Var>& content_targets) {
    return style_loss(rendered, content_targets);
}

/// Inputs for one attention site across the batch.
struct LayerLossInput {
    std::vector<ad::Var> rendered;       // A-hat of the rendered branch (carries grads)
    std::vector<ad::Var> style_target;   // A-hat^s, constant
    std::vector<ad::Var> content_target; // A-hat^c, constant
    std::vector<ad::RowVec> mask;        // per-view token mask, 0/1, length = tokens
};

/// Masked total objective. Per layer, the per-token error
/// e(p) = mean_c(A - A^s)^2 + lambda * mean_c(A - A^c)^2 is reduced as
/// sum_{views,p} M(p) e(p) / max(sum M, 1); layers are summed.
inline std::pair<ad::Var, LossReport> total_loss(const std::vector<LayerLossInput>& layers,
                                                 float lambda) {
    ad::Var total;
    LossReport report;
    report.lambda = lambda;
    float mask_sum_all = 0.f, mask_count_all = 0.f;

    for (const auto& layer : layers) {
        ad::Var style_num, content_num;
        float mask_sum = 0.f;
        for (size_t b = 0; b < layer.rendered.size(); ++b) {
            const ad::RowVec& m = layer.mask[b];
            if (m.size() != layer.rendered[b].value().rows())
                throw FormatError("total_loss: mask length does not match token count");
            mask_sum += m.sum();
            mask_count_all += static_cast<float>(m.size());
            const ad::Var mask_row = ad::Var::constant(m);
            const ad::Var s = ad::matmul(
                mask_row, loss_detail::token_sq_error(layer.rendered[b], layer.style_target[b]));
            const ad::Var c = ad::matmul(
                mask_row,
                loss_detail::token_sq_error(layer.rendered[b], layer.content_target[b]));
            style_num = style_num.valid() ? ad::add(style_num, s) : s;
            content_num = content_num.valid() ? ad::add(content_num, c) : c;
        }
        mask_sum_all += mask_sum;
        const float denom = 1.f / std::max(mask_sum, 1.f);
        const ad::Var layer_style = ad::scale(style_num, denom);
        const ad::Var layer_content = ad::scale(content_num, denom);
        report.style_per_layer.push_back(layer_style.value()(0, 0));
        report.content_per_layer.push_back(layer_content.value()(0, 0));
        const ad::Var layer_total = ad::add(layer_style, ad::scale(layer_content, lambda));
        total = total.valid() ? ad::add(total, layer_total) : layer_total;
    }
    if (mask_sum_all == 0.f)
        throw NumericalError(
            "geometry mask is empty for every view; sample a larger or more varied "
            "camera batch");

    for (float v : report.style_per_layer) report.style += v;
    for (float v : report.content_per_layer) report.content += v;
    report.total = total.value()(0, 0);
    report.mask_fill = mask_count_all > 0 ? mask_sum_all / mask_count_all : 0.f;
    if (!std::isfinite(report.total)) {
        std::string diag = "non-finite total loss; per-layer (style, content):";
        for (size_t l = 0; l < report.style_per_layer.size(); ++l)
            diag += " [" + std::to_string(report.style_per_layer[l]) + ", " +
                    std::to_string(report.content_per_layer[l]) + "]";
        diag += "; mask fill " + std::to_string(report.mask_fill);
        throw NumericalError(diag);
    }
    return {total, report};
}

/// Flattens a mask map (already at the layer's token resolution) into a
/// per-token row vector, row-major.
inline ad::RowVec mask_to_tokens(const ScalarMap& mask) {
    ad::RowVec out(mask.size());
    Eigen::Index i = 0;
    for (Eigen::Index y = 0; y < mask.rows(); ++y)
        for (Eigen::Index x = 0; x < mask.cols(); ++x) out(i++) = mask(y, x);
    return out;
}

} // namespace splatstyle
