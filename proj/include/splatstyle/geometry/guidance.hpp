// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <vector>

#include "splatstyle/core/autodiff.hpp"
#include "splatstyle/core/image.hpp"
#include "splatstyle/render/camera.hpp"

namespace splatstyle {

// Cross-view geometry guidance: per-pixel sampling grids via depth
// back-projection / re-projection, visibility masks, bilinear warps, and the
// first-observer (non-overlap) mask.
//
// Grid convention: normalized coordinates in [-1,1]^2 where (-1,-1) is the
// center of the top-left pixel of the source view and (+1,+1) the center of
// the bottom-right pixel. Pixel centers sit at (u+0.5, v+0.5).

/// Normalized sampling coordinates of view `src` for every pixel of view `ref`.
struct SamplingGrid {
    ScalarMap gx, gy; // H x W each
    int ref = 0, src = 0;
    int src_width = 0, src_height = 0;
};

struct VisibilityMask {
    ScalarMap v; // H x W, values exactly 0 or 1
};

/// One binary mask per view; view b keeps only pixels unseen by views j < b.
struct GeometryMask {
    std::vector<ScalarMap> masks;
};

inline float to_norm_coord(float pixel, int size) {
    return 2.f * (pixel - 0.5f) / static_cast<float>(size - 1) - 1.f;
}
inline float from_norm_coord(float g, int size) {
    return (g + 1.f) * 0.5f * static_cast<float>(size - 1); // index space, centers at 0..size-1
}

/// Back-project ref-view pixels with their depth, re-project into the source
/// camera. Pixels with depth <= 0 are marked out-of-domain with negative raw
/// depth so that visibility is 0 there.
inline std::pair<SamplingGrid, ScalarMap> compute_grid(const CameraView& cam_ref,
                                                       const CameraView& cam_src,
                                                       const ScalarMap& depth_ref) {
    if (cam_ref.fx == 0 || cam_ref.fy == 0 || cam_src.fx == 0 || cam_src.fy == 0)
        throw FormatError("non-invertible camera intrinsics");
    const int h = static_cast<int>(depth_ref.rows());
    const int w = static_cast<int>(depth_ref.cols());
    SamplingGrid grid;
    grid.gx = ScalarMap::Constant(h, w, 2.f);
    grid.gy = ScalarMap::Constant(h, w, 2.f);
    grid.src_width = cam_src.width;
    grid.src_height = cam_src.height;
    ScalarMap raw_depth = ScalarMap::Constant(h, w, -1.f);

    const Eigen::Matrix4f ref_to_src = cam_src.world_to_camera * cam_ref.camera_to_world();
    const Eigen::Matrix3f rot = ref_to_src.topLeftCorner<3, 3>();
    const Eigen::Vector3f trans = ref_to_src.topRightCorner<3, 1>();

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float d = depth_ref(y, x);
            if (d <= 0.f) continue;
            const Eigen::Vector3f ray((x + 0.5f - cam_ref.cx) / cam_ref.fx,
                                      (y + 0.5f - cam_ref.cy) / cam_ref.fy, 1.f);
            const Eigen::Vector3f p_src = rot * (d * ray) + trans;
            raw_depth(y, x) = p_src.z();
            if (std::abs(p_src.z()) < 1e-9f) continue;
            const float u = cam_src.fx * p_src.x() / p_src.z() + cam_src.cx;
            const float v = cam_src.fy * p_src.y() / p_src.z() + cam_src.cy;
            grid.gx(y, x) = to_norm_coord(u, cam_src.width);
            grid.gy(y, x) = to_norm_coord(v, cam_src.height);
        }
    }
    return {grid, raw_depth};
}

/// v = 1 iff the re-projected point lies in front of the source camera and
/// inside the [-1,1]^2 domain.
inline VisibilityMask compute_visibility(const SamplingGrid& grid, const ScalarMap& raw_depth) {
    const auto h = grid.gx.rows(), w = grid.gx.cols();
    VisibilityMask m;
    m.v = ScalarMap::Zero(h, w);
    for (Eigen::Index y = 0; y < h; ++y)
        for (Eigen::Index x = 0; x < w; ++x) {
            const bool in_front = raw_depth(y, x) > 0.f;
            const bool in_domain = grid.gx(y, x) >= -1.f && grid.gx(y, x) <= 1.f &&
                                   grid.gy(y, x) >= -1.f && grid.gy(y, x) <= 1.f;
            m.v(y, x) = (in_front && in_domain) ? 1.f : 0.f;
        }
    return m;
}

/// Bilinear sampling weights for warping a (src_h x src_w) token grid into the
/// layout of `grid`. Out-of-range neighbors contribute zero (zero padding).
inline std::shared_ptr<ad::RowMap> build_warp_row_map(const SamplingGrid& grid, int src_h,
                                                      int src_w) {
    auto map = std::make_shared<ad::RowMap>();
    const auto h = grid.gx.rows(), w = grid.gx.cols();
    map->rows.resize(static_cast<size_t>(h) * w);
    for (Eigen::Index y = 0; y < h; ++y) {
        for (Eigen::Index x = 0; x < w; ++x) {
            auto& entries = map->rows[static_cast<size_t>(y) * w + x];
            const float fx = from_norm_coord(grid.gx(y, x), src_w);
            const float fy = from_norm_coord(grid.gy(y, x), src_h);
            if (!std::isfinite(fx) || !std::isfinite(fy)) continue;
            const int x0 = static_cast<int>(std::floor(fx));
            const int y0 = static_cast<int>(std::floor(fy));
            const float wx = fx - x0, wy = fy - y0;
            const float ws[4] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
            const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
            const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
            for (int i = 0; i < 4; ++i) {
                if (xs[i] < 0 || xs[i] >= src_w || ys[i] < 0 || ys[i] >= src_h) continue;
                if (ws[i] == 0.f) continue;
                entries.push_back({static_cast<Eigen::Index>(ys[i]) * src_w + xs[i], ws[i]});
            }
        }
    }
    return map;
}

/// Bilinear warp of a token-major feature matrix ((src_h*src_w) x C).
inline ad::Mat warp_features(const ad::Mat& features, const SamplingGrid& grid, int src_h,
                             int src_w) {
    if (features.rows() != static_cast<Eigen::Index>(src_h) * src_w)
        throw FormatError("warp_features: feature token count does not match grid source size");
    const auto map = build_warp_row_map(grid, src_h, src_w);
    ad::Mat out = ad::Mat::Zero(grid.gx.size(), features.cols());
    for (size_t r = 0; r < map->rows.size(); ++r)
        for (const auto& e : map->rows[r])
            out.row(static_cast<Eigen::Index>(r)) += e.weight * features.row(e.src);
    return out;
}

/// First-observer assignment: visibilities[b][j] for j < b.
inline GeometryMask geometry_aware_mask(
    const std::vector<std::vector<ScalarMap>>& visibilities) {
    GeometryMask out;
    const size_t n = visibilities.size();
    for (size_t b = 0; b < n; ++b) {
        if (visibilities[b].size() != b)
            throw FormatError("geometry_aware_mask: expected lower-triangular visibility set");
        ScalarMap m;
        if (b == 0) {
            // shape comes from the first pairwise mask; N==1 batches resolve it lazily
            if (n > 1) m = ScalarMap::Ones(visibilities[1][0].rows(), visibilities[1][0].cols());
        } else {
            m = ScalarMap::Ones(visibilities[b][0].rows(), visibilities[b][0].cols());
            for (size_t j = 0; j < b; ++j) m *= (1.f - visibilities[b][j]);
        }
        out.masks.push_back(std::move(m));
    }
    return out;
}

/// Bilinear resize of a grid's coordinate fields.
inline SamplingGrid resample_grid(const SamplingGrid& grid, int h, int w) {
    SamplingGrid out;
    out.ref = grid.ref;
    out.src = grid.src;
    out.src_width = grid.src_width;
    out.src_height = grid.src_height;
    out.gx = ScalarMap(h, w);
    out.gy = ScalarMap(h, w);
    const int sh = static_cast<int>(grid.gx.rows());
    const int sw = static_cast<int>(grid.gx.cols());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float fy = (y + 0.5f) * sh / static_cast<float>(h) - 0.5f;
            float fx = (x + 0.5f) * sw / static_cast<float>(w) - 0.5f;
            fy = std::clamp(fy, 0.f, static_cast<float>(sh - 1));
            fx = std::clamp(fx, 0.f, static_cast<float>(sw - 1));
            const int y0 = static_cast<int>(std::floor(fy));
            const int x0 = static_cast<int>(std::floor(fx));
            const int y1 = std::min(y0 + 1, sh - 1);
            const int x1 = std::min(x0 + 1, sw - 1);
            const float wy = fy - y0, wx = fx - x0;
            auto lerp2 = [&](const ScalarMap& g) {
                return (1 - wy) * ((1 - wx) * g(y0, x0) + wx * g(y0, x1)) +
                       wy * ((1 - wx) * g(y1, x0) + wx * g(y1, x1));
            };
            out.gx(y, x) = lerp2(grid.gx);
            out.gy(y, x) = lerp2(grid.gy);
        }
    return out;
}

/// Nearest-neighbor resize for binary masks (visibility, M_G).
inline ScalarMap resample_mask_nearest(const ScalarMap& mask, int h, int w) {
    ScalarMap out(h, w);
    const int sh = static_cast<int>(mask.rows());
    const int sw = static_cast<int>(mask.cols());
    for (int y = 0; y < h; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5f) * sh / h), sh - 1);
        for (int x = 0; x < w; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5f) * sw / w), sw - 1);
            out(y, x) = mask(sy, sx);
        }
    }
    return out;
}

/// Full guidance triple for a rendered batch. `grids[b][j]` and
/// `visibility[b][j]` are filled for all ordered pairs j != b (diagonal
/// entries left empty); the geometry mask uses the j < b part. Background
/// pixels (alpha below threshold) have their depth zeroed first, which makes
/// them invisible in every pairwise mask.
struct GeometryGuidance {
    int height = 0, width = 0;
    std::vector<std::vector<SamplingGrid>> grids;
    std::vector<std::vector<ScalarMap>> visibility;
    GeometryMask mask;
};

inline GeometryGuidance compute_guidance(const std::vector<CameraView>& cameras,
                                         const std::vector<ScalarMap>& depths,
                                         const std::vector<ScalarMap>& alphas,
                                         float alpha_threshold = 0.5f) {
    const size_t n = cameras.size();
    GeometryGuidance g;
    g.height = static_cast<int>(depths[0].rows());
    g.width = static_cast<int>(depths[0].cols());
    std::vector<ScalarMap> masked_depths(n);
    for (size_t i = 0; i < n; ++i)
        masked_depths[i] = (alphas[i] >= alpha_threshold).select(depths[i], 0.f);

    g.grids.resize(n);
    g.visibility.resize(n);
    std::vector<std::vector<ScalarMap>> lower(n);
    for (size_t b = 0; b < n; ++b) {
        g.grids[b].resize(n);
        g.visibility[b].resize(n);
        for (size_t j = 0; j < n; ++j) {
            if (j == b) continue;
            auto [grid, raw] = compute_grid(cameras[b], cameras[j], masked_depths[b]);
            grid.ref = static_cast<int>(b);
            grid.src = static_cast<int>(j);
            g.visibility[b][j] = compute_visibility(grid, raw).v;
            g.grids[b][j] = std::move(grid);
            if (j < b) lower[b].push_back(g.visibility[b][j]);
        }
    }
    g.mask = geometry_aware_mask(lower);
    if (g.mask.masks[0].size() == 0) g.mask.masks[0] = ScalarMap::Ones(g.height, g.width);
    return g;
}

} // namespace splatstyle
