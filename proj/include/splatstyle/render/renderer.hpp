// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "splatstyle/core/image.hpp"
#include "splatstyle/render/camera.hpp"
#include "splatstyle/scene/gaussian_scene.hpp"

namespace splatstyle {

struct RenderOutput {
    Image rgb;       // H x W x 3 in [0,1]
    ScalarMap depth; // alpha-composited expected camera-z; 0 on background
    ScalarMap alpha; // 1 - transmittance
};

struct RenderOptions {
    Eigen::Vector3f background = Eigen::Vector3f::Zero();
    float near_clip = 0.01f;
    float alpha_cutoff = 1.f / 255.f;
    float transmittance_cutoff = 1e-4f;
    float cov_dilation = 0.3f; // screen-space low-pass on the 2D covariance diagonal
};

namespace sh {

// Real SH basis constants, degrees 0..3 (the standard 3DGS set).
constexpr float C0 = 0.28209479177387814f;
constexpr float C1 = 0.4886025119029199f;
constexpr float C2[5] = {1.0925484305920792f, -1.0925484305920792f, 0.31539156525252005f,
                         -1.0925484305920792f, 0.5462742152960396f};
constexpr float C3[7] = {-0.5900435899266435f, 2.890611442640554f,  -0.4570457994644658f,
                         0.3731763325901154f,  -0.4570457994644658f, 1.445305721320277f,
                         -0.5900435899266435f};

/// Evaluates the (deg+1)^2 basis values for a unit direction.
inline Eigen::VectorXf basis(int degree, const Eigen::Vector3f& d) {
    Eigen::VectorXf b((degree + 1) * (degree + 1));
    b(0) = C0;
    if (degree >= 1) {
        const float x = d.x(), y = d.y(), z = d.z();
        b(1) = -C1 * y;
        b(2) = C1 * z;
        b(3) = -C1 * x;
        if (degree >= 2) {
            const float xx = x * x, yy = y * y, zz = z * z, xy = x * y, yz = y * z, xz = x * z;
            b(4) = C2[0] * xy;
            b(5) = C2[1] * yz;
            b(6) = C2[2] * (2.f * zz - xx - yy);
            b(7) = C2[3] * xz;
            b(8) = C2[4] * (xx - yy);
            if (degree >= 3) {
                b(9) = C3[0] * y * (3.f * xx - yy);
                b(10) = C3[1] * xy * z;
                b(11) = C3[2] * y * (4.f * zz - xx - yy);
                b(12) = C3[3] * z * (2.f * zz - 3.f * xx - 3.f * yy);
                b(13) = C3[4] * x * (4.f * zz - xx - yy);
                b(14) = C3[5] * z * (xx - yy);
                b(15) = C3[6] * x * (xx - 3.f * yy);
            }
        }
    }
    return b;
}

} // namespace sh

/// Per-render data kept for the color backward pass. Geometry is frozen, so
/// the pixel -> SH map is linear with these fixed weights.
struct RenderCache {
    struct Contribution {
        int gaussian;
        float weight; // alpha_m * transmittance_m at this pixel
    };
    int height = 0, width = 0;
    std::vector<std::vector<Contribution>> per_pixel; // h*w entries
    MatX basis;     // M x (deg+1)^2, view-direction SH basis per Gaussian
    MatX raw_color; // M x 3, pre-clamp colors (for the clamp subgradient)
};

inline float sigmoid(float x) { return 1.f / (1.f + std::exp(-x)); }

inline RenderOutput render(const GaussianScene& scene, const CameraView& camera,
                           const RenderOptions& opts = {}, RenderCache* cache = nullptr) {
    const Eigen::Index m = scene.count();
    const int h = camera.height, w = camera.width;
    const Eigen::Matrix3f rot = camera.world_to_camera.topLeftCorner<3, 3>();
    const Eigen::Vector3f trans = camera.world_to_camera.topRightCorner<3, 1>();
    const Eigen::Vector3f cam_center = camera.center();
    const int n_basis = (scene.sh_degree + 1) * (scene.sh_degree + 1);
    const Eigen::Index k = scene.rest_coeffs();

    struct Splat {
        int idx;
        float z;
        Eigen::Vector2f uv;
        Eigen::Matrix2f inv_cov;
        float opacity;
        Eigen::Vector3f color;
        float radius2; // squared cull radius in pixels
    };
    std::vector<Splat> splats;
    splats.reserve(static_cast<size_t>(m));

    MatX basis_all;
    MatX raw_color_all;
    if (cache) {
        basis_all = MatX::Zero(m, n_basis);
        raw_color_all = MatX::Zero(m, 3);
    }

    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Vector3f p = rot * scene.positions.row(i).transpose() + trans;
        if (p.z() < opts.near_clip) continue;

        // 3D covariance from rotation + log-scale
        const Eigen::Quaternionf q(scene.rotations(i, 0), scene.rotations(i, 1),
                                   scene.rotations(i, 2), scene.rotations(i, 3));
        const Eigen::Matrix3f rq = q.toRotationMatrix();
        const Eigen::Vector3f s = scene.scales.row(i).array().exp();
        const Eigen::Matrix3f cov3 = rq * s.asDiagonal() * s.asDiagonal() * rq.transpose();

        // perspective Jacobian at the center
        const float z = p.z(), x = p.x(), y = p.y();
        Eigen::Matrix<float, 2, 3> jac;
        jac << camera.fx / z, 0, -camera.fx * x / (z * z), 0, camera.fy / z,
            -camera.fy * y / (z * z);
        Eigen::Matrix2f cov2 = jac * rot * cov3 * rot.transpose() * jac.transpose();
        cov2(0, 0) += opts.cov_dilation;
        cov2(1, 1) += opts.cov_dilation;
        const float det = cov2.determinant();
        if (det <= 0) continue;

        Splat sp;
        sp.idx = static_cast<int>(i);
        sp.z = z;
        sp.uv = Eigen::Vector2f(camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy);
        sp.inv_cov = cov2.inverse();
        sp.opacity = sigmoid(scene.opacities(i));
        const float max_eig = 0.5f * (cov2(0, 0) + cov2(1, 1)) +
                              std::sqrt(std::max(0.f, 0.25f * (cov2(0, 0) - cov2(1, 1)) *
                                                          (cov2(0, 0) - cov2(1, 1)) +
                                                      cov2(0, 1) * cov2(0, 1)));
        sp.radius2 = 9.f * max_eig;

        const Eigen::Vector3f dir =
            (scene.positions.row(i).transpose() - cam_center).normalized();
        const Eigen::VectorXf b = sh::basis(scene.sh_degree, dir);
        Eigen::Vector3f color;
        for (int c = 0; c < 3; ++c) {
            float v = b(0) * scene.sh_dc(i, c);
            for (Eigen::Index j = 0; j < k; ++j) v += b(j + 1) * scene.sh_rest(i, c * k + j);
            color(c) = v + 0.5f;
        }
        if (cache) {
            basis_all.row(i) = b.transpose();
            raw_color_all.row(i) = color.transpose();
        }
        sp.color = color.cwiseMax(0.f).cwiseMin(1.f);
        splats.push_back(sp);
    }

    std::sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
        return a.z < b.z || (a.z == b.z && a.idx < b.idx);
    });

    RenderOutput out;
    out.rgb = Image(h, w);
    out.depth = ScalarMap::Zero(h, w);
    out.alpha = ScalarMap::Zero(h, w);
    if (cache) {
        cache->height = h;
        cache->width = w;
        cache->per_pixel.assign(static_cast<size_t>(h) * w, {});
        cache->basis = std::move(basis_all);
        cache->raw_color = std::move(raw_color_all);
    }

    for (int py = 0; py < h; ++py) {
        for (int px = 0; px < w; ++px) {
            float t = 1.f;
            Eigen::Vector3f rgb = Eigen::Vector3f::Zero();
            float depth = 0.f;
            const Eigen::Vector2f pc(px + 0.5f, py + 0.5f);
            for (const Splat& sp : splats) {
                const Eigen::Vector2f d = pc - sp.uv;
                if (d.squaredNorm() > sp.radius2) continue;
                const float power = -0.5f * d.dot(sp.inv_cov * d);
                if (power < -12.f) continue;
                float a = sp.opacity * std::exp(power);
                a = std::min(a, 0.999f);
                if (a < opts.alpha_cutoff) continue;
                const float weight = a * t;
                rgb += weight * sp.color;
                depth += weight * sp.z;
                if (cache)
                    cache->per_pixel[static_cast<size_t>(py) * w + px].push_back(
                        {sp.idx, weight});
                t *= (1.f - a);
                if (t < opts.transmittance_cutoff) break;
            }
            rgb += t * opts.background;
            for (int c = 0; c < 3; ++c) out.rgb.at(py, px, c) = rgb(c);
            out.depth(py, px) = depth;
            out.alpha(py, px) = 1.f - t;
        }
    }
    return out;
}

inline std::vector<RenderOutput> render_batch(const GaussianScene& scene,
                                              const std::vector<CameraView>& cameras,
                                              const RenderOptions& opts = {}) {
    std::vector<RenderOutput> outs;
    outs.reserve(cameras.size());
    for (const auto& cam : cameras) outs.push_back(render(scene, cam, opts));
    return outs;
}

/// Chains a pixel-space gradient back to the SH coefficients using the
/// weights recorded at render time. Accumulates into grad_dc / grad_rest.
inline void backward_to_sh(const GaussianScene& scene, const RenderCache& cache,
                           const Image& grad_rgb, MatX& grad_dc, MatX& grad_rest) {
    const Eigen::Index k = scene.rest_coeffs();
    if (grad_dc.rows() != scene.count()) grad_dc = MatX::Zero(scene.count(), 3);
    if (grad_rest.rows() != scene.count()) grad_rest = MatX::Zero(scene.count(), 3 * k);
    for (int py = 0; py < cache.height; ++py) {
        for (int px = 0; px < cache.width; ++px) {
            const auto& contribs = cache.per_pixel[static_cast<size_t>(py) * cache.width + px];
            for (const auto& ct : contribs) {
                for (int c = 0; c < 3; ++c) {
                    const float raw = cache.raw_color(ct.gaussian, c);
                    if (raw <= 0.f || raw >= 1.f) continue; // clamp subgradient
                    const float g = ct.weight * grad_rgb.at(py, px, c);
                    grad_dc(ct.gaussian, c) += g * cache.basis(ct.gaussian, 0);
                    for (Eigen::Index j = 0; j < k; ++j)
                        grad_rest(ct.gaussian, c * k + j) +=
                            g * cache.basis(ct.gaussian, j + 1);
                }
            }
        }
    }
}

} // namespace splatstyle
