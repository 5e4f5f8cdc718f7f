// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <random>

#include "splatstyle/core/image.hpp"
#include "splatstyle/render/camera.hpp"
#include "splatstyle/scene/gaussian_scene.hpp"

namespace splatstyle::testing {

inline CameraView lookat_camera(const Eigen::Vector3f& position, const Eigen::Vector3f& target,
                                int resolution = 32, float fx = 40.f) {
    const Eigen::Vector3f forward = (target - position).normalized();
    Eigen::Vector3f up(0.f, -1.f, 0.f); // OpenCV convention: camera y points down
    if (std::abs(forward.dot(up)) > 0.99f) up = Eigen::Vector3f(0.f, 0.f, -1.f);
    const Eigen::Vector3f right = forward.cross(up).normalized();
    const Eigen::Vector3f down = forward.cross(right).normalized();

    CameraView cam;
    cam.fx = cam.fy = fx;
    cam.cx = cam.cy = resolution / 2.f;
    cam.width = cam.height = resolution;
    Eigen::Matrix3f rot;
    rot.row(0) = right.transpose();
    rot.row(1) = down.transpose();
    rot.row(2) = forward.transpose();
    cam.world_to_camera.topLeftCorner<3, 3>() = rot;
    cam.world_to_camera.topRightCorner<3, 1>() = -rot * position;
    cam.validate();
    return cam;
}

/// Cluster of Gaussians near the origin with mid-range colors and high
/// opacity; good conditioning for gradient checks.
inline GaussianScene toy_scene(Eigen::Index count, uint32_t seed, int sh_degree = 1) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(-1.f, 1.f);
    std::normal_distribution<float> n(0.f, 1.f);
    GaussianScene s;
    s.sh_degree = sh_degree;
    s.positions.resize(count, 3);
    s.rotations.resize(count, 4);
    s.scales.resize(count, 3);
    s.opacities.resize(count);
    s.sh_dc.resize(count, 3);
    s.sh_rest.resize(count, 3 * s.rest_coeffs());
    for (Eigen::Index i = 0; i < count; ++i) {
        s.positions.row(i) << u(rng), u(rng), u(rng);
        s.rotations.row(i) << n(rng), n(rng), n(rng), n(rng);
        s.scales.row(i) << -1.8f + 0.3f * u(rng), -1.8f + 0.3f * u(rng), -1.8f + 0.3f * u(rng);
        s.opacities(i) = 1.5f + u(rng);
        s.sh_dc.row(i) << 0.4f * u(rng), 0.4f * u(rng), 0.4f * u(rng);
        for (Eigen::Index j = 0; j < s.sh_rest.cols(); ++j) s.sh_rest(i, j) = 0.1f * u(rng);
    }
    s.normalize_rotations();
    s.validate();
    return s;
}

inline std::vector<CameraView> ring_cameras(int count, float radius = 4.f, int resolution = 32,
                                            float fx = 40.f) {
    std::vector<CameraView> cams;
    for (int i = 0; i < count; ++i) {
        const float angle = 2.f * static_cast<float>(M_PI) * i / count;
        const Eigen::Vector3f pos(radius * std::sin(angle), 0.4f * std::sin(2 * angle),
                                  -radius * std::cos(angle));
        cams.push_back(lookat_camera(pos, Eigen::Vector3f::Zero(), resolution, fx));
    }
    return cams;
}

inline Image gradient_style_image(int size = 32) {
    Image img(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            img.at(y, x, 0) = static_cast<float>(x) / (size - 1);
            img.at(y, x, 1) = static_cast<float>(y) / (size - 1);
            img.at(y, x, 2) = 0.5f + 0.5f * std::sin(0.7f * x + 1.1f * y);
        }
    return img;
}

inline CameraView random_camera(std::mt19937& rng, int resolution = 16) {
    std::uniform_real_distribution<float> u(-1.f, 1.f);
    const Eigen::Vector3f pos(3.f * u(rng), 3.f * u(rng), 3.f * u(rng));
    const Eigen::Vector3f target(0.5f * u(rng), 0.5f * u(rng), 0.5f * u(rng));
    Eigen::Vector3f p = pos;
    if ((p - target).norm() < 1.f) p = target + Eigen::Vector3f(0.f, 0.f, -2.f);
    return lookat_camera(p, target, resolution, 18.f + 6.f * u(rng));
}

} // namespace splatstyle::testing
