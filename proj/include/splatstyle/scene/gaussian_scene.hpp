// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "splatstyle/core/errors.hpp"

namespace splatstyle {

using MatX = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// 3D Gaussian Splatting parameter set. Geometry (positions, rotations,
/// scales, opacities) is frozen during stylization; only the SH color
/// coefficients are trainable.
struct GaussianScene {
    MatX positions;  // M x 3, world units
    MatX rotations;  // M x 4, unit quaternions (w, x, y, z)
    MatX scales;     // M x 3, log-scale
    Eigen::VectorXf opacities; // M, pre-activation (sigmoid applied at render)
    MatX sh_dc;      // M x 3
    MatX sh_rest;    // M x (3 * k), k = (deg+1)^2 - 1, layout f_rest_{c*k + i}
    int sh_degree = 0;

    Eigen::Index count() const { return positions.rows(); }
    Eigen::Index rest_coeffs() const { return (sh_degree + 1) * (sh_degree + 1) - 1; }

    void normalize_rotations() {
        for (Eigen::Index m = 0; m < rotations.rows(); ++m) {
            const float n = rotations.row(m).norm();
            if (n > 0 && std::abs(n - 1.f) > 1e-6f) rotations.row(m) /= n;
        }
    }

    void validate() const {
        const Eigen::Index m = count();
        if (m == 0) throw FormatError("empty scene: zero Gaussians");
        if (rotations.rows() != m || scales.rows() != m || opacities.size() != m ||
            sh_dc.rows() != m || sh_rest.rows() != m)
            throw FormatError("scene arrays disagree on Gaussian count");
        if (sh_rest.cols() != 3 * rest_coeffs())
            throw FormatError("sh_rest width does not match sh_degree " +
                              std::to_string(sh_degree));
        for (Eigen::Index i = 0; i < m; ++i)
            if (std::abs(rotations.row(i).norm() - 1.f) > 1e-5f)
                throw FormatError("non-unit quaternion at Gaussian " + std::to_string(i));
    }
};

/// Frozen/trainable split of the scene parameters. Holds references; the
/// trainable set is exactly the color SH coefficients.
struct ParameterPartition {
    // frozen
    const MatX* positions;
    const MatX* rotations;
    const MatX* scales;
    const Eigen::VectorXf* opacities;
    // trainable
    MatX* sh_dc;
    MatX* sh_rest;

    static constexpr int frozen_count = 4;
    static constexpr int trainable_count = 2;
};

inline ParameterPartition partition_parameters(GaussianScene& scene) {
    return ParameterPartition{&scene.positions, &scene.rotations, &scene.scales,
                              &scene.opacities, &scene.sh_dc,     &scene.sh_rest};
}

} // namespace splatstyle
