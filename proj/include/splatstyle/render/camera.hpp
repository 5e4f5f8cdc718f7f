// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatstyle/core/errors.hpp"

namespace splatstyle {

/// Pinhole camera: intrinsics in pixels, extrinsics as a world-to-camera
/// rigid transform (OpenCV convention: x right, y down, z forward).
struct CameraView {
    float fx = 0, fy = 0, cx = 0, cy = 0;
    int width = 0, height = 0;
    Eigen::Matrix4f world_to_camera = Eigen::Matrix4f::Identity();

    Eigen::Matrix4f camera_to_world() const {
        Eigen::Matrix4f c2w = Eigen::Matrix4f::Identity();
        const Eigen::Matrix3f r = world_to_camera.topLeftCorner<3, 3>();
        const Eigen::Vector3f t = world_to_camera.topRightCorner<3, 1>();
        c2w.topLeftCorner<3, 3>() = r.transpose();
        c2w.topRightCorner<3, 1>() = -r.transpose() * t;
        return c2w;
    }

    Eigen::Vector3f center() const { return camera_to_world().topRightCorner<3, 1>(); }

    Eigen::Matrix3f intrinsics() const {
        Eigen::Matrix3f k = Eigen::Matrix3f::Identity();
        k(0, 0) = fx;
        k(1, 1) = fy;
        k(0, 2) = cx;
        k(1, 2) = cy;
        return k;
    }

    void validate() const {
        if (fx <= 0 || fy <= 0) throw FormatError("camera focal lengths must be positive");
        if (width <= 0 || height <= 0) throw FormatError("camera image size must be positive");
        const Eigen::Matrix3f r = world_to_camera.topLeftCorner<3, 3>();
        if ((r * r.transpose() - Eigen::Matrix3f::Identity()).cwiseAbs().maxCoeff() > 1e-5f)
            throw FormatError("camera rotation is not orthonormal");
        if (((world_to_camera * camera_to_world()) - Eigen::Matrix4f::Identity())
                .cwiseAbs()
                .maxCoeff() > 1e-6f)
            throw FormatError("camera transform is not invertible to tolerance");
    }
};

inline Eigen::Matrix3f quat_to_rotation(float w, float x, float y, float z) {
    Eigen::Quaternionf q(w, x, y, z);
    q.normalize();
    return q.toRotationMatrix();
}

/// COLMAP text model: cameras.txt + images.txt in one directory.
inline std::vector<CameraView> load_colmap_cameras(const std::string& dir) {
    std::ifstream cams(dir + "/cameras.txt");
    if (!cams) throw FormatError("cannot open " + dir + "/cameras.txt");
    struct Intr {
        float fx, fy, cx, cy;
        int w, h;
    };
    std::map<int, Intr> intrinsics;
    std::string line;
    while (std::getline(cams, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int id, w, h;
        std::string model;
        ls >> id >> model >> w >> h;
        Intr in{};
        in.w = w;
        in.h = h;
        if (model == "PINHOLE") {
            ls >> in.fx >> in.fy >> in.cx >> in.cy;
        } else if (model == "SIMPLE_PINHOLE") {
            ls >> in.fx >> in.cx >> in.cy;
            in.fy = in.fx;
        } else {
            throw FormatError("unsupported COLMAP camera model: " + model);
        }
        intrinsics[id] = in;
    }

    std::ifstream imgs(dir + "/images.txt");
    if (!imgs) throw FormatError("cannot open " + dir + "/images.txt");
    std::vector<CameraView> views;
    while (std::getline(imgs, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int image_id, camera_id;
        float qw, qx, qy, qz, tx, ty, tz;
        std::string name;
        if (!(ls >> image_id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> camera_id >> name))
            throw FormatError("malformed images.txt line: " + line);
        auto it = intrinsics.find(camera_id);
        if (it == intrinsics.end())
            throw FormatError("images.txt references unknown camera id " +
                              std::to_string(camera_id));
        CameraView v;
        v.fx = it->second.fx;
        v.fy = it->second.fy;
        v.cx = it->second.cx;
        v.cy = it->second.cy;
        v.width = it->second.w;
        v.height = it->second.h;
        v.world_to_camera.topLeftCorner<3, 3>() = quat_to_rotation(qw, qx, qy, qz);
        v.world_to_camera.topRightCorner<3, 1>() = Eigen::Vector3f(tx, ty, tz);
        v.validate();
        views.push_back(v);
        std::getline(imgs, line); // 2D point observations, unused
    }
    if (views.empty()) throw FormatError("no images in " + dir + "/images.txt");
    return views;
}

/// transforms.json style: shared intrinsics plus per-frame 4x4
/// camera-to-world matrices (OpenCV axis convention).
inline std::vector<CameraView> load_transforms_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid JSON in " + path + ": " + e.what());
    }
    std::vector<CameraView> views;
    for (const auto& frame : j.at("frames")) {
        CameraView v;
        v.width = j.at("w").get<int>();
        v.height = j.at("h").get<int>();
        v.fx = j.at("fl_x").get<float>();
        v.fy = j.at("fl_y").get<float>();
        v.cx = j.value("cx", v.width / 2.f);
        v.cy = j.value("cy", v.height / 2.f);
        Eigen::Matrix4f c2w;
        const auto& m = frame.at("transform_matrix");
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c) c2w(r, c) = m.at(r).at(c).get<float>();
        // invert rigid c2w to get w2c
        Eigen::Matrix4f w2c = Eigen::Matrix4f::Identity();
        const Eigen::Matrix3f rot = c2w.topLeftCorner<3, 3>();
        const Eigen::Vector3f t = c2w.topRightCorner<3, 1>();
        w2c.topLeftCorner<3, 3>() = rot.transpose();
        w2c.topRightCorner<3, 1>() = -rot.transpose() * t;
        v.world_to_camera = w2c;
        v.validate();
        views.push_back(v);
    }
    if (views.empty()) throw FormatError("no frames in " + path);
    return views;
}

} // namespace splatstyle
