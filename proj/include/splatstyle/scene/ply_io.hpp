// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "splatstyle/core/errors.hpp"
#include "splatstyle/scene/gaussian_scene.hpp"

namespace splatstyle {

// Binary little-endian PLY in the de facto 3DGS checkpoint layout:
// x,y,z, nx,ny,nz, f_dc_0..2, f_rest_0..(3k-1), opacity, scale_0..2, rot_0..3.
// f_rest is channel-major: index c*k + i for channel c, coefficient i.

namespace ply_detail {

struct Header {
    size_t vertex_count = 0;
    std::vector<std::string> properties;
    size_t data_offset = 0;
};

inline Header parse_header(std::istream& in) {
    Header h;
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0)
        throw FormatError("not a PLY file");
    bool binary_le = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "format") {
            std::string fmt;
            ls >> fmt;
            binary_le = (fmt == "binary_little_endian");
        } else if (tok == "element") {
            std::string name;
            ls >> name >> h.vertex_count;
            if (name != "vertex") throw FormatError("unexpected PLY element: " + name);
        } else if (tok == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "float")
                throw FormatError("unsupported PLY property type: " + type);
            h.properties.push_back(name);
        } else if (tok == "end_header") {
            break;
        }
    }
    if (!binary_le) throw FormatError("PLY must be binary_little_endian");
    return h;
}

} // namespace ply_detail

inline GaussianScene load_scene(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open scene: " + path);
    const auto header = ply_detail::parse_header(in);
    if (header.vertex_count == 0) throw FormatError("empty scene: zero Gaussians in " + path);

    std::map<std::string, int> index;
    for (size_t i = 0; i < header.properties.size(); ++i)
        index[header.properties[i]] = static_cast<int>(i);

    auto require = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end())
            throw FormatError("PLY missing required property '" + name + "' in " + path);
        return it->second;
    };

    const int ix = require("x"), iy = require("y"), iz = require("z");
    const int idc0 = require("f_dc_0"), idc1 = require("f_dc_1"), idc2 = require("f_dc_2");
    const int iop = require("opacity");
    const int is0 = require("scale_0"), is1 = require("scale_1"), is2 = require("scale_2");
    const int ir0 = require("rot_0"), ir1 = require("rot_1"), ir2 = require("rot_2"),
              ir3 = require("rot_3");

    int n_rest = 0;
    while (index.count("f_rest_" + std::to_string(n_rest))) ++n_rest;
    if (n_rest % 3 != 0)
        throw FormatError("f_rest property count not divisible by 3 in " + path);
    const int k = n_rest / 3;
    int deg = 0;
    while ((deg + 1) * (deg + 1) - 1 < k) ++deg;
    if ((deg + 1) * (deg + 1) - 1 != k)
        throw FormatError("f_rest count " + std::to_string(n_rest) +
                          " does not match any SH degree in " + path);
    std::vector<int> irest(n_rest);
    for (int i = 0; i < n_rest; ++i) irest[i] = index.at("f_rest_" + std::to_string(i));

    const auto m = static_cast<Eigen::Index>(header.vertex_count);
    GaussianScene s;
    s.sh_degree = deg;
    s.positions.resize(m, 3);
    s.rotations.resize(m, 4);
    s.scales.resize(m, 3);
    s.opacities.resize(m);
    s.sh_dc.resize(m, 3);
    s.sh_rest.resize(m, n_rest);

    const size_t stride = header.properties.size();
    std::vector<float> row(stride);
    for (Eigen::Index v = 0; v < m; ++v) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(stride * sizeof(float)));
        if (!in) throw FormatError("truncated PLY payload in " + path);
        s.positions.row(v) << row[ix], row[iy], row[iz];
        s.sh_dc.row(v) << row[idc0], row[idc1], row[idc2];
        for (int i = 0; i < n_rest; ++i) s.sh_rest(v, i) = row[irest[i]];
        s.opacities(v) = row[iop];
        s.scales.row(v) << row[is0], row[is1], row[is2];
        s.rotations.row(v) << row[ir0], row[ir1], row[ir2], row[ir3];
    }
    s.normalize_rotations();
    s.validate();
    return s;
}

inline void save_scene(const GaussianScene& scene, const std::string& path) {
    scene.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write scene: " + path);
    const int n_rest = static_cast<int>(scene.sh_rest.cols());
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << scene.count() << "\n";
    auto prop = [&](const std::string& name) { out << "property float " << name << "\n"; };
    prop("x"), prop("y"), prop("z");
    prop("nx"), prop("ny"), prop("nz");
    for (int i = 0; i < 3; ++i) prop("f_dc_" + std::to_string(i));
    for (int i = 0; i < n_rest; ++i) prop("f_rest_" + std::to_string(i));
    prop("opacity");
    for (int i = 0; i < 3; ++i) prop("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) prop("rot_" + std::to_string(i));
    out << "end_header\n";

    std::vector<float> row(3 + 3 + 3 + n_rest + 1 + 3 + 4);
    for (Eigen::Index v = 0; v < scene.count(); ++v) {
        size_t i = 0;
        for (int c = 0; c < 3; ++c) row[i++] = scene.positions(v, c);
        for (int c = 0; c < 3; ++c) row[i++] = 0.f; // normals unused
        for (int c = 0; c < 3; ++c) row[i++] = scene.sh_dc(v, c);
        for (int c = 0; c < n_rest; ++c) row[i++] = scene.sh_rest(v, c);
        row[i++] = scene.opacities(v);
        for (int c = 0; c < 3; ++c) row[i++] = scene.scales(v, c);
        for (int c = 0; c < 4; ++c) row[i++] = scene.rotations(v, c);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw FormatError("write failed: " + path);
}

} // namespace splatstyle
