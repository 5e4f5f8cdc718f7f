// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "splatstyle/backbone/tiny_backbone.hpp"
#include "splatstyle/train/trainer.hpp"

namespace splatstyle {

/// Evaluation settings: warp deltas and embedding seeds.
struct MetricsConfig {
    int delta_short = 1;
    int delta_long = 7;
    uint32_t embedder_seed = 7;
    uint32_t extractor_seed = 11;
};

/// One run: input artifacts plus the backbone / training / metrics blocks.
struct RunConfig {
    std::string scene;       // PLY checkpoint
    std::string cameras;     // COLMAP dir or transforms.json
    std::string style_image; // PNG
    std::string output_dir = "out";
    TinyBackboneConfig backbone{};
    TrainingConfig training{};
    MetricsConfig metrics{};

    /// Paths that must exist are checked per command, not here; this catches
    /// structural problems only.
    void validate_paths(bool need_scene, bool need_cameras, bool need_style) const {
        namespace fs = std::filesystem;
        if (need_scene && !fs::exists(scene))
            throw FormatError("scene file does not exist: " + scene);
        if (need_cameras && !fs::exists(cameras))
            throw FormatError("camera source does not exist: " + cameras);
        if (need_style && !fs::exists(style_image))
            throw FormatError("style image does not exist: " + style_image);
    }
};

namespace config_detail {

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known,
                           const std::string& scope) {
    for (const auto& [key, value] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw FormatError("unknown config key: " + (scope.empty() ? key : scope + "." + key));
    }
}

inline TimestepStrategy parse_timestep(const std::string& spec) {
    TimestepStrategy out;
    if (spec == "random") {
        out.kind = TimestepStrategy::Kind::random;
    } else if (spec == "decreasing") {
        out.kind = TimestepStrategy::Kind::decreasing;
    } else if (spec.rfind("fixed:", 0) == 0) {
        out.kind = TimestepStrategy::Kind::fixed;
        try {
            out.fixed_t = std::stoi(spec.substr(6));
        } catch (const std::exception&) {
            throw FormatError("bad timestep spec: " + spec);
        }
    } else {
        throw FormatError("bad timestep spec: " + spec +
                          " (expected fixed:T, random, or decreasing)");
    }
    return out;
}

inline std::string timestep_to_string(const TimestepStrategy& t) {
    switch (t.kind) {
    case TimestepStrategy::Kind::random: return "random";
    case TimestepStrategy::Kind::decreasing: return "decreasing";
    default: return "fixed:" + std::to_string(t.fixed_t);
    }
}

} // namespace config_detail

/// Parses the structured JSON config; every unknown key is an error.
inline RunConfig parse_config(const nlohmann::json& j) {
    using config_detail::reject_unknown;
    RunConfig cfg;
    reject_unknown(j, {"scene", "cameras", "style_image", "output_dir", "backbone", "training",
                       "metrics"},
                   "");
    cfg.scene = j.value("scene", cfg.scene);
    cfg.cameras = j.value("cameras", cfg.cameras);
    cfg.style_image = j.value("style_image", cfg.style_image);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);

    if (j.contains("backbone")) {
        const auto& b = j.at("backbone");
        reject_unknown(b, {"seed", "resolution", "max_timestep"}, "backbone");
        cfg.backbone.seed = b.value("seed", cfg.backbone.seed);
        cfg.backbone.resolution = b.value("resolution", cfg.backbone.resolution);
        cfg.backbone.max_timestep = b.value("max_timestep", cfg.backbone.max_timestep);
    }
    if (j.contains("training")) {
        const auto& t = j.at("training");
        reject_unknown(t,
                       {"iterations", "views_per_batch", "timestep", "lambda", "lr_sh_dc",
                        "lr_sh_rest", "seed", "checkpoint_every", "style_query_source", "gga",
                        "geometry_mask", "normalize", "direct_style_signal", "background"},
                       "training");
        auto& tc = cfg.training;
        tc.iterations = t.value("iterations", tc.iterations);
        tc.views_per_batch = t.value("views_per_batch", tc.views_per_batch);
        tc.lambda = t.value("lambda", tc.lambda);
        tc.lr_sh_dc = t.value("lr_sh_dc", tc.lr_sh_dc);
        tc.lr_sh_rest = t.value("lr_sh_rest", tc.lr_sh_rest);
        tc.seed = t.value("seed", tc.seed);
        tc.checkpoint_every = t.value("checkpoint_every", tc.checkpoint_every);
        if (t.contains("timestep"))
            tc.timestep = config_detail::parse_timestep(t.at("timestep").get<std::string>());
        if (t.contains("style_query_source")) {
            const std::string s = t.at("style_query_source").get<std::string>();
            if (s == "content")
                tc.style_query_source = StyleQuerySource::content;
            else if (s == "rendered")
                tc.style_query_source = StyleQuerySource::rendered;
            else
                throw FormatError("style_query_source must be 'content' or 'rendered'");
        }
        tc.ablation.gga = t.value("gga", tc.ablation.gga);
        tc.ablation.geometry_mask = t.value("geometry_mask", tc.ablation.geometry_mask);
        tc.ablation.normalize = t.value("normalize", tc.ablation.normalize);
        tc.ablation.direct_style_signal =
            t.value("direct_style_signal", tc.ablation.direct_style_signal);
        if (t.contains("background")) {
            const auto& bg = t.at("background");
            if (!bg.is_array() || bg.size() != 3)
                throw FormatError("training.background must be an [r, g, b] triple");
            for (int c = 0; c < 3; ++c) tc.render.background(c) = bg.at(c).get<float>();
        }
        tc.validate();
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        reject_unknown(m, {"delta_short", "delta_long", "embedder_seed", "extractor_seed"},
                       "metrics");
        cfg.metrics.delta_short = m.value("delta_short", cfg.metrics.delta_short);
        cfg.metrics.delta_long = m.value("delta_long", cfg.metrics.delta_long);
        cfg.metrics.embedder_seed = m.value("embedder_seed", cfg.metrics.embedder_seed);
        cfg.metrics.extractor_seed = m.value("extractor_seed", cfg.metrics.extractor_seed);
    }
    return cfg;
}

/// Applies a flat `key.subkey=value` override onto the raw JSON tree before
/// parsing. Values are parsed as JSON when possible, else taken as strings.
inline void apply_override(nlohmann::json& j, const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw FormatError("override must be key=value: " + spec);
    const std::string path = spec.substr(0, eq);
    const std::string raw = spec.substr(eq + 1);

    nlohmann::json value;
    try {
        value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
        value = raw;
    }

    nlohmann::json* node = &j;
    size_t begin = 0;
    while (true) {
        const size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        if (key.empty()) throw FormatError("bad override key: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            break;
        }
        node = &(*node)[key];
        begin = dot + 1;
    }
}

inline RunConfig load_config(const std::string& path,
                             const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid JSON in " + path + ": " + e.what());
    }
    for (const auto& o : overrides) apply_override(j, o);
    return parse_config(j);
}

/// Camera loader dispatch: a directory means COLMAP text, a file means
/// transforms.json.
inline std::vector<CameraView> load_cameras_any(const std::string& source) {
    if (std::filesystem::is_directory(source)) return load_colmap_cameras(source);
    return load_transforms_json(source);
}

/// Rescales intrinsics (and the nominal image size) to the backbone's native
/// resolution so any camera source can drive training.
inline CameraView rescale_camera(const CameraView& cam, int resolution) {
    CameraView out = cam;
    out.fx *= static_cast<float>(resolution) / cam.width;
    out.cx *= static_cast<float>(resolution) / cam.width;
    out.fy *= static_cast<float>(resolution) / cam.height;
    out.cy *= static_cast<float>(resolution) / cam.height;
    out.width = out.height = resolution;
    return out;
}

} // namespace splatstyle
