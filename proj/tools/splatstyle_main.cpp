// Copyright Contributors to the splatstyle Project
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "splatstyle/config.hpp"
#include "splatstyle/metrics/metrics.hpp"

namespace {

using namespace splatstyle;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::vector<std::string> ablate;
    std::string timestep;
    int seed = -1;
};

void add_common(CLI::App& cmd, CommonArgs& args) {
    cmd.add_option("-c,--config", args.config_path, "JSON run configuration")->required();
    cmd.add_option("--set", args.overrides,
                   "flat config override, key.subkey=value (repeatable)");
    cmd.add_option("--seed", args.seed, "training seed override");
    cmd.add_option("--ablate", args.ablate,
                   "disable a component (repeatable): no-gga, no-mg, no-norm, direct-style")
        ->check(CLI::IsMember({"no-gga", "no-mg", "no-norm", "direct-style"}));
    cmd.add_option("--timestep", args.timestep,
                   "timestep strategy: fixed:T, random, or decreasing");
}

RunConfig resolve(const CommonArgs& args) {
    RunConfig cfg = load_config(args.config_path, args.overrides);
    if (args.seed >= 0) cfg.training.seed = static_cast<uint32_t>(args.seed);
    if (!args.timestep.empty())
        cfg.training.timestep = config_detail::parse_timestep(args.timestep);
    for (const std::string& a : args.ablate) {
        if (a == "no-gga") cfg.training.ablation.gga = false;
        if (a == "no-mg") cfg.training.ablation.geometry_mask = false;
        if (a == "no-norm") cfg.training.ablation.normalize = false;
        if (a == "direct-style") cfg.training.ablation.direct_style_signal = true;
    }
    return cfg;
}

std::vector<CameraView> native_cameras(const RunConfig& cfg, int resolution) {
    std::vector<CameraView> cams;
    for (const auto& cam : load_cameras_any(cfg.cameras))
        cams.push_back(rescale_camera(cam, resolution));
    return cams;
}

void write_run_manifest(const RunConfig& cfg, const std::string& command) {
    std::filesystem::create_directories(cfg.output_dir);
    nlohmann::json j;
    j["command"] = command;
    j["seed"] = cfg.training.seed;
    j["backbone_seed"] = cfg.backbone.seed;
    j["timestep"] = config_detail::timestep_to_string(cfg.training.timestep);
    j["iterations"] = cfg.training.iterations;
    j["views_per_batch"] = cfg.training.views_per_batch;
    j["lambda"] = cfg.training.lambda;
    j["ablation"] = {{"gga", cfg.training.ablation.gga},
                     {"geometry_mask", cfg.training.ablation.geometry_mask},
                     {"normalize", cfg.training.ablation.normalize},
                     {"direct_style_signal", cfg.training.ablation.direct_style_signal}};
    std::ofstream out(cfg.output_dir + "/run.json");
    out << j.dump(2) << '\n';
}

int cmd_stylize(const RunConfig& cfg) {
    cfg.validate_paths(true, true, true);
    write_run_manifest(cfg, "stylize");

    GaussianScene scene = load_scene(cfg.scene);
    const TinyBackbone backbone(cfg.backbone);
    const auto cameras = native_cameras(cfg, backbone.native_resolution());
    const Image style = read_png(cfg.style_image);

    Trainer trainer(scene, backbone, style, cfg.training);
    trainer.run(cameras, cfg.output_dir, [](int step, const LossReport& r) {
        if (step == 1 || step % 25 == 0)
            std::cout << "step " << step << " total " << r.total << " style " << r.style
                      << " content " << r.content << " mask_fill " << r.mask_fill << '\n';
    });

    // preview renders of the first few cameras
    for (size_t i = 0; i < cameras.size() && i < 4; ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "/preview_%02zu.png", i);
        write_png(render(scene, cameras[i], cfg.training.render).rgb, cfg.output_dir + name);
    }
    std::cout << "stylized scene written to " << cfg.output_dir << "/stylized.ply\n";
    return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& content_scene_path) {
    cfg.validate_paths(true, true, true);
    std::filesystem::create_directories(cfg.output_dir);

    const GaussianScene scene = load_scene(cfg.scene);
    const TinyBackbone backbone(cfg.backbone);
    const auto cameras = native_cameras(cfg, backbone.native_resolution());
    const Image style = read_png(cfg.style_image);

    std::vector<Image> frames, content_frames;
    std::vector<ScalarMap> depths;
    for (const auto& cam : cameras) {
        const RenderOutput out = render(scene, cam, cfg.training.render);
        frames.push_back(out.rgb);
        depths.push_back(out.depth);
    }
    MetricReport report;
    report.frame_count = static_cast<int>(frames.size());

    if (!content_scene_path.empty()) {
        const GaussianScene content = load_scene(content_scene_path);
        for (const auto& cam : cameras)
            content_frames.push_back(render(content, cam, cfg.training.render).rgb);
    } else {
        content_frames = frames;
        report.notes.push_back("no content scene given; CLIP-C/CLIP-CONS use stylized frames");
    }

    const ToyEmbedder embedder(cfg.metrics.embedder_seed);
    const TinyConvExtractor extractor(cfg.metrics.extractor_seed);
    report.notes.push_back("embedder: " + embedder.name() + " (stand-in)");
    report.notes.push_back("extractor: " + extractor.name() + " (stand-in)");

    const ClipScores clip = clip_scores(frames, content_frames, style, embedder);
    report.clip_s = clip.clip_s;
    report.clip_c = clip.clip_c;
    report.clip_cons = clip.clip_cons;
    report.clip_f = clip.clip_f;
    if (frames.size() < 2)
        report.notes.push_back("single frame: temporal metrics unavailable");
    report.s_vgg = vgg_style_distance(frames, style, extractor);

    auto run_consistency = [&](int delta, std::optional<float>& lpips,
                               std::optional<float>& rmse) {
        if (frames.size() < static_cast<size_t>(delta) + 1) {
            report.notes.push_back("path shorter than delta " + std::to_string(delta) +
                                   "; consistency skipped");
            return;
        }
        const ConsistencyResult r = consistency(frames, depths, cameras, delta, extractor);
        if (r.pairs > 0) {
            lpips = r.lpips;
            rmse = r.rmse;
        } else {
            report.notes.push_back("no visible overlap at delta " + std::to_string(delta));
        }
    };
    run_consistency(cfg.metrics.delta_short, report.lpips_short, report.rmse_short);
    run_consistency(cfg.metrics.delta_long, report.lpips_long, report.rmse_long);

    if (frames.size() >= 2 && !content_scene_path.empty()) {
        std::vector<Eigen::VectorXf> a, b;
        for (const auto& f : frames) a.push_back(embedder.embed(f));
        for (const auto& f : content_frames) b.push_back(embedder.embed(f));
        const FidResult fr = fid(a, b);
        report.fid = fr.value;
        report.fid_ridge_applied = fr.ridge_applied;
        if (fr.small_sample) report.notes.push_back("FID computed from < 16 frames per set");
    } else {
        report.notes.push_back("FID needs a content scene and >= 2 frames; skipped");
    }

    std::ofstream json_out(cfg.output_dir + "/report.json");
    json_out << report_to_json(report).dump(2) << '\n';
    write_report_csv(report, cfg.output_dir + "/report.csv");
    std::cout << report_to_json(report).dump(2) << '\n';
    return kExitOk;
}

int cmd_render(const RunConfig& cfg, bool debug_guidance) {
    cfg.validate_paths(true, true, false);
    std::filesystem::create_directories(cfg.output_dir);

    const GaussianScene scene = load_scene(cfg.scene);
    const TinyBackbone backbone(cfg.backbone);
    const auto cameras = native_cameras(cfg, backbone.native_resolution());

    std::vector<ScalarMap> depths, alphas;
    for (size_t i = 0; i < cameras.size(); ++i) {
        const RenderOutput out = render(scene, cameras[i], cfg.training.render);
        char name[64];
        std::snprintf(name, sizeof(name), "/frame_%04zu.png", i);
        write_png(out.rgb, cfg.output_dir + name);
        if (debug_guidance) {
            std::snprintf(name, sizeof(name), "/depth_%04zu.png", i);
            write_png(heatmap(out.depth), cfg.output_dir + name);
            std::snprintf(name, sizeof(name), "/alpha_%04zu.png", i);
            write_png(heatmap(out.alpha), cfg.output_dir + name);
        }
        depths.push_back(out.depth);
        alphas.push_back(out.alpha);
    }
    if (debug_guidance && cameras.size() > 1) {
        const GeometryGuidance g = compute_guidance(cameras, depths, alphas);
        for (size_t b = 0; b < cameras.size(); ++b) {
            char name[64];
            std::snprintf(name, sizeof(name), "/mask_%04zu.png", b);
            write_png(heatmap(g.mask.masks[b]), cfg.output_dir + name);
            for (size_t j = 0; j < cameras.size(); ++j) {
                if (j == b) continue;
                std::snprintf(name, sizeof(name), "/vis_%04zu_from_%04zu.png", b, j);
                write_png(heatmap(g.visibility[b][j]), cfg.output_dir + name);
            }
        }
    }
    std::cout << "wrote " << cameras.size() << " frames to " << cfg.output_dir << '\n';
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D Gaussian splat stylization via attention-space feature matching"};
    app.require_subcommand(1);

    CommonArgs stylize_args, evaluate_args, render_args;
    std::string content_scene;
    bool debug_guidance = false;

    CLI::App* stylize = app.add_subcommand("stylize", "optimize scene colors toward a style");
    add_common(*stylize, stylize_args);
    CLI::App* evaluate = app.add_subcommand("evaluate", "score rendered frames");
    add_common(*evaluate, evaluate_args);
    evaluate->add_option("--content-scene", content_scene,
                         "original scene PLY for content-relative metrics");
    CLI::App* render_cmd = app.add_subcommand("render", "render a camera path to PNGs");
    add_common(*render_cmd, render_args);
    render_cmd->add_flag("--debug-guidance", debug_guidance,
                         "dump depth/alpha/visibility/mask heatmaps");

    try {
        app.parse(argc, argv);
        if (stylize->parsed()) return cmd_stylize(resolve(stylize_args));
        if (evaluate->parsed()) return cmd_evaluate(resolve(evaluate_args), content_scene);
        if (render_cmd->parsed()) return cmd_render(resolve(render_args), debug_guidance);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const FormatError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInput;
    }
    return kExitOk;
}
