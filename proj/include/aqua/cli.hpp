#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "aqua/boosting.hpp"
#include "aqua/checks.hpp"
#include "aqua/fit.hpp"
#include "aqua/image_io.hpp"
#include "aqua/json_io.hpp"
#include "aqua/metrics.hpp"

namespace aqua::cli {

// exit codes: 0 = ok, 1 = usage, 2 = input parse failure, 3 = numerical failure
constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitParse = 2;
constexpr int kExitNumerical = 3;

namespace detail {

inline std::string frame_name(const char* prefix, int index, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%03d.%s", prefix, index, ext);
    return buf;
}

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_text_atomic(const std::string& path, const std::string& text) {
    aqua::detail::atomic_write(path, [&](std::ostream& os) { os << text; });
}

inline Json metrics_to_json(const EigenMetrics& m) {
    return Json{{"abs_rel", m.abs_rel}, {"sq_rel", m.sq_rel},     {"rmse", m.rmse},
                {"rmse_log", m.rmse_log}, {"delta1", m.delta1},   {"delta2", m.delta2},
                {"delta3", m.delta3},     {"n_valid", m.n_valid}};
}

/// Sorted .pfm files in a directory, one plane each, stacked into a volume.
inline Grid read_pfm_stack(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".pfm")
            files.push_back(e.path().string());
    if (files.empty()) throw Error("no .pfm files in " + dir);
    std::sort(files.begin(), files.end());
    Grid first = read_pfm(files[0]);
    if (first.planes() != 1) throw Error("stack entries must be single-plane: " + files[0]);
    Grid volume(Shape{static_cast<int>(files.size()), first.rows(), first.cols()});
    const std::size_t hw = static_cast<std::size_t>(first.rows()) * first.cols();
    for (std::size_t i = 0; i < files.size(); ++i) {
        Grid g = i == 0 ? std::move(first) : read_pfm(files[i]);
        if (g.rows() != volume.rows() || g.cols() != volume.cols() || g.planes() != 1)
            throw Error("stack entry size mismatch: " + files[i]);
        for (std::size_t p = 0; p < hw; ++p) volume[i * hw + p] = g[p];
    }
    return volume;
}

struct PosesFile {
    CameraIntrinsics camera;
    std::vector<RigidPose> poses;
};

inline PosesFile read_poses_file(const std::string& path) {
    Json j = load_json_file(path);
    PosesFile p;
    try {
        p.camera = camera_from_json(j.at("camera"));
        for (const auto& pj : j.at("poses")) p.poses.push_back(pose_from_json(pj));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(std::string("poses json: ") + e.what());
    }
    if (p.poses.empty()) throw Error("poses json: empty pose list");
    return p;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline int cmd_render(const std::string& scene_path, const std::string& outdir) {
    SceneSpec spec;
    try {
        spec = scene_from_json(load_json_file(scene_path));
    } catch (const Error& e) {
        std::fprintf(stderr, "render: %s\n", e.what());
        return kExitParse;
    }
    try {
        std::filesystem::create_directories(outdir);
        for (int f = 0; f < static_cast<int>(spec.poses.size()); ++f) {
            RenderResult rr = render(spec, f);
            const std::string base = outdir + "/";
            write_ppm(base + detail::frame_name("frame", f, "ppm"), rr.image);
            write_pfm(base + detail::frame_name("frame", f, "pfm"), rr.image);
            write_pfm(base + detail::frame_name("depth", f, "pfm"), rr.depth);
            write_pfm(base + detail::frame_name("disp", f, "pfm"), rr.disparity);
            write_pgm(base + detail::frame_name("moving", f, "pgm"), rr.moving_mask);
        }
        Json poses{{"camera", to_json(spec.camera)}, {"poses", Json::array()}};
        for (const RigidPose& p : spec.poses) poses["poses"].push_back(to_json(p));
        detail::write_text_atomic(outdir + "/poses.json", poses.dump(2) + "\n");
        detail::write_text_atomic(outdir + "/scene_used.json", to_json(spec).dump(2) + "\n");
    } catch (const Error& e) {
        std::fprintf(stderr, "render: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}

struct FitArgs {
    std::vector<std::string> frames;
    std::string poses_path;
    std::string config_path;
    std::string outdir;
    std::string mask0_path;
    std::vector<std::string> ref_mask_paths;
    std::string dstar_path;
};

inline int cmd_fit(const FitArgs& args) {
    RunConfig cfg;
    detail::PosesFile poses;
    std::vector<Grid> frames;
    Grid mask0, dstar;
    std::vector<Grid> ref_masks;
    try {
        cfg = run_config_from_json(load_json_file(args.config_path));
        poses = detail::read_poses_file(args.poses_path);
        if (args.frames.size() < 2) throw Error("fit: need a target and at least one reference frame");
        if (args.frames.size() > poses.poses.size())
            throw Error("fit: more frames than poses");
        for (const std::string& f : args.frames) frames.push_back(read_image_any(f));
        if (!args.mask0_path.empty()) mask0 = read_pgm(args.mask0_path);
        for (const std::string& m : args.ref_mask_paths) ref_masks.push_back(read_pgm(m));
        if (!args.dstar_path.empty()) dstar = read_pfm(args.dstar_path);
        if (!ref_masks.empty() && ref_masks.size() != args.frames.size() - 1)
            throw Error("fit: need one --ref-mask per reference frame");
    } catch (const Error& e) {
        std::fprintf(stderr, "fit: %s\n", e.what());
        return kExitParse;
    }

    try {
        CameraIntrinsics K = poses.camera;
        RigidPose target_pose = poses.poses[0];
        std::vector<RigidPose> rel_poses;
        for (std::size_t i = 1; i < frames.size(); ++i)
            rel_poses.push_back(poses.poses[i].compose(target_pose.inverse()));

        Grid target = frames[0];
        std::vector<Grid> refs(frames.begin() + 1, frames.end());

        if (cfg.augmentation) {
            const AugmentationSpec& aug = *cfg.augmentation;
            auto scale_crop = [&](const Grid& img) {
                Grid scaled = resize_bilinear(img, scaled_size(K.height, aug.scale),
                                              scaled_size(K.width, aug.scale));
                const int w = aug.crop_w > 0 ? aug.crop_w : scaled.cols();
                const int h = aug.crop_h > 0 ? aug.crop_h : scaled.rows();
                return crop(scaled, static_cast<int>(aug.crop_v0),
                            static_cast<int>(aug.crop_u0), h, w);
            };
            target = scale_crop(target);
            for (Grid& r : refs) r = scale_crop(r);
            CameraIntrinsics K2;
            for (std::size_t i = 0; i < rel_poses.size(); ++i) {
                auto [k2, p2] = apply_augmentation(aug, K, rel_poses[i]);
                K2 = k2;
                rel_poses[i] = p2;
            }
            K = K2;
        }

        FitOptions opt;
        opt.quant = cfg.quant;
        opt.weights = cfg.weights;
        opt.stage = cfg.stage;
        opt.steps = cfg.steps;
        opt.lr = cfg.lr;
        opt.lr_decay = cfg.lr_decay;
        opt.tau_o = cfg.tau_o;
        opt.seed = cfg.seed;
        std::vector<const Grid*> ref_mask_ptrs;
        if (cfg.stage == 2) {
            if (mask0.numel() > 0) opt.mask_target = &mask0;
            for (const Grid& m : ref_masks) ref_mask_ptrs.push_back(&m);
            opt.ref_masks = ref_mask_ptrs;
            if (dstar.numel() > 0) opt.boosted = &dstar;
        }

        FitResult res = fit_depth(target, refs, rel_poses, K, opt);

        std::filesystem::create_directories(args.outdir);
        write_pfm(args.outdir + "/disparity.pfm", res.disparity);
        write_pfm(args.outdir + "/beta.pfm", res.beta);
        const std::size_t hw = static_cast<std::size_t>(res.logits.rows()) * res.logits.cols();
        for (int n = 0; n < res.logits.planes(); ++n) {
            Grid plane(Shape{1, res.logits.rows(), res.logits.cols()});
            for (std::size_t i = 0; i < hw; ++i) plane[i] = res.logits[n * hw + i];
            write_pfm(args.outdir + "/dl/" + detail::frame_name("dl", n, "pfm"), plane);
        }
        std::ostringstream csv;
        csv << "step,loss,l_s,l_ds,l_b,lr\n";
        for (const FitTraceRow& row : res.trace)
            csv << row.step << "," << detail::fmt(row.total) << "," << detail::fmt(row.synthesis)
                << "," << detail::fmt(row.smoothness) << "," << detail::fmt(row.boosting) << ","
                << detail::fmt(row.lr) << "\n";
        detail::write_text_atomic(args.outdir + "/loss.csv", csv.str());
        detail::write_text_atomic(args.outdir + "/config_used.json", to_json(cfg).dump(2) + "\n");
    } catch (const Error& e) {
        std::fprintf(stderr, "fit: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}

struct SynthesizeArgs {
    std::string image_path;
    std::string dl_dir;
    std::string poses_path;
    std::string config_path;
    std::string beta_path;
    int ref_index = 1;
    std::string outdir;
};

inline int cmd_synthesize(const SynthesizeArgs& args) {
    RunConfig cfg;
    detail::PosesFile poses;
    Grid image, logits, beta;
    try {
        cfg = run_config_from_json(load_json_file(args.config_path));
        poses = detail::read_poses_file(args.poses_path);
        image = read_image_any(args.image_path);
        logits = detail::read_pfm_stack(args.dl_dir);
        if (args.ref_index < 1 || args.ref_index >= static_cast<int>(poses.poses.size()))
            throw Error("synthesize: --ref out of range");
        if (!args.beta_path.empty()) beta = read_pfm(args.beta_path);
        else beta = Grid(Shape{1, image.rows(), image.cols()}, 1.0);
    } catch (const Error& e) {
        std::fprintf(stderr, "synthesize: %s\n", e.what());
        return kExitParse;
    }
    try {
        QuantizationConfig quant = cfg.quant;
        quant.levels = logits.planes();
        quant.validate();
        RigidPose rel = poses.poses[args.ref_index].compose(poses.poses[0].inverse());
        Tape t;
        SynthesisResult s =
            synthesize_view(t.input(image), t.input(logits),
                            t.input(quantization_levels_grid(quant, beta)), rel, poses.camera,
                            poses.camera, cfg.tau_o);
        std::filesystem::create_directories(args.outdir);
        const std::string base = args.outdir + "/";
        write_ppm(base + detail::frame_name("synth", args.ref_index, "ppm"), s.image.value());
        write_pfm(base + detail::frame_name("mass", args.ref_index, "pfm"), s.mass.value());
        write_pgm(base + detail::frame_name("occlusion", args.ref_index, "pgm"), s.occlusion);
    } catch (const Error& e) {
        std::fprintf(stderr, "synthesize: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}

inline int cmd_spimo(const std::string& depths_dir, const std::string& config_path,
                     const std::string& out_path) {
    RunConfig cfg;
    Grid volume;
    try {
        cfg = run_config_from_json(load_json_file(config_path));
        volume = detail::read_pfm_stack(depths_dir);
    } catch (const Error& e) {
        std::fprintf(stderr, "spimo: %s\n", e.what());
        return kExitParse;
    }
    try {
        write_pgm(out_path, compute_spimo_mask(volume, cfg.gamma));
    } catch (const Error& e) {
        std::fprintf(stderr, "spimo: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}

inline int cmd_boost(const std::string& full_path, const std::string& down_path,
                     const std::string& up_path, const std::string& config_path,
                     const std::string& out_path) {
    RunConfig cfg;
    BoostTriple triple;
    try {
        cfg = run_config_from_json(load_json_file(config_path));
        triple.full = read_pfm(full_path);
        triple.down = read_pfm(down_path);
        triple.up = read_pfm(up_path);
    } catch (const Error& e) {
        std::fprintf(stderr, "boost: %s\n", e.what());
        return kExitParse;
    }
    try {
        write_pfm(out_path, blend_boosted(triple, cfg.eq8_literal));
    } catch (const Error& e) {
        std::fprintf(stderr, "boost: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}

struct MetricsArgs {
    std::string pred_path;
    std::string gt_path;
    std::string mask_path;
    std::string out_path;
    double cap = 80.0;
    bool median_scale = false;
    bool pred_is_disparity = false;
    bool gt_is_disparity = false;
};

inline int cmd_metrics(const MetricsArgs& args) {
    Grid pred, gt, mask;
    try {
        pred = read_pfm(args.pred_path);
        gt = read_pfm(args.gt_path);
        if (!args.mask_path.empty()) mask = read_pgm(args.mask_path);
    } catch (const Error& e) {
        std::fprintf(stderr, "metrics: %s\n", e.what());
        return kExitParse;
    }
    try {
        auto invert = [](Grid& g) {
            for (std::int64_t i = 0; i < g.numel(); ++i) {
                if (g[i] <= 0.0) throw Error("metrics: non-positive disparity");
                g[i] = 1.0 / g[i];
            }
        };
        if (args.pred_is_disparity) invert(pred);
        if (args.gt_is_disparity) invert(gt);
        EigenMetrics m = eigen_metrics(pred, gt, mask.numel() > 0 ? &mask : nullptr, args.cap,
                                       args.median_scale);
        Json j = detail::metrics_to_json(m);
        std::printf("%s\n", j.dump(2).c_str());
        if (!args.out_path.empty()) detail::write_text_atomic(args.out_path, j.dump(2) + "\n");
    } catch (const Error& e) {
        std::fprintf(stderr, "metrics: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}

inline int cmd_gradcheck(const std::string& size, int levels, double tolerance = 1e-4) {
    int rows = 8, cols = 12;
    try {
        auto x = size.find('x');
        if (x == std::string::npos) throw Error("gradcheck: --size must look like 8x12 (HxW)");
        rows = std::stoi(size.substr(0, x));
        cols = std::stoi(size.substr(x + 1));
        if (rows < 4 || cols < 4) throw Error("gradcheck: size too small");
        if (levels < 2) throw Error("gradcheck: need at least 2 levels");
    } catch (const Error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitParse;
    } catch (const std::exception&) {
        std::fprintf(stderr, "gradcheck: --size must look like 8x12 (HxW)\n");
        return kExitParse;
    }
    try {
        double worst = 0.0;
        bool ok = true;
        for (const NamedGradCheck& check : standard_gradient_checks(rows, cols, levels)) {
            GradCheckReport rep = check.run();
            const bool pass = rep.max_rel_err < tolerance;
            ok = ok && pass;
            worst = std::max(worst, rep.max_rel_err);
            std::printf("%-28s max rel err %.3e  %s\n", check.name.c_str(), rep.max_rel_err,
                        pass ? "ok" : "FAIL");
        }
        std::printf("gradcheck: max rel err %.3e (tolerance %.1e)\n", worst, tolerance);
        if (!ok) return kExitNumerical;
    } catch (const Error& e) {
        std::fprintf(stderr, "gradcheck: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline int dispatch(std::vector<std::string> args) {
    CLI::App app{"adaptive-quantization free-view synthesis and depth fitting"};
    app.require_subcommand(1);

    std::string scene_path, outdir;
    CLI::App* render_cmd = app.add_subcommand("render", "render a procedural scene with ground truth");
    render_cmd->add_option("--scene", scene_path, "scene JSON")->required();
    render_cmd->add_option("--out", outdir, "output directory")->required();

    FitArgs fit_args;
    CLI::App* fit_cmd = app.add_subcommand("fit", "fit disparity logits to frames by gradient descent");
    fit_cmd->add_option("--frames", fit_args.frames, "target frame then references (ppm/pfm)")
        ->required()
        ->expected(-2);
    fit_cmd->add_option("--poses", fit_args.poses_path, "poses JSON")->required();
    fit_cmd->add_option("--config", fit_args.config_path, "run config JSON")->required();
    fit_cmd->add_option("--out", fit_args.outdir, "output directory")->required();
    fit_cmd->add_option("--mask0", fit_args.mask0_path, "target static mask PGM (stage 2)");
    fit_cmd->add_option("--ref-mask", fit_args.ref_mask_paths, "reference static masks PGM (stage 2)");
    fit_cmd->add_option("--dstar", fit_args.dstar_path, "boosted disparity PFM (stage 2)");

    SynthesizeArgs synth_args;
    CLI::App* synth_cmd = app.add_subcommand("synthesize", "synthesize a reference view from logits");
    synth_cmd->add_option("--image", synth_args.image_path, "target image (ppm/pfm)")->required();
    synth_cmd->add_option("--dl", synth_args.dl_dir, "logit volume directory of .pfm planes")->required();
    synth_cmd->add_option("--poses", synth_args.poses_path, "poses JSON")->required();
    synth_cmd->add_option("--config", synth_args.config_path, "run config JSON")->required();
    synth_cmd->add_option("--beta", synth_args.beta_path, "beta map PFM (default: 1 everywhere)");
    synth_cmd->add_option("--ref", synth_args.ref_index, "reference pose index (default 1)");
    synth_cmd->add_option("--out", synth_args.outdir, "output directory")->required();

    std::string depths_dir, spimo_out;
    std::string cfg_path;
    CLI::App* spimo_cmd = app.add_subcommand("spimo", "moving-object mask from a perturbed depth volume");
    spimo_cmd->add_option("--depths", depths_dir, "directory of depth .pfm planes")->required();
    spimo_cmd->add_option("--config", cfg_path, "run config JSON")->required();
    spimo_cmd->add_option("--out", spimo_out, "output mask PGM")->required();

    std::string boost_full, boost_down, boost_up, boost_cfg, boost_out;
    CLI::App* boost_cmd = app.add_subcommand("boost", "blend a multi-scale disparity triple");
    boost_cmd->add_option("--full", boost_full, "full-scale disparity PFM")->required();
    boost_cmd->add_option("--down", boost_down, "reduced-scale disparity PFM (rescaled to full)")->required();
    boost_cmd->add_option("--up", boost_up, "augmented-scale disparity PFM (rescaled to full)")->required();
    boost_cmd->add_option("--config", boost_cfg, "run config JSON")->required();
    boost_cmd->add_option("--out", boost_out, "output PFM")->required();

    MetricsArgs metrics_args;
    CLI::App* metrics_cmd = app.add_subcommand("metrics", "depth error metrics");
    metrics_cmd->add_option("--pred", metrics_args.pred_path, "predicted depth PFM")->required();
    metrics_cmd->add_option("--gt", metrics_args.gt_path, "ground-truth depth PFM")->required();
    metrics_cmd->add_option("--mask", metrics_args.mask_path, "valid-pixel mask PGM");
    metrics_cmd->add_option("--out", metrics_args.out_path, "output JSON path");
    metrics_cmd->add_option("--cap", metrics_args.cap, "depth cap (default 80)");
    metrics_cmd->add_flag("--median-scale", metrics_args.median_scale, "median-scale the prediction");
    metrics_cmd->add_flag("--pred-disparity", metrics_args.pred_is_disparity, "pred file holds disparity");
    metrics_cmd->add_flag("--gt-disparity", metrics_args.gt_is_disparity, "gt file holds disparity");

    std::string size = "8x12";
    int levels = 5;
    CLI::App* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    grad_cmd->add_option("--size", size, "fixture size HxW (default 8x12)");
    grad_cmd->add_option("--levels", levels, "quantization levels (default 5)");

    std::vector<const char*> argv;
    argv.push_back("aqua");
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (render_cmd->parsed()) return cmd_render(scene_path, outdir);
        if (fit_cmd->parsed()) return cmd_fit(fit_args);
        if (synth_cmd->parsed()) return cmd_synthesize(synth_args);
        if (spimo_cmd->parsed()) return cmd_spimo(depths_dir, cfg_path, spimo_out);
        if (boost_cmd->parsed())
            return cmd_boost(boost_full, boost_down, boost_up, boost_cfg, boost_out);
        if (metrics_cmd->parsed()) return cmd_metrics(metrics_args);
        if (grad_cmd->parsed()) return cmd_gradcheck(size, levels);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "aqua: %s\n", e.what());
        return kExitNumerical;
    }
    return kExitUsage;
}

} // namespace aqua::cli
