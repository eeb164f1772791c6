#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "aqua/camera.hpp"
#include "aqua/losses.hpp"
#include "aqua/quantize.hpp"
#include "aqua/scene.hpp"
#include "aqua/spimo.hpp"

namespace aqua {

using Json = nlohmann::json;

inline Json load_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open: " + path);
    try {
        return Json::parse(is);
    } catch (const std::exception& e) {
        throw Error("json parse error in " + path + ": " + e.what());
    }
}

inline void save_json_file(const std::string& path, const Json& j) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw Error("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Camera / pose / augmentation
// ---------------------------------------------------------------------------

inline Json to_json(const CameraIntrinsics& K) {
    return Json{{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx},
                {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
}

inline CameraIntrinsics camera_from_json(const Json& j) {
    CameraIntrinsics K;
    try {
        K.fx = j.at("fx").get<double>();
        K.fy = j.at("fy").get<double>();
        K.cx = j.at("cx").get<double>();
        K.cy = j.at("cy").get<double>();
        K.width = j.at("width").get<int>();
        K.height = j.at("height").get<int>();
    } catch (const std::exception& e) {
        throw Error(std::string("camera json: ") + e.what());
    }
    K.validate();
    return K;
}

inline Json to_json(const RigidPose& p) {
    Json j;
    j["R"] = Json::array();
    for (double v : p.R.m) j["R"].push_back(v);
    j["t"] = Json::array({p.t.x, p.t.y, p.t.z});
    return j;
}

inline RigidPose pose_from_json(const Json& j) {
    RigidPose p;
    try {
        const auto& r = j.at("R");
        if (r.size() != 9) throw Error("pose json: R must have 9 entries (row-major)");
        for (int i = 0; i < 9; ++i) p.R.m[i] = r.at(i).get<double>();
        const auto& t = j.at("t");
        if (t.size() != 3) throw Error("pose json: t must have 3 entries");
        p.t = {t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()};
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(std::string("pose json: ") + e.what());
    }
    p.validate();
    return p;
}

inline Json to_json(const AugmentationSpec& a) {
    return Json{{"scale", a.scale},
                {"crop", Json::array({a.crop_u0, a.crop_v0, a.crop_w, a.crop_h})},
                {"mode", to_string(a.mode)}};
}

inline AugmentationSpec augmentation_from_json(const Json& j) {
    AugmentationSpec a;
    try {
        a.scale = j.at("scale").get<double>();
        if (j.contains("crop")) {
            const auto& c = j.at("crop");
            if (c.size() != 4) throw Error("augmentation json: crop must be [u0, v0, w, h]");
            a.crop_u0 = c.at(0).get<double>();
            a.crop_v0 = c.at(1).get<double>();
            a.crop_w = c.at(2).get<int>();
            a.crop_h = c.at(3).get<int>();
        }
        a.mode = translation_mode_from_string(j.at("mode").get<std::string>());
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(std::string("augmentation json: ") + e.what());
    }
    return a;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Everything a run needs; serialized next to every output for
/// reproducibility.
struct RunConfig {
    QuantizationConfig quant;
    LossWeights weights;
    std::optional<AugmentationSpec> augmentation;
    SpimoOffsets offsets = SpimoOffsets::defaults();
    double gamma = 0.03;
    double tau_o = 0.5;
    bool eq8_literal = false;
    std::uint64_t seed = 0;
    int steps = 500;
    double lr = 2.0e4;
    double lr_decay = 0.999;
    int stage = 1;

    void validate() const {
        quant.validate();
        weights.validate();
        offsets.validate();
        if (gamma <= 0.0) throw Error("config: gamma must be positive");
        if (tau_o < 0.0) throw Error("config: tau_o must be non-negative");
        if (steps < 1) throw Error("config: steps must be at least 1");
        if (lr <= 0.0) throw Error("config: lr must be positive");
        if (lr_decay <= 0.0 || lr_decay > 1.0) throw Error("config: lr_decay must be in (0, 1]");
        if (stage != 1 && stage != 2) throw Error("config: stage must be 1 or 2");
    }
};

inline Json to_json(const RunConfig& c) {
    Json j{{"levels", c.quant.levels},
           {"d_min", c.quant.d_min},
           {"d_max", c.quant.d_max},
           {"weights",
            Json{{"alpha_ds", c.weights.alpha_ds},
                 {"alpha_b", c.weights.alpha_b},
                 {"alpha_p", c.weights.alpha_p}}},
           {"offsets", Json{{"u", c.offsets.u}, {"v", c.offsets.v}}},
           {"gamma", c.gamma},
           {"tau_o", c.tau_o},
           {"eq8_literal", c.eq8_literal},
           {"seed", c.seed},
           {"steps", c.steps},
           {"lr", c.lr},
           {"lr_decay", c.lr_decay},
           {"stage", c.stage}};
    if (c.augmentation) j["augmentation"] = to_json(*c.augmentation);
    return j;
}

inline RunConfig run_config_from_json(const Json& j) {
    RunConfig c;
    try {
        if (j.contains("levels")) c.quant.levels = j.at("levels").get<int>();
        if (j.contains("d_min")) c.quant.d_min = j.at("d_min").get<double>();
        if (j.contains("d_max")) c.quant.d_max = j.at("d_max").get<double>();
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            if (w.contains("alpha_ds")) c.weights.alpha_ds = w.at("alpha_ds").get<double>();
            if (w.contains("alpha_b")) c.weights.alpha_b = w.at("alpha_b").get<double>();
            if (w.contains("alpha_p")) c.weights.alpha_p = w.at("alpha_p").get<double>();
        }
        if (j.contains("offsets")) {
            c.offsets.u = j.at("offsets").at("u").get<std::vector<double>>();
            c.offsets.v = j.at("offsets").at("v").get<std::vector<double>>();
        }
        if (j.contains("gamma")) c.gamma = j.at("gamma").get<double>();
        if (j.contains("tau_o")) c.tau_o = j.at("tau_o").get<double>();
        if (j.contains("eq8_literal")) c.eq8_literal = j.at("eq8_literal").get<bool>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("steps")) c.steps = j.at("steps").get<int>();
        if (j.contains("lr")) c.lr = j.at("lr").get<double>();
        if (j.contains("lr_decay")) c.lr_decay = j.at("lr_decay").get<double>();
        if (j.contains("stage")) c.stage = j.at("stage").get<int>();
        if (j.contains("augmentation")) c.augmentation = augmentation_from_json(j.at("augmentation"));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(std::string("run config json: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Scene description
// ---------------------------------------------------------------------------

namespace detail {

inline PixelRect rect_from_json(const Json& j) {
    if (j.size() != 4) throw Error("scene json: rect must be [u0, v0, w, h]");
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
            j.at(3).get<double>()};
}

} // namespace detail

inline SceneSpec scene_from_json(const Json& j) {
    SceneSpec s;
    try {
        s.camera = camera_from_json(j.at("camera"));
        if (j.contains("background")) {
            const auto& b = j.at("background");
            s.background_depth = b.at("depth").get<double>();
            if (b.contains("seed")) s.background_seed = b.at("seed").get<std::uint64_t>();
            if (b.contains("freq")) s.background_freq = b.at("freq").get<double>();
        }
        for (const auto& lj : j.value("layers", Json::array())) {
            SceneLayer l;
            l.depth = lj.at("depth").get<double>();
            l.rect = detail::rect_from_json(lj.at("rect"));
            if (lj.contains("seed")) l.texture_seed = lj.at("seed").get<std::uint64_t>();
            if (lj.contains("freq")) l.texture_freq = lj.at("freq").get<double>();
            s.layers.push_back(l);
        }
        for (const auto& mj : j.value("movers", Json::array())) {
            SceneMover m;
            m.depth = mj.at("depth").get<double>();
            m.rect = detail::rect_from_json(mj.at("rect"));
            const auto& v = mj.at("velocity");
            m.vel_u = v.at(0).get<double>();
            m.vel_v = v.at(1).get<double>();
            m.velocity_in_pixels = mj.value("velocity_units", std::string("pixels")) == "pixels";
            if (mj.contains("seed")) m.texture_seed = mj.at("seed").get<std::uint64_t>();
            if (mj.contains("freq")) m.texture_freq = mj.at("freq").get<double>();
            s.movers.push_back(m);
        }
        for (const auto& pj : j.at("poses")) s.poses.push_back(pose_from_json(pj));
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(std::string("scene json: ") + e.what());
    }
    s.validate();
    return s;
}

inline Json to_json(const SceneSpec& s) {
    Json j;
    j["camera"] = to_json(s.camera);
    j["background"] =
        Json{{"depth", s.background_depth}, {"seed", s.background_seed}, {"freq", s.background_freq}};
    j["layers"] = Json::array();
    for (const SceneLayer& l : s.layers)
        j["layers"].push_back(Json{{"depth", l.depth},
                                   {"rect", Json::array({l.rect.u0, l.rect.v0, l.rect.w, l.rect.h})},
                                   {"seed", l.texture_seed},
                                   {"freq", l.texture_freq}});
    j["movers"] = Json::array();
    for (const SceneMover& m : s.movers)
        j["movers"].push_back(Json{{"depth", m.depth},
                                   {"rect", Json::array({m.rect.u0, m.rect.v0, m.rect.w, m.rect.h})},
                                   {"velocity", Json::array({m.vel_u, m.vel_v})},
                                   {"velocity_units", m.velocity_in_pixels ? "pixels" : "world"},
                                   {"seed", m.texture_seed},
                                   {"freq", m.texture_freq}});
    j["poses"] = Json::array();
    for (const RigidPose& p : s.poses) j["poses"].push_back(to_json(p));
    return j;
}

} // namespace aqua
