#pragma once

// On-disk formats: Ellipse JSON, scene bundles (three PGM masks + gt.json),
// SceneFit JSON and evaluation reports. Every document carries
// "schema_version": 1.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "condseg/error.hpp"
#include "condseg/fitter.hpp"
#include "condseg/geometry.hpp"
#include "condseg/metrics.hpp"
#include "condseg/pgm.hpp"
#include "condseg/synth.hpp"

namespace condseg::io {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

inline json to_json(const Ellipse5D& e) {
    const Ellipse5D c = canonicalize(e);
    return {{"cx", c.x0}, {"cy", c.y0}, {"a", c.a}, {"b", c.b}, {"theta_rad", c.theta}};
}

inline Ellipse5D ellipse_from_json(const json& j) {
    try {
        Ellipse5D e{j.at("cx").get<double>(), j.at("cy").get<double>(), j.at("a").get<double>(),
                    j.at("b").get<double>(), j.at("theta_rad").get<double>()};
        require_valid(e);
        return e;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::Format, std::string("bad ellipse object: ") + ex.what());
    }
}

inline json to_json(const BoundingSquare& s) { return {{"x1", s.x1}, {"y1", s.y1}, {"s", s.s}}; }

inline json to_json(const FitResult& r) {
    return {{"ellipse", to_json(r.ellipse)},
            {"final_loss", r.final_loss},
            {"iters_used", r.iters_used},
            {"restart_index", r.restart_index},
            {"converged", r.converged}};
}

inline FitResult fit_result_from_json(const json& j) {
    FitResult r;
    r.ellipse = ellipse_from_json(j.at("ellipse"));
    r.final_loss = j.value("final_loss", 0.0);
    r.iters_used = j.value("iters_used", 0);
    r.restart_index = j.value("restart_index", 0);
    r.converged = j.value("converged", false);
    return r;
}

inline json config_json(const FitConfig& c) {
    return {{"tau", c.tau},         {"delta", c.delta},       {"eps_iris", c.eps_iris},
            {"eps_pupil", c.eps_pupil}, {"roi_size", c.roi_size}, {"max_iters", c.max_iters},
            {"lr", c.lr},           {"restarts", c.restarts}, {"tol_rel_loss", c.tol_rel_loss},
            {"polish_iters", c.polish_iters}, {"seed", c.seed}, {"use_roi", c.use_roi}};
}

inline json to_json(const SceneFit& f, const FitConfig& cfg) {
    return {{"schema_version", kSchemaVersion},
            {"tau", cfg.tau},
            {"iris", to_json(f.iris)},
            {"pupil", to_json(f.pupil)},
            {"roi", to_json(f.roi)},
            {"roi_clipped", f.roi_clipped},
            {"config", config_json(cfg)}};
}

inline SceneFit scene_fit_from_json(const json& j) {
    try {
        SceneFit f;
        f.iris = fit_result_from_json(j.at("iris"));
        f.pupil = fit_result_from_json(j.at("pupil"));
        const json& r = j.at("roi");
        f.roi = {r.at("x1").get<double>(), r.at("y1").get<double>(), r.at("s").get<double>()};
        f.roi_clipped = j.value("roi_clipped", false);
        return f;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::Format, std::string("bad fit document: ") + ex.what());
    }
}

inline json error_json(const Error& e) {
    return {{"schema_version", kSchemaVersion},
            {"error", std::string(to_string(e.code()))},
            {"message", e.what()}};
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    f << text;
    if (!f) throw Error(ErrorCode::Io, "write failed: " + path.string());
}

inline void write_json(const fs::path& path, const json& j) { write_text(path, dump(j)); }

inline json read_json(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return json::parse(f);
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::Format, path.string() + ": " + ex.what());
    }
}

// Scene bundle ------------------------------------------------------------

inline constexpr const char* kEyeFile = "eye.pgm";
inline constexpr const char* kVisPupilFile = "vis_pupil.pgm";
inline constexpr const char* kVisIrisFile = "vis_iris_region.pgm";
inline constexpr const char* kGtFile = "gt.json";

inline void write_scene(const fs::path& dir, const SceneGroundTruth& s) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + dir.string() + ": " + ec.message());
    pgm::write_binary(dir / kEyeFile, s.eye);
    pgm::write_binary(dir / kVisPupilFile, s.visible_pupil);
    pgm::write_binary(dir / kVisIrisFile, s.visible_iris_region);
    write_json(dir / kGtFile, {{"schema_version", kSchemaVersion},
                               {"width", s.eye.width()},
                               {"height", s.eye.height()},
                               {"iris", to_json(s.iris)},
                               {"pupil", to_json(s.pupil)},
                               {"occlusion_fraction", s.occlusion_fraction},
                               {"openness", s.openness}});
}

/// Masks of a bundle; gt.json is optional (fitting needs only the masks).
struct SceneMasks {
    BinaryMask eye;
    BinaryMask visible_pupil;
    BinaryMask visible_iris_region;
};

inline SceneMasks read_scene_masks(const fs::path& dir) {
    SceneMasks m;
    m.eye = pgm::read_binary(dir / kEyeFile);
    m.visible_pupil = pgm::read_binary(dir / kVisPupilFile);
    m.visible_iris_region = pgm::read_binary(dir / kVisIrisFile);
    if (!m.eye.same_shape(m.visible_pupil) || !m.eye.same_shape(m.visible_iris_region)) {
        throw Error(ErrorCode::ShapeMismatch, "masks in " + dir.string() + " differ in size");
    }
    return m;
}

inline SceneGroundTruth read_scene(const fs::path& dir) {
    SceneMasks m = read_scene_masks(dir);
    const json gt = read_json(dir / kGtFile);
    SceneGroundTruth s;
    try {
        s.iris = ellipse_from_json(gt.at("iris"));
        s.pupil = ellipse_from_json(gt.at("pupil"));
        s.occlusion_fraction = gt.value("occlusion_fraction", 0.0);
        s.openness = gt.value("openness", 1.0);
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::Format, (dir / kGtFile).string() + ": " + ex.what());
    }
    s.eye = std::move(m.eye);
    s.visible_pupil = std::move(m.visible_pupil);
    s.visible_iris_region = std::move(m.visible_iris_region);
    return s;
}

inline bool is_scene_dir(const fs::path& dir) { return fs::exists(dir / kEyeFile); }

/// Scene bundle directories under `root`, sorted by name.
inline std::vector<fs::path> list_scenes(const fs::path& root) {
    if (!fs::is_directory(root)) throw Error(ErrorCode::Io, "not a directory: " + root.string());
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory() && is_scene_dir(entry.path())) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::string scene_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "scene_%05zu", index);
    return buf;
}

// Reports -------------------------------------------------------------------

inline json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const SceneEval& s) {
    json j = {{"index", s.index}, {"valid", s.valid}};
    if (!s.valid) {
        j["error"] = s.error;
        return j;
    }
    j["iou_pupil"] = s.iou_pupil;
    j["iou_iris_region"] = s.iou_iris_region;
    j["iou_eye"] = s.iou_eye;
    j["iou_full_pupil"] = s.iou_full_pupil;
    j["iou_full_iris"] = s.iou_full_iris;
    j["err_loc_pupil"] = s.err_loc_pupil;
    j["err_loc_iris"] = s.err_loc_iris;
    j["err_angle_pupil"] = s.err_angle_pupil ? json(*s.err_angle_pupil) : json(nullptr);
    j["err_angle_iris"] = s.err_angle_iris ? json(*s.err_angle_iris) : json(nullptr);
    return j;
}

inline json to_json(const EvalReport& r, bool per_scene = true) {
    json j = {{"method", r.method},
              {"n_scenes", r.n_scenes},
              {"n_valid", r.n_valid},
              {"n_failed", r.n_failed},
              {"iou_pupil", number_or_null(r.iou_pupil)},
              {"iou_iris_region", number_or_null(r.iou_iris_region)},
              {"iou_eye", number_or_null(r.iou_eye)},
              {"err_loc_pupil_median", number_or_null(r.err_loc_pupil_median)},
              {"err_loc_iris_median", number_or_null(r.err_loc_iris_median)},
              {"iou_full_pupil", number_or_null(r.iou_full_pupil)},
              {"iou_full_iris", number_or_null(r.iou_full_iris)}};
    if (per_scene) {
        json arr = json::array();
        for (const auto& s : r.scenes) arr.push_back(to_json(s));
        j["scenes"] = std::move(arr);
    }
    return j;
}

inline json report_json(const std::vector<EvalReport>& methods, const json& extra = json::object()) {
    json j = {{"schema_version", kSchemaVersion}};
    json arr = json::array();
    for (const auto& m : methods) arr.push_back(to_json(m));
    j["methods"] = std::move(arr);
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

/// Aligned plain-text table, one row per method.
inline std::string report_table(const std::vector<EvalReport>& methods) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "method" << std::right << std::setw(8) << "valid"
       << std::setw(10) << "pupil" << std::setw(13) << "iris-region" << std::setw(12)
       << "eye-region" << std::setw(14) << "err-loc_p" << std::setw(14) << "err-loc_i" << "\n";
    os << std::fixed;
    for (const auto& m : methods) {
        os << std::left << std::setw(16) << m.method << std::right << std::setw(8) << m.n_valid
           << std::setprecision(2) << std::setw(10) << 100 * m.iou_pupil << std::setw(13)
           << 100 * m.iou_iris_region << std::setw(12) << 100 * m.iou_eye << std::setprecision(3)
           << std::setw(14) << m.err_loc_pupil_median << std::setw(14) << m.err_loc_iris_median
           << "\n";
    }
    return os.str();
}

}  // namespace condseg::io
