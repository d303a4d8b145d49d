// condseg: synthesize scenes, fit full iris/pupil ellipses from visible
// masks, evaluate, render and check gradients.
//
// Exit codes: 0 success, 1 I/O, 2 usage, 3 fit-domain error.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "condseg/baseline.hpp"
#include "condseg/fitter.hpp"
#include "condseg/gradcheck.hpp"
#include "condseg/io.hpp"
#include "condseg/metrics.hpp"
#include "condseg/pgm.hpp"
#include "condseg/raster.hpp"
#include "condseg/synth.hpp"

namespace fs = std::filesystem;
using condseg::Error;
using condseg::ErrorCode;
using condseg::io::json;

namespace {

enum Exit { kOk = 0, kIo = 1, kUsage = 2, kDomain = 3 };

int exit_code_for(ErrorCode c) {
    switch (c) {
        case ErrorCode::Io:
        case ErrorCode::Format:
            return kIo;
        case ErrorCode::InvalidArgument:
        case ErrorCode::LengthMismatch:
        case ErrorCode::ShapeMismatch:
            return kUsage;
        default:
            return kDomain;
    }
}

std::uint64_t seed_or_env(const std::optional<std::uint64_t>& seed) {
    if (seed) return *seed;
    if (const char* env = std::getenv("CONDSEG_SEED")) {
        try {
            return std::stoull(env);
        } catch (const std::exception&) {
            throw Error(ErrorCode::InvalidArgument, "CONDSEG_SEED is not an unsigned integer");
        }
    }
    return 0;
}

/// Runs fn(i) for i in [0, n) on `jobs` threads; each index is independent.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

struct FitFlags {
    double tau = condseg::kDefaultTau;
    int iters = 400;
    int restarts = 4;
    std::optional<std::uint64_t> seed;
    bool no_roi = false;
    int roi_size = 200;
    double lr = 0.05;
    int polish = 50;

    condseg::FitConfig config() const {
        condseg::FitConfig c;
        c.tau = tau;
        c.max_iters = iters;
        c.restarts = restarts;
        c.seed = seed_or_env(seed);
        c.use_roi = !no_roi;
        c.roi_size = roi_size;
        c.lr = lr;
        c.polish_iters = polish;
        c.validate();
        return c;
    }

    void add(CLI::App* cmd) {
        cmd->add_option("--tau", tau, "segmap sharpness")->check(CLI::PositiveNumber);
        cmd->add_option("--iters", iters, "max optimizer iterations")->check(CLI::Range(1, 1000000));
        cmd->add_option("--restarts", restarts, "restarts per ellipse")->check(CLI::Range(1, 1000));
        cmd->add_option("--seed", seed, "seed (falls back to CONDSEG_SEED)");
        cmd->add_option("--roi-size", roi_size, "pupil RoI side in pixels")->check(CLI::Range(8, 4096));
        cmd->add_option("--lr", lr, "Adam step size")->check(CLI::PositiveNumber);
        cmd->add_option("--polish", polish, "Levenberg-Marquardt steps after Adam (0 = off)")
            ->check(CLI::Range(0, 10000));
        cmd->add_flag("--no-roi", no_roi, "fit the pupil over the full frame");
    }
};

// synth -------------------------------------------------------------------

struct SynthArgs {
    fs::path out;
    int count = 0;
    int width = 320;
    int height = 240;
    std::optional<std::uint64_t> seed;
    std::optional<double> occlusion_max;
    std::vector<double> occlusion_range;
};

int cmd_synth(const SynthArgs& a) {
    condseg::SynthConfig cfg;
    cfg.width = a.width;
    cfg.height = a.height;
    cfg.seed = seed_or_env(a.seed);
    if (a.occlusion_max) cfg.occlusion_max = *a.occlusion_max;
    if (a.occlusion_range.size() == 2) {
        cfg.occlusion_target = condseg::Range{a.occlusion_range[0], a.occlusion_range[1]};
    }
    cfg.validate();
    for (int i = 0; i < a.count; ++i) {
        const auto scene = condseg::generate_scene(cfg, static_cast<std::uint64_t>(i));
        condseg::io::write_scene(a.out / condseg::io::scene_name(static_cast<std::size_t>(i)), scene);
    }
    std::cout << "wrote " << a.count << " scenes to " << a.out.string() << "\n";
    return kOk;
}

// fit ---------------------------------------------------------------------

json fit_one(const fs::path& scene_dir, const condseg::FitConfig& cfg) {
    const auto masks = condseg::io::read_scene_masks(scene_dir);
    if (const auto stray = condseg::gt_outside_condition(masks.visible_iris_region, masks.eye)) {
        std::cerr << "warning: " << stray << " visible pixels outside the eye region in "
                  << scene_dir.string() << " are ignored\n";
    }
    const auto fit =
        condseg::fit_scene(masks.visible_pupil, masks.visible_iris_region, masks.eye, cfg);
    return condseg::io::to_json(fit, cfg);
}

struct FitArgs {
    fs::path scene;
    fs::path scenes;
    fs::path out;
    int jobs = 1;
    FitFlags flags;
};

int cmd_fit(const FitArgs& a) {
    const condseg::FitConfig cfg = a.flags.config();
    if (!a.scene.empty()) {
        try {
            condseg::io::write_json(a.out, fit_one(a.scene, cfg));
        } catch (const Error& e) {
            const int code = exit_code_for(e.code());
            if (code == kDomain) {
                const std::string doc = condseg::io::dump(condseg::io::error_json(e));
                std::cout << doc;
                condseg::io::write_text(a.out, doc);
            }
            throw;
        }
        std::cout << "wrote " << a.out.string() << "\n";
        return kOk;
    }

    const auto dirs = condseg::io::list_scenes(a.scenes);
    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot create " + a.out.string());
    std::vector<int> codes(dirs.size(), kOk);
    std::mutex log_mu;
    parallel_for(dirs.size(), a.jobs, [&](std::size_t i) {
        const fs::path dst = a.out / (dirs[i].filename().string() + ".json");
        try {
            condseg::io::write_json(dst, fit_one(dirs[i], cfg));
        } catch (const Error& e) {
            codes[i] = exit_code_for(e.code());
            if (codes[i] == kDomain) condseg::io::write_json(dst, condseg::io::error_json(e));
            std::lock_guard lock(log_mu);
            std::cerr << dirs[i].filename().string() << ": " << e.what() << "\n";
        }
    });
    int worst = kOk;
    for (int c : codes) {
        if (c == kIo) return kIo;
        worst = std::max(worst, c);
    }
    std::cout << "fitted " << dirs.size() << " scenes into " << a.out.string() << "\n";
    return worst;
}

// eval --------------------------------------------------------------------

struct EvalArgs {
    fs::path scenes;
    fs::path fits;
    fs::path out;
    std::vector<std::string> baselines;
    std::vector<std::string> ablations;
    int jobs = 1;
    int ransac_iters = 500;
    double ransac_thresh = 1.5;
    FitFlags flags;
};

int cmd_eval(const EvalArgs& a) {
    const auto dirs = condseg::io::list_scenes(a.scenes);
    std::vector<condseg::SceneGroundTruth> scenes;
    std::vector<condseg::FitOutcome> fits;
    for (const auto& d : dirs) {
        const fs::path f = a.fits / (d.filename().string() + ".json");
        if (!fs::exists(f)) {
            throw Error(ErrorCode::LengthMismatch, "no fit for scene " + d.filename().string() +
                                                       " (expected " + f.string() + ")");
        }
        scenes.push_back(condseg::io::read_scene(d));
        const json j = condseg::io::read_json(f);
        condseg::FitOutcome o;
        if (j.contains("error")) {
            o.error = j.at("error").get<std::string>();
        } else {
            o.fit = condseg::io::scene_fit_from_json(j);
        }
        fits.push_back(std::move(o));
    }

    std::vector<condseg::EvalReport> reports;
    reports.push_back(condseg::evaluate(scenes, fits, "condseg"));

    const std::uint64_t seed = seed_or_env(a.flags.seed);
    for (const auto& b : a.baselines) {
        if (b != "ransac") throw Error(ErrorCode::InvalidArgument, "unknown baseline " + b);
        condseg::RansacOptions ro;
        ro.iters = a.ransac_iters;
        ro.inlier_thresh = a.ransac_thresh;
        ro.seed = seed;
        std::vector<condseg::FitOutcome> rf(scenes.size());
        parallel_for(scenes.size(), a.jobs, [&](std::size_t i) {
            try {
                rf[i].fit = condseg::ransac_scene_fit(scenes[i], ro);
            } catch (const Error& e) {
                rf[i].error = std::string(condseg::to_string(e.code()));
            }
        });
        reports.push_back(condseg::evaluate(scenes, rf, "ransac"));
    }
    for (const auto& ab : a.ablations) {
        if (ab != "noroi") throw Error(ErrorCode::InvalidArgument, "unknown ablation " + ab);
        condseg::FitConfig cfg = a.flags.config();
        cfg.use_roi = false;
        std::vector<condseg::FitOutcome> nf(scenes.size());
        parallel_for(scenes.size(), a.jobs, [&](std::size_t i) {
            const auto& s = scenes[i];
            try {
                nf[i].fit = condseg::fit_scene(s.visible_pupil, s.visible_iris_region, s.eye, cfg);
            } catch (const Error& e) {
                nf[i].error = std::string(condseg::to_string(e.code()));
            }
        });
        reports.push_back(condseg::evaluate(scenes, nf, "condseg_noroi"));
    }

    condseg::io::write_json(a.out, condseg::io::report_json(reports));
    std::cout << condseg::io::report_table(reports);
    return kOk;
}

// render ------------------------------------------------------------------

struct RenderArgs {
    fs::path scene;
    fs::path fit;
    std::string out;
    double tau = condseg::kDefaultTau;
};

condseg::pgm::GrayImage distmap_image(const condseg::ScalarField& d) {
    // D = -1 maps to 0, max(D) to 255
    const double hi = condseg::field_max(d);
    const double span = std::max(hi + 1.0, 1e-12);
    condseg::pgm::GrayImage g(d.width(), d.height());
    for (std::size_t i = 0; i < g.size(); ++i) {
        g.pixels()[i] = condseg::pgm::quantize((d.pixels()[i] + 1.0) / span);
    }
    return g;
}

std::size_t transition_band(const condseg::SoftMask& s) {
    std::size_t n = 0;
    for (double v : s.pixels()) n += (v > 0.01 && v < 0.99);
    return n;
}

int cmd_render(const RenderArgs& a) {
    const auto masks = condseg::io::read_scene_masks(a.scene);
    const auto fit = condseg::io::scene_fit_from_json(condseg::io::read_json(a.fit));
    const int w = masks.eye.width();
    const int h = masks.eye.height();
    auto path = [&](const std::string& suffix) { return fs::path(a.out + "_" + suffix + ".pgm"); };
    json summary = {{"schema_version", condseg::io::kSchemaVersion}, {"tau", a.tau}};
    for (const auto& [name, e] :
         {std::pair{std::string("iris"), fit.iris.ellipse}, std::pair{std::string("pupil"), fit.pupil.ellipse}}) {
        const auto d = condseg::distmap(e, w, h);
        const auto s = condseg::segmap(d, a.tau);
        condseg::pgm::write(path(name + "_distmap"), distmap_image(d));
        condseg::pgm::write_soft(path(name + "_segmap"), s);
        condseg::pgm::write_binary(path(name + "_hard"), condseg::hard_mask(e, w, h));
        summary[name] = {{"transition_pixels", transition_band(s)}};
    }
    auto classes = condseg::assemble_classes(fit.iris.ellipse, fit.pupil.ellipse, masks.eye);
    for (auto& v : classes.pixels()) v = static_cast<std::uint8_t>(v * 85);
    condseg::pgm::write(path("overlay"), classes);
    std::cout << condseg::io::dump(summary);
    return kOk;
}

// gradcheck ---------------------------------------------------------------

struct GradArgs {
    int trials = 50;
    std::optional<std::uint64_t> seed;
    std::optional<int> flip_sign;
    fs::path out;
};

int cmd_gradcheck(const GradArgs& a) {
    condseg::GradCheckOptions o;
    o.trials = a.trials;
    o.seed = seed_or_env(a.seed);
    o.flip_sign = a.flip_sign;
    const auto rep = condseg::run_gradcheck(o);
    static const char* names[5] = {"x0", "y0", "a", "b", "theta"};
    json per = json::object();
    for (int k = 0; k < 5; ++k) per[names[k]] = rep.max_rel_error[k];
    const json doc = {{"schema_version", condseg::io::kSchemaVersion},
                      {"trials", a.trials},
                      {"frames", {"image", "roi"}},
                      {"tolerance", rep.tolerance},
                      {"max_rel_error", per},
                      {"passed", rep.passed}};
    std::cout << condseg::io::dump(doc);
    if (!a.out.empty()) condseg::io::write_json(a.out, doc);
    return rep.passed ? kOk : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"condseg: full iris/pupil ellipses from visible-only masks"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth = app.add_subcommand("synth", "generate synthetic scene bundles");
    synth->add_option("--out", sa.out, "output directory")->required();
    synth->add_option("--count", sa.count, "number of scenes")->required()->check(CLI::Range(1, 10000000));
    synth->add_option("--width", sa.width, "frame width")->check(CLI::Range(16, 100000));
    synth->add_option("--height", sa.height, "frame height")->check(CLI::Range(16, 100000));
    synth->add_option("--seed", sa.seed, "seed (falls back to CONDSEG_SEED)");
    synth->add_option("--occlusion-max", sa.occlusion_max, "resample scenes above this iris occlusion")
        ->check(CLI::Range(0.0, 1.0));
    synth->add_option("--occlusion-range", sa.occlusion_range, "target iris occlusion range LO HI")
        ->expected(2)
        ->check(CLI::Range(0.0, 1.0));

    FitArgs fa;
    auto* fit = app.add_subcommand("fit", "fit full iris and pupil ellipses");
    auto* fit_scene = fit->add_option("--scene", fa.scene, "scene bundle directory");
    auto* fit_scenes = fit->add_option("--scenes", fa.scenes, "directory of scene bundles");
    fit_scene->excludes(fit_scenes);
    fit->add_option("--out", fa.out, "fit JSON (or output directory with --scenes)")->required();
    fit->add_option("--jobs", fa.jobs, "parallel scenes")->check(CLI::Range(1, 1024));
    fa.flags.add(fit);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "evaluate fits against ground truth");
    eval->add_option("--scenes", ea.scenes, "directory of scene bundles")->required();
    eval->add_option("--fits", ea.fits, "directory of <scene>.json fits")->required();
    eval->add_option("--out", ea.out, "report JSON")->required();
    eval->add_option("--baseline", ea.baselines, "extra baseline column (ransac)");
    eval->add_option("--ablation", ea.ablations, "extra ablation row (noroi)");
    eval->add_option("--jobs", ea.jobs, "parallel scenes")->check(CLI::Range(1, 1024));
    eval->add_option("--ransac-iters", ea.ransac_iters, "RANSAC iterations")->check(CLI::Range(1, 10000000));
    eval->add_option("--ransac-thresh", ea.ransac_thresh, "RANSAC inlier threshold (px)")
        ->check(CLI::PositiveNumber);
    ea.flags.add(eval);

    RenderArgs ra;
    auto* render = app.add_subcommand("render", "write distmap/segmap/mask images for a fit");
    render->add_option("--scene", ra.scene, "scene bundle directory")->required();
    render->add_option("--fit", ra.fit, "fit JSON")->required();
    render->add_option("--out", ra.out, "output path prefix")->required();
    render->add_option("--tau", ra.tau, "segmap sharpness")->check(CLI::PositiveNumber);

    GradArgs ga;
    auto* grad = app.add_subcommand("gradcheck", "compare analytic and finite-difference gradients");
    grad->add_option("--trials", ga.trials, "random configurations per frame type")->check(CLI::Range(1, 100000));
    grad->add_option("--seed", ga.seed, "seed (falls back to CONDSEG_SEED)");
    grad->add_option("--flip-sign", ga.flip_sign, "negate one analytic partial (0-4), for testing")
        ->check(CLI::Range(0, 4));
    grad->add_option("--out", ga.out, "also write the report here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*synth) return cmd_synth(sa);
        if (*fit) {
            if (fa.scene.empty() == fa.scenes.empty()) {
                std::cerr << "fit: exactly one of --scene or --scenes is required\n";
                return kUsage;
            }
            return cmd_fit(fa);
        }
        if (*eval) return cmd_eval(ea);
        if (*render) return cmd_render(ra);
        if (*grad) return cmd_gradcheck(ga);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e.code());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    }
    return kUsage;
}
