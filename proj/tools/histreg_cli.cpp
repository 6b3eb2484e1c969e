// histreg command line front end. Every subcommand prints a one-line JSON
// summary on stdout; failures print {"status":"error",...} and exit nonzero.

#include "histreg/brs.hpp"
#include "histreg/cam.hpp"
#include "histreg/error.hpp"
#include "histreg/features.hpp"
#include "histreg/image_io.hpp"
#include "histreg/parallel.hpp"
#include "histreg/phantom.hpp"
#include "histreg/pipeline.hpp"
#include "histreg/register.hpp"
#include "histreg/standardize.hpp"

#include <CLI11.hpp>
#ifdef HISTREG_VENDORED_JSON
#include <json.hpp>
#else
#include <nlohmann/json.hpp>
#endif

#include <cstdio>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace histreg;

namespace {

constexpr int kExitRuntime = 1;

RunConfig config_from(const std::string& path, unsigned threads) {
    RunConfig cfg = path.empty() ? RunConfig{} : load_config(path);
    if (threads > 0) cfg.threads = threads;
    cfg.validate();
    return cfg;
}

std::vector<Image> read_stack(const StackManifest& m, unsigned threads) {
    std::vector<Image> out(m.entries.size());
    parallel_for(out.size(), threads, [&](std::size_t k) { out[k] = read_image(m.entries[k].path); });
    return out;
}

StandardScale scale_for(const RunConfig& cfg, const std::vector<Image>& stack, json& summary) {
    if (cfg.scale_file) return load_scale(*cfg.scale_file);
    json warnings = json::array();
    const auto s = train_scale(stack, cfg.scale, [&](const std::string& w) { warnings.push_back(w); });
    if (!warnings.empty()) summary["warnings"] = warnings;
    return s;
}

json affine_json(const Affine2D& t) {
    const auto p = t.params();
    return json(std::vector<double>(p.begin(), p.end()));
}

json cam_json(const CamResult& r) {
    return {{"mean", r.mean}, {"std", r.stddev}, {"available", r.available}};
}

std::string slice_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "slice_%04d", index);
    return buf;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kToolVersion) + ": serial section registration and stack reconstruction"};
    app.require_subcommand(1);
    app.footer("Config file keys (key = value, # comments) and their defaults:\n\n" + default_config_text());
    app.set_version_flag("--version", std::string(kToolVersion));

    json summary;
    std::function<void()> action;
    std::string config_path;
    unsigned threads = 0;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "Run config file")->check(CLI::ExistingFile);
        sub->add_option("-j,--threads", threads, "Worker threads (overrides config)")->check(CLI::Range(1u, 1024u));
    };

    // train-std
    std::string manifest_path, out_path;
    auto* train = app.add_subcommand("train-std", "Learn the standard scale from a stack");
    train->add_option("-m,--manifest", manifest_path, "Stack manifest")->required()->check(CLI::ExistingFile);
    train->add_option("-o,--out", out_path, "Scale file to write")->required();
    add_common(train);
    train->callback([&] {
        action = [&] {
            const RunConfig cfg = config_from(config_path, threads);
            const auto m = StackManifest::load(manifest_path);
            json warnings = json::array();
            const auto scale = train_scale(read_stack(m, cfg.threads), cfg.scale,
                                           [&](const std::string& w) { warnings.push_back(w); });
            save_scale(out_path, scale);
            summary = {{"s1", scale.s1}, {"s2", scale.s2}, {"mu_s", scale.mu_s}, {"pc1", scale.pc1},
                       {"pc2", scale.pc2}, {"images", m.entries.size()}, {"warnings", warnings}, {"output", out_path}};
        };
    });

    // standardize
    std::string scale_path, out_dir;
    auto* stdz = app.add_subcommand("standardize", "Map every slice of a stack onto the standard scale");
    stdz->add_option("-m,--manifest", manifest_path, "Stack manifest")->required()->check(CLI::ExistingFile);
    stdz->add_option("-s,--scale", scale_path, "Trained scale file (default: train on the stack)")
        ->check(CLI::ExistingFile);
    stdz->add_option("-o,--out", out_dir, "Output directory")->required();
    add_common(stdz);
    stdz->callback([&] {
        action = [&] {
            RunConfig cfg = config_from(config_path, threads);
            if (!scale_path.empty()) cfg.scale_file = scale_path;
            const auto m = StackManifest::load(manifest_path);
            const auto stack = read_stack(m, cfg.threads);
            const auto scale = scale_for(cfg, stack, summary);
            fs::create_directories(out_dir);
            StackManifest out;
            for (std::size_t k = 0; k < stack.size(); ++k) out.entries.push_back({m.entries[k].index, slice_name(m.entries[k].index) + ".pgm"});
            parallel_for(stack.size(), cfg.threads, [&](std::size_t k) {
                write_pgm(fs::path(out_dir) / out.entries[k].path, standardize_image(stack[k], scale));
            });
            out.save(fs::path(out_dir) / "manifest.txt");
            save_scale(fs::path(out_dir) / "standard_scale.txt", scale);
            summary["slices"] = stack.size();
            summary["mu_s"] = scale.mu_s;
            summary["output"] = out_dir;
        };
    });

    // features
    std::string input_path;
    int radius = kDefaultEdgenessRadius;
    auto* feat = app.add_subcommand("features", "Edgeness map and entropy of one image");
    feat->add_option("-i,--input", input_path, "Input image (.pgm/.png)")->required()->check(CLI::ExistingFile);
    feat->add_option("-o,--out", out_path, "Edgeness map PGM (a .scale sidecar is written next to it)");
    feat->add_option("-r,--radius", radius, "Edgeness radius r_f")->check(CLI::Range(1, 64));
    feat->callback([&] {
        action = [&] {
            const Image img = read_image(input_path);
            const auto map = edgeness_map(img, radius);
            if (!out_path.empty()) export_feature_map(out_path, map);
            double mx = 0;
            for (double v : map.values) mx = std::max(mx, v);
            summary = {{"width", img.width()}, {"height", img.height()}, {"entropy", entropy(img)},
                       {"radius", radius}, {"max_edgeness", mx}};
            if (!out_path.empty()) summary["output"] = out_path;
        };
    });

    // select-brs
    std::string csv_path, mode_name;
    bool raw = false;
    auto* brs = app.add_subcommand("select-brs", "Pick the best reference slice of every subvolume");
    brs->add_option("-m,--manifest", manifest_path, "Stack manifest")->required()->check(CLI::ExistingFile);
    brs->add_option("-o,--out", csv_path, "BRS report CSV");
    brs->add_option("--mode", mode_name, "eq7 or max_entropy (overrides config)");
    brs->add_flag("--raw", raw, "Skip standardization");
    add_common(brs);
    brs->callback([&] {
        action = [&] {
            RunConfig cfg = config_from(config_path, threads);
            if (!mode_name.empty()) cfg.brs_mode = parse_brs_mode(mode_name);
            const auto m = StackManifest::load(manifest_path);
            auto stack = read_stack(m, cfg.threads);
            RegistrationConfig reg = cfg.registration;
            if (!raw) {
                const auto scale = scale_for(cfg, stack, summary);
                parallel_for(stack.size(), cfg.threads, [&](std::size_t k) { stack[k] = standardize_image(stack[k], scale); });
                reg.restandardize = scale;
            }
            const auto part = partition_stack(static_cast<int>(stack.size()), cfg.subvolume_size);
            std::vector<BrsReport> reports;
            json chosen = json::array();
            for (std::size_t s = 0; s < part.ranges.size(); ++s) {
                const auto& r = part.ranges[s];
                std::vector<Image> sub(stack.begin() + (r.first - 1), stack.begin() + r.last);
                reports.push_back(select_brs(sub, r.first, reg, cfg.brs_mode, static_cast<int>(s) + 1, cfg.threads));
                chosen.push_back({{"subvolume", s + 1},
                                  {"first", r.first},
                                  {"last", r.last},
                                  {"brs", reports.back().chosen},
                                  {"max_entropy_slice", reports.back().max_entropy_slice},
                                  {"warnings", reports.back().warnings}});
            }
            if (!csv_path.empty()) {
                std::ofstream out(csv_path);
                write_brs_csv(out, reports);
                summary["output"] = csv_path;
            }
            summary["mode"] = to_string(cfg.brs_mode);
            summary["subvolumes"] = chosen;
        };
    });

    // register-pair
    std::string source_path, target_path, reg_mode = "affine", warped_path, log_path, init_path;
    auto* pair = app.add_subcommand("register-pair", "Register a source image onto a target image");
    pair->add_option("-s,--source", source_path, "Source image")->required()->check(CLI::ExistingFile);
    pair->add_option("-t,--target", target_path, "Target image")->required()->check(CLI::ExistingFile);
    pair->add_option("--mode", reg_mode, "rigid, affine or lags")->check(CLI::IsMember({"rigid", "affine", "lags"}));
    pair->add_option("-o,--out", out_path, "Transform output (affine text, or .laf field for lags)")->required();
    pair->add_option("--init", init_path, "Initial affine file (first entry is used)")->check(CLI::ExistingFile);
    pair->add_option("-w,--warped", warped_path, "Write the warped source image");
    pair->add_option("--log", log_path, "Iteration log CSV");
    add_common(pair);
    pair->callback([&] {
        action = [&] {
            const RunConfig cfg = config_from(config_path, threads);
            const Image source = read_image(source_path);
            const Image target = read_image(target_path);
            std::optional<Affine2D> init;
            if (!init_path.empty()) {
                const auto items = load_affines(init_path);
                if (items.empty()) throw Error("no affine in " + init_path);
                init = items.front().transform;
            }
            RegistrationResult res;
            if (reg_mode == "lags") {
                const Affine2D start = init ? *init : register_affine(source, target, cfg.registration).affine();
                res = register_lags(source, target, start, cfg.registration);
                save_field(out_path, res.field());
                if (!warped_path.empty()) write_image(warped_path, warp(source, res.field()));
            } else {
                const Affine2D start = init.value_or(Affine2D::identity());
                res = reg_mode == "rigid" ? register_rigid(source, target, cfg.registration, start)
                                          : register_affine(source, target, cfg.registration, start);
                save_affines(out_path, {{2, 1, res.affine()}});
                if (!warped_path.empty()) write_image(warped_path, warp(source, res.affine()));
                summary["transform"] = affine_json(res.affine());
            }
            if (!log_path.empty()) {
                std::ofstream log(log_path);
                write_registration_log(log, res);
            }
            summary["mode"] = reg_mode;
            summary["final_mse"] = res.final_mse;
            summary["iterations"] = res.iterations_used;
            summary["converged"] = res.converged;
            summary["output"] = out_path;
        };
    });

    // reconstruct
    auto* recon = app.add_subcommand("reconstruct", "Full stack reconstruction");
    recon->add_option("-m,--manifest", manifest_path, "Stack manifest")->required()->check(CLI::ExistingFile);
    recon->add_option("-o,--out", out_dir, "Run directory")->required();
    add_common(recon);
    recon->callback([&] {
        action = [&] {
            const RunConfig cfg = config_from(config_path, threads);
            const auto s = run_reconstruct(StackManifest::load(manifest_path), cfg, out_dir);
            json subs = json::array();
            for (std::size_t k = 0; k < s.brs.size(); ++k)
                subs.push_back({{"first", s.partition.ranges[k].first},
                                {"last", s.partition.ranges[k].last},
                                {"brs", s.brs[k].chosen}});
            json timings = json::object();
            for (const auto& t : s.timings) timings[t.stage] = t.seconds;
            summary = {{"output", out_dir},
                       {"config_hash", cfg.hash()},
                       {"subvolumes", subs},
                       {"cam",
                        {{"unregistered", cam_json(s.cam_unregistered)},
                         {"rigid", cam_json(s.cam_rigid)},
                         {"affine", cam_json(s.cam_affine)},
                         {"lags", cam_json(s.cam_lags)}}},
                       {"timings_s", timings}};
        };
    });

    // evaluate-cam
    auto* eval = app.add_subcommand("evaluate-cam", "CAM of a stack as given");
    eval->add_option("-m,--manifest", manifest_path, "Stack manifest")->required()->check(CLI::ExistingFile);
    eval->add_option("-o,--out", out_dir, "Output directory (reports/cam.csv, reports/cam_summary.txt)")->required();
    add_common(eval);
    eval->callback([&] {
        action = [&] {
            const RunConfig cfg = config_from(config_path, threads);
            const auto r = run_evaluate(StackManifest::load(manifest_path), cfg, out_dir);
            summary = cam_json(r);
            summary["output"] = out_dir;
        };
    });

    // phantom
    PhantomSpec ps;
    int size = 0;
    std::vector<std::string> distortions;
    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic stack with ground truth");
    phantom->add_option("-o,--out", out_dir, "Output directory")->required();
    phantom->add_option("--seed", ps.seed, "Random seed")->capture_default_str();
    phantom->add_option("--slices", ps.slice_count, "Slice count")->capture_default_str();
    phantom->add_option("--size", size, "Square edge length (sets width and height)");
    phantom->add_option("--width", ps.width, "Width")->capture_default_str();
    phantom->add_option("--height", ps.height, "Height")->capture_default_str();
    phantom->add_option("--rotation", ps.random_rotation_deg, "Max |rotation| in degrees")->capture_default_str();
    phantom->add_option("--translation", ps.random_translation, "Max |translation| per axis")->capture_default_str();
    phantom->add_option("--scale", ps.random_scale, "Scale in [1-s, 1+s]")->capture_default_str();
    phantom->add_option("--shear", ps.random_shear, "Max |shear|")->capture_default_str();
    phantom->add_option("--elastic-amplitude", ps.random_elastic_amplitude, "Max elastic amplitude (px)")
        ->capture_default_str();
    phantom->add_option("--elastic-period", ps.random_elastic_period, "Elastic wave period (px)")->capture_default_str();
    phantom->add_option("--gain-min", ps.random_gain_min, "Minimum gain")->capture_default_str();
    phantom->add_option("--gain-max", ps.random_gain_max, "Maximum gain")->capture_default_str();
    phantom->add_option("--bias", ps.random_bias, "Max |bias|")->capture_default_str();
    phantom->add_option("--noise", ps.acquisition_noise, "Acquisition noise sigma")->capture_default_str();
    phantom->add_option("--edge-width", ps.edge_width, "Width of the logistic anatomy edges (px)")->capture_default_str();
    phantom->add_option("--distort", distortions, "slice:kind:magnitude with kind tear|hole|noise (repeatable)");
    phantom->callback([&] {
        action = [&] {
            if (size > 0) ps.width = ps.height = size;
            for (const auto& d : distortions) {
                const auto a = d.find(':'), b = d.rfind(':');
                if (a == std::string::npos || a == b) throw Error("bad --distort '" + d + "'");
                try {
                    ps.distortions.push_back({std::stoi(d.substr(0, a)), parse_distortion_kind(d.substr(a + 1, b - a - 1)),
                                              std::stod(d.substr(b + 1))});
                } catch (const std::logic_error&) {
                    throw Error("bad --distort '" + d + "'");
                }
            }
            write_phantom(out_dir, generate_phantom(ps));
            summary = {{"output", out_dir}, {"slices", ps.slice_count}, {"width", ps.width},
                       {"height", ps.height}, {"seed", ps.seed}};
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        if (code != 0) std::cout << json{{"status", "error"}, {"message", e.what()}}.dump() << '\n';
        return code;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        action();
    } catch (const std::exception& e) {
        std::cerr << "histreg " << command << ": " << e.what() << '\n';
        std::cout << json{{"command", command}, {"status", "error"}, {"message", e.what()}}.dump() << '\n';
        return kExitRuntime;
    }
    summary["command"] = command;
    summary["status"] = "ok";
    summary["version"] = kToolVersion;
    std::cout << summary.dump() << '\n';
    return 0;
}
