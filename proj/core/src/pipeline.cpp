#include "histreg/pipeline.hpp"

#include "histreg/error.hpp"
#include "histreg/image_io.hpp"
#include "histreg/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <tuple>
#include <sstream>

namespace histreg {

namespace fs = std::filesystem;

// Manifest ------------------------------------------------------------------

StackManifest StackManifest::load(const fs::path& path, bool check_files) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open manifest " + path.string());
    StackManifest m;
    const fs::path base = path.parent_path();
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        std::istringstream ls(line);
        Entry e;
        std::string rest;
        if (!(ls >> e.index)) throw Error("manifest line " + std::to_string(line_no) + ": expected index");
        std::getline(ls, rest);
        const auto b = rest.find_first_not_of(" \t");
        if (b == std::string::npos) throw Error("manifest line " + std::to_string(line_no) + ": missing path");
        rest = rest.substr(b);
        while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\t')) rest.pop_back();
        e.path = rest;
        if (e.path.is_relative()) e.path = base / e.path;
        m.entries.push_back(std::move(e));
    }
    m.validate(check_files);
    return m;
}

void StackManifest::save(const fs::path& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write manifest " + path.string());
    for (const auto& e : entries) out << e.index << '\t' << e.path.generic_string() << '\n';
}

void StackManifest::validate(bool check_files) const {
    if (entries.empty()) throw Error("manifest is empty");
    for (std::size_t k = 0; k < entries.size(); ++k) {
        if (entries[k].index != static_cast<int>(k) + 1)
            throw Error("manifest indices must be contiguous from 1 (found " + std::to_string(entries[k].index) +
                        " at position " + std::to_string(k + 1) + ")");
        if (check_files && !fs::exists(entries[k].path))
            throw Error("missing file " + entries[k].path.string());
    }
}

// Config --------------------------------------------------------------------

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw Error("config key " + key + ": bad number '" + v + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) throw Error("config key " + key + ": bad integer '" + v + "'");
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Key {
    const char* name;
    const char* help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

#define HR_DOUBLE(NAME, HELP, FIELD)                                                                     \
    Key {                                                                                                \
        NAME, HELP, [](const RunConfig& c) { return format_double(c.FIELD); },                            \
            [](RunConfig& c, const std::string& v) { c.FIELD = parse_double(NAME, v); }                   \
    }
#define HR_INT(NAME, HELP, FIELD)                                                                        \
    Key {                                                                                                \
        NAME, HELP, [](const RunConfig& c) { return std::to_string(c.FIELD); },                           \
            [](RunConfig& c, const std::string& v) { c.FIELD = parse_int(NAME, v); }                      \
    }

const std::vector<Key>& keys() {
    static const std::vector<Key> k = {
        HR_DOUBLE("scale.s1", "standard scale minimum", scale.s1),
        HR_DOUBLE("scale.s2", "standard scale maximum", scale.s2),
        HR_DOUBLE("scale.pc1", "lower percentile of the intensity of interest", scale.pc1),
        HR_DOUBLE("scale.pc2", "upper percentile of the intensity of interest", scale.pc2),
        Key{"scale.file", "trained scale file; empty trains mu_s on the input stack",
            [](const RunConfig& c) { return c.scale_file ? c.scale_file->generic_string() : std::string(); },
            [](RunConfig& c, const std::string& v) {
                if (v.empty())
                    c.scale_file.reset();
                else
                    c.scale_file = v;
            }},
        HR_INT("registration.pyramid_levels", "pyramid levels", registration.pyramid_levels),
        HR_INT("registration.max_iterations", "iterations per pyramid level", registration.max_iterations),
        HR_DOUBLE("registration.convergence_tol", "relative MSE change threshold", registration.convergence_tol),
        HR_INT("registration.edgeness_radius", "edgeness disk radius r_f", registration.edgeness_radius),
        HR_INT("registration.lags_block_size", "LAGS block edge at the finest level", registration.lags_block_size),
        HR_DOUBLE("registration.lags_smoothness", "LAGS smoothness weight lambda", registration.lags_smoothness),
        HR_INT("registration.lags_outer_iterations", "LAGS iterations per level", registration.lags_outer_iterations),
        HR_DOUBLE("registration.min_overlap", "minimum overlap fraction", registration.min_overlap),
        HR_INT("subvolume_size", "target slices per subvolume", subvolume_size),
        Key{"brs_mode", "eq7 or max_entropy",
            [](const RunConfig& c) { return to_string(c.brs_mode); },
            [](RunConfig& c, const std::string& v) { c.brs_mode = parse_brs_mode(v); }},
        HR_INT("cam.control_grid_spacing", "CAM control point spacing", cam.control_grid_spacing),
        HR_INT("cam.match_window", "CAM block size (odd)", cam.match_window),
        HR_INT("cam.search_radius", "CAM search radius", cam.search_radius),
        HR_DOUBLE("cam.tau", "CAM confidence threshold", cam.tau),
        Key{"threads", "worker threads",
            [](const RunConfig& c) { return std::to_string(c.threads); },
            [](RunConfig& c, const std::string& v) {
                const int t = parse_int("threads", v);
                if (t < 1) throw Error("config key threads: must be >= 1");
                c.threads = static_cast<unsigned>(t);
            }},
    };
    return k;
}

#undef HR_DOUBLE
#undef HR_INT

} // namespace

void RunConfig::validate() const {
    StandardScale probe = scale;
    probe.mu_s = 0.5 * (scale.s1 + scale.s2);
    probe.validate();
    registration.validate();
    cam.validate();
    if (subvolume_size < 2) throw Error("subvolume_size must be >= 2");
    if (threads < 1) throw Error("threads must be >= 1");
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
    return out;
}

std::string RunConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto& ks = keys();
        const auto it = std::find_if(ks.begin(), ks.end(), [&](const Key& k) { return key == k.name; });
        if (it == ks.end()) throw Error("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        it->set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string default_config_text() {
    const RunConfig def;
    std::string out;
    for (const auto& k : keys()) out += "# " + std::string(k.help) + "\n" + k.name + " = " + k.get(def) + "\n";
    return out;
}

double percent_drop(double baseline, double value) {
    if (baseline == 0) return 0;
    return 100.0 * (baseline - value) / baseline;
}

// Reconstruction --------------------------------------------------------------

namespace {

std::string slice_name(int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "slice_%04d", index);
    return buf;
}

std::vector<Image> load_stack(const StackManifest& manifest, unsigned threads) {
    std::vector<Image> out(manifest.entries.size());
    parallel_for(out.size(), threads, [&](std::size_t k) { out[k] = read_image(manifest.entries[k].path); });
    for (const auto& img : out)
        if (img.width() != out.front().width() || img.height() != out.front().height())
            throw Error("stack slices differ in size");
    return out;
}

// Re-standardization after a warp: only in-domain pixels are remapped, using
// the landmarks of the image before warping.
Image restandardize(const WarpResult& w, const LandmarkSet& lm, const StandardScale& scale) {
    Image mapped = apply_standard_mapping(w.image, lm, scale);
    auto px = mapped.mutable_pixels();
    for (std::size_t i = 0; i < px.size(); ++i)
        if (!w.mask[i]) px[i] = 0;
    return mapped;
}

// Field whose pull at x equals field.pull(r^-1 x), i.e. the field followed by
// the push transform r.
LocalAffineField compose_push(const LocalAffineField& field, const Affine2D& r) {
    const Affine2D rinv = invert(r);
    LocalAffineField out(field.width(), field.height());
    const int w = field.width(), h = field.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Vec2 p = rinv(x, y);
            const double px = std::clamp(p.x(), 0.0, static_cast<double>(w - 1));
            const double py = std::clamp(p.y(), 0.0, static_cast<double>(h - 1));
            const int x0 = std::min(static_cast<int>(px), w - 2 < 0 ? 0 : w - 2);
            const int y0 = std::min(static_cast<int>(py), h - 2 < 0 ? 0 : h - 2);
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const double fx = px - x0, fy = py - y0;
            std::array<double, 6> q{};
            for (int k = 0; k < 6; ++k)
                q[k] = (1 - fx) * (1 - fy) * field.param(k, x0, y0) + fx * (1 - fy) * field.param(k, x1, y0) +
                       (1 - fx) * fy * field.param(k, x0, y1) + fx * fy * field.param(k, x1, y1);
            out.set(x, y, compose(Affine2D::from_params(q), rinv));
        }
    }
    return out;
}

struct PairRecord {
    PairRecord(std::string v, int t, int f) : variant(std::move(v)), to(t), from(f) {}
    std::string variant;
    int to = 0, from = 0;
    double final_mse = 0;
    int iterations = 0;
    bool converged = false;
    std::string note;
};

struct Variant {
    explicit Variant(std::string n) : name(std::move(n)) {}
    std::string name;
    std::vector<Image> aligned;
    std::vector<Affine2D> global;            // source -> reconstruction frame (affine/rigid variants)
    std::vector<LocalAffineField> fields;    // pull fields (lags variant)
    TransformChain chain;
    std::vector<LabeledAffine> inter;        // inter-subvolume transforms
};

class StageRunner {
public:
    StageRunner(fs::path dir, std::vector<StageTiming>& timings) : dir_(std::move(dir)), timings_(timings) {}

    template <class Fn>
    void run(const std::string& stage, Fn&& fn) {
        {
            std::ofstream marker(dir_ / "incomplete");
            marker << "stage " << stage << " running\n";
        }
        const auto t0 = std::chrono::steady_clock::now();
        try {
            fn();
        } catch (const std::exception& e) {
            std::ofstream marker(dir_ / "incomplete");
            marker << "stage " << stage << " failed: " << e.what() << '\n';
            throw Error("stage " + stage + ": " + e.what());
        }
        const auto t1 = std::chrono::steady_clock::now();
        timings_.push_back({stage, std::chrono::duration<double>(t1 - t0).count()});
    }

private:
    fs::path dir_;
    std::vector<StageTiming>& timings_;
};

void write_aligned(const fs::path& dir, const std::vector<Image>& images) {
    fs::create_directories(dir);
    StackManifest m;
    for (std::size_t k = 0; k < images.size(); ++k) {
        const int idx = static_cast<int>(k) + 1;
        const std::string name = slice_name(idx) + ".pgm";
        write_pgm(dir / name, images[k]);
        m.entries.push_back({idx, name});
    }
    m.save(dir / "manifest.txt");
}

void write_cam_file(const fs::path& path, const CamResult& r) {
    std::ofstream out(path);
    write_cam_csv(out, r);
}

} // namespace

ReconstructionSummary run_reconstruct(const StackManifest& manifest, const RunConfig& cfg, const fs::path& output_dir) {
    cfg.validate();
    manifest.validate(true);
    fs::create_directories(output_dir);
    {
        std::ofstream snap(output_dir / "config.snapshot");
        snap << "# " << kToolVersion << "\n# config hash " << cfg.hash() << '\n' << cfg.to_text();
    }

    ReconstructionSummary summary;
    summary.output_dir = output_dir;
    StageRunner runner(output_dir, summary.timings);
    const unsigned threads = cfg.threads;
    const int n = static_cast<int>(manifest.entries.size());
    std::vector<std::string> warnings;

    std::vector<Image> raw, std_slices;
    std::vector<LandmarkSet> landmarks(static_cast<std::size_t>(n));
    runner.run("standardize", [&] {
        raw = load_stack(manifest, threads);
        if (cfg.scale_file) {
            summary.scale = load_scale(*cfg.scale_file);
        } else {
            summary.scale = train_scale(raw, cfg.scale, [&](const std::string& w) { warnings.push_back(w); });
        }
        std_slices.resize(raw.size());
        parallel_for(raw.size(), threads, [&](std::size_t k) {
            auto s = standardize_with_landmarks(raw[k], summary.scale);
            std_slices[k] = std::move(s.image);
        });
        // Landmarks of the standardized slices drive every later re-standardization.
        parallel_for(raw.size(), threads,
                     [&](std::size_t k) { landmarks[k] = extract_landmarks(std_slices[k], summary.scale); });
        raw.clear();
    });

    runner.run("partition", [&] { summary.partition = partition_stack(n, cfg.subvolume_size); });

    RegistrationConfig reg = cfg.registration;
    reg.restandardize = summary.scale;

    runner.run("select-brs", [&] {
        for (std::size_t k = 0; k < summary.partition.ranges.size(); ++k) {
            const auto& r = summary.partition.ranges[k];
            std::vector<Image> sub(std_slices.begin() + (r.first - 1), std_slices.begin() + r.last);
            summary.brs.push_back(select_brs(sub, r.first, reg, cfg.brs_mode, static_cast<int>(k) + 1, threads));
        }
    });

    Variant rigid("rigid"), affine("affine"), lags("lags");
    std::vector<PairRecord> records;
    std::mutex record_mutex;

    auto register_chain = [&](Variant& v, bool is_rigid) {
        v.global.assign(static_cast<std::size_t>(n), Affine2D::identity());
        v.aligned.assign(static_cast<std::size_t>(n), Image());
        for (std::size_t s = 0; s < summary.partition.ranges.size(); ++s) {
            const auto& r = summary.partition.ranges[s];
            const int b = summary.brs[s].chosen;
            std::vector<int> movers;
            for (int i = r.first; i <= r.last; ++i)
                if (i != b) movers.push_back(i);
            std::vector<Affine2D> links(movers.size());
            parallel_for(movers.size(), threads, [&](std::size_t k) {
                const int i = movers[k];
                const int to = i < b ? i + 1 : i - 1;
                PairRecord rec(v.name, to, i);
                try {
                    const auto res = is_rigid ? register_rigid(std_slices[i - 1], std_slices[to - 1], reg)
                                              : register_affine(std_slices[i - 1], std_slices[to - 1], reg);
                    links[k] = res.affine();
                    rec.final_mse = res.final_mse;
                    rec.iterations = res.iterations_used;
                    rec.converged = res.converged;
                    if (!plausible(links[k])) {
                        links[k] = Affine2D::identity();
                        rec.note = "implausible; identity used";
                    }
                } catch (const Error& e) {
                    links[k] = Affine2D::identity();
                    rec.note = std::string(e.what()) + "; identity used";
                }
                std::lock_guard lock(record_mutex);
                records.push_back(rec);
            });
            for (std::size_t k = 0; k < movers.size(); ++k) {
                const int i = movers[k];
                v.chain.set_link(i < b ? i + 1 : i - 1, i, links[k]);
            }
            for (int i = r.first; i <= r.last; ++i)
                v.global[static_cast<std::size_t>(i - 1)] = i == b ? Affine2D::identity() : v.chain.resolve(i, b);
        }
    };

    auto warp_all = [&](Variant& v) {
        parallel_for(static_cast<std::size_t>(n), threads, [&](std::size_t k) {
            v.aligned[k] = restandardize(warp_with_mask(std_slices[k], v.global[k]), landmarks[k], summary.scale);
        });
    };

    runner.run("register-affine", [&] {
        register_chain(affine, false);
        warp_all(affine);
    });
    runner.run("register-rigid", [&] {
        register_chain(rigid, true);
        warp_all(rigid);
    });

    runner.run("register-lags", [&] {
        lags.fields.assign(static_cast<std::size_t>(n), LocalAffineField());
        lags.aligned.assign(static_cast<std::size_t>(n), Image());
        for (std::size_t s = 0; s < summary.partition.ranges.size(); ++s) {
            const auto& r = summary.partition.ranges[s];
            const int b = summary.brs[s].chosen;
            const std::size_t bk = static_cast<std::size_t>(b - 1);
            lags.fields[bk] = LocalAffineField(std_slices[bk].width(), std_slices[bk].height());
            lags.aligned[bk] = affine.aligned[bk];
            // The two sides of the reference are independent; each propagates outward.
            parallel_for(2, threads, [&](std::size_t side) {
                const int step = side == 0 ? -1 : 1;
                for (int i = b + step; i >= r.first && i <= r.last; i += step) {
                    const std::size_t k = static_cast<std::size_t>(i - 1);
                    const Image& target = lags.aligned[static_cast<std::size_t>(i - step - 1)];
                    PairRecord rec("lags", i - step, i);
                    try {
                        auto res = register_lags(std_slices[k], target, affine.global[k], reg);
                        lags.fields[k] = res.field();
                        rec.final_mse = res.final_mse;
                        rec.iterations = res.iterations_used;
                        rec.converged = res.converged;
                    } catch (const Error& e) {
                        const Affine2D inv = invert(affine.global[k]);
                        lags.fields[k] = LocalAffineField(std_slices[k].width(), std_slices[k].height(), inv);
                        rec.note = std::string(e.what()) + "; affine used";
                    }
                    lags.aligned[k] =
                        restandardize(warp_with_mask(std_slices[k], lags.fields[k]), landmarks[k], summary.scale);
                    std::lock_guard lock(record_mutex);
                    records.push_back(rec);
                }
            });
        }
    });

    runner.run("inter-subvolume", [&] {
        for (Variant* v : {&rigid, &affine, &lags}) {
            for (std::size_t s = 1; s < summary.partition.ranges.size(); ++s) {
                const auto& prev = summary.partition.ranges[s - 1];
                const auto& cur = summary.partition.ranges[s];
                const std::size_t a = static_cast<std::size_t>(prev.last - 1);
                const std::size_t c = static_cast<std::size_t>(cur.first - 1);
                Affine2D rt = Affine2D::identity();
                try {
                    rt = register_rigid(v->aligned[c], v->aligned[a], reg).affine();
                    if (!plausible(rt)) rt = Affine2D::identity();
                } catch (const Error& e) {
                    warnings.push_back(v->name + " inter-subvolume " + std::to_string(s + 1) + ": " + e.what());
                }
                v->inter.push_back({prev.last, cur.first, rt});
                std::vector<std::size_t> members;
                for (int i = cur.first; i <= cur.last; ++i) members.push_back(static_cast<std::size_t>(i - 1));
                parallel_for(members.size(), threads, [&](std::size_t m) {
                    const std::size_t k = members[m];
                    if (v == &lags) {
                        v->fields[k] = compose_push(v->fields[k], rt);
                        v->aligned[k] =
                            restandardize(warp_with_mask(std_slices[k], v->fields[k]), landmarks[k], summary.scale);
                    } else {
                        v->global[k] = compose(rt, v->global[k]);
                        v->aligned[k] =
                            restandardize(warp_with_mask(std_slices[k], v->global[k]), landmarks[k], summary.scale);
                    }
                });
            }
        }
    });

    runner.run("evaluate-cam", [&] {
        summary.cam_unregistered = cam_stack(std_slices, cfg.cam, threads);
        summary.cam_rigid = cam_stack(rigid.aligned, cfg.cam, threads);
        summary.cam_affine = cam_stack(affine.aligned, cfg.cam, threads);
        summary.cam_lags = cam_stack(lags.aligned, cfg.cam, threads);
    });

    runner.run("write-outputs", [&] {
        write_aligned(output_dir / "aligned" / "rigid", rigid.aligned);
        write_aligned(output_dir / "aligned" / "affine", affine.aligned);
        write_aligned(output_dir / "aligned" / "lags", lags.aligned);

        const fs::path tdir = output_dir / "transforms";
        fs::create_directories(tdir / "lags");
        save_scale(tdir / "standard_scale.txt", summary.scale);
        const int frame = summary.brs.front().chosen;
        for (Variant* v : {&rigid, &affine}) {
            std::vector<LabeledAffine> globals, links;
            for (int i = 1; i <= n; ++i) globals.push_back({frame, i, v->global[static_cast<std::size_t>(i - 1)]});
            for (const auto& [key, t] : v->chain.links()) links.push_back({key.first, key.second, t});
            save_affines(tdir / (v->name + ".txt"), globals);
            save_affines(tdir / (v->name + "_links.txt"), links);
        }
        for (Variant* v : {&rigid, &affine, &lags}) save_affines(tdir / ("inter_subvolume_" + v->name + ".txt"), v->inter);
        for (int i = 1; i <= n; ++i)
            save_field(tdir / "lags" / (slice_name(i) + ".laf"), lags.fields[static_cast<std::size_t>(i - 1)]);

        const fs::path rdir = output_dir / "reports";
        fs::create_directories(rdir);
        {
            std::ofstream out(rdir / "brs.csv");
            write_brs_csv(out, summary.brs);
        }
        write_cam_file(rdir / "cam_unregistered.csv", summary.cam_unregistered);
        write_cam_file(rdir / "cam_rigid.csv", summary.cam_rigid);
        write_cam_file(rdir / "cam_affine.csv", summary.cam_affine);
        write_cam_file(rdir / "cam_lags.csv", summary.cam_lags);
        {
            std::sort(records.begin(), records.end(), [](const PairRecord& x, const PairRecord& y) {
                return std::tie(x.variant, x.from, x.to) < std::tie(y.variant, y.from, y.to);
            });
            std::ofstream out(rdir / "registration.csv");
            out << "variant,to,from,final_mse,iterations,converged,note\n" << std::setprecision(10);
            for (const auto& r : records)
                out << r.variant << ',' << r.to << ',' << r.from << ',' << r.final_mse << ',' << r.iterations << ','
                    << (r.converged ? 1 : 0) << ',' << r.note << '\n';
        }
    });

    // The run report is the only output carrying wall-clock times.
    {
        std::ofstream out(output_dir / "reports" / "summary.txt");
        out << kToolVersion << "\nconfig hash " << cfg.hash() << "\nslices " << n << "\nstandard scale s1 "
            << summary.scale.s1 << " mu_s " << summary.scale.mu_s << " s2 " << summary.scale.s2 << '\n';
        for (std::size_t s = 0; s < summary.partition.ranges.size(); ++s)
            out << "subvolume " << s + 1 << " slices " << summary.partition.ranges[s].first << "-"
                << summary.partition.ranges[s].last << " brs " << summary.brs[s].chosen << '\n';
        out << "cam_variant=midway_residual\ncam_std=population\n" << std::fixed << std::setprecision(4);
        auto line = [&](const char* name, const CamResult& r) {
            out << "cam " << name << " mean " << r.mean << " std " << r.stddev << " available " << r.available
                << " drop_vs_unregistered_pct " << percent_drop(summary.cam_unregistered.mean, r.mean)
                << " drop_vs_rigid_pct " << percent_drop(summary.cam_rigid.mean, r.mean) << '\n';
        };
        line("unregistered", summary.cam_unregistered);
        line("rigid", summary.cam_rigid);
        line("affine", summary.cam_affine);
        line("lags", summary.cam_lags);
        for (const auto& t : summary.timings) out << "time " << t.stage << ' ' << t.seconds << " s\n";
        for (const auto& w : warnings) out << "warning " << w << '\n';
    }
    fs::remove(output_dir / "incomplete");
    return summary;
}

CamResult run_evaluate(const StackManifest& manifest, const RunConfig& cfg, const fs::path& output_dir) {
    cfg.validate();
    manifest.validate(true);
    const auto slices = load_stack(manifest, cfg.threads);
    const CamResult r = cam_stack(slices, cfg.cam, cfg.threads);
    fs::create_directories(output_dir / "reports");
    write_cam_file(output_dir / "reports" / "cam.csv", r);
    std::ofstream out(output_dir / "reports" / "cam_summary.txt");
    out << "cam_variant=midway_residual\ncam_std=population\n"
        << std::fixed << std::setprecision(4) << "slices " << slices.size() << "\nmean " << r.mean << "\nstd "
        << r.stddev << "\navailable " << r.available << '\n';
    return r;
}

} // namespace histreg
