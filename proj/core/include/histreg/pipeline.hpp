#pragma once

#include "histreg/brs.hpp"
#include "histreg/cam.hpp"
#include "histreg/register.hpp"
#include "histreg/standardize.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace histreg {

inline constexpr const char* kToolVersion = "histreg 0.3.0";

/// Line-oriented `index<TAB>path` list; indices contiguous from 1. Relative
/// paths resolve against the manifest's directory.
struct StackManifest {
    struct Entry {
        int index = 0;
        std::filesystem::path path;
    };
    std::vector<Entry> entries;

    static StackManifest load(const std::filesystem::path& path, bool check_files = true);
    void save(const std::filesystem::path& path) const;
    void validate(bool check_files) const;
};

struct RunConfig {
    StandardScale scale;                       ///< mu_s is learned unless scale_file is set
    std::optional<std::filesystem::path> scale_file;
    RegistrationConfig registration;
    int subvolume_size = kDefaultSubvolumeSize;
    BrsMode brs_mode = BrsMode::eq7;
    CamConfig cam;
    unsigned threads = 1;

    void validate() const;
    /// Flat `key = value` text, one key per line, in a fixed order.
    std::string to_text() const;
    /// Stable FNV-1a hash of to_text(), hex encoded.
    std::string hash() const;
};

/// Parses `key = value` lines (`#` comments) over the defaults; unknown keys throw.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
/// Documented defaults, suitable for `--help` and as a template file.
std::string default_config_text();

struct StageTiming {
    std::string stage;
    double seconds = 0;
};

struct ReconstructionSummary {
    std::filesystem::path output_dir;
    StandardScale scale;
    SubvolumePartition partition;
    std::vector<BrsReport> brs;
    CamResult cam_unregistered, cam_rigid, cam_affine, cam_lags;
    std::vector<StageTiming> timings;
};

/// Full reconstruction. Writes aligned/{rigid,affine,lags}/, transforms/,
/// reports/ and config.snapshot under `output_dir`. On failure an
/// `incomplete` marker naming the failing stage is left behind and the
/// error is rethrown tagged with the stage.
ReconstructionSummary run_reconstruct(const StackManifest& manifest, const RunConfig& cfg,
                                      const std::filesystem::path& output_dir);

/// CAM evaluation of a stack as-is; writes reports/cam.csv and reports/cam_summary.txt.
CamResult run_evaluate(const StackManifest& manifest, const RunConfig& cfg, const std::filesystem::path& output_dir);

/// Percent drop of `value` relative to `baseline` (positive when value is lower).
double percent_drop(double baseline, double value);

} // namespace histreg
