#pragma once

#include "histreg/image.hpp"
#include "histreg/standardize.hpp"
#include "histreg/transform.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace histreg {

struct RegistrationConfig {
    int pyramid_levels = 3;
    int max_iterations = 50;        ///< per pyramid level
    double convergence_tol = 1e-4;  ///< relative MSE change
    int edgeness_radius = 3;
    int lags_block_size = 32;       ///< finest-level block edge in pixels
    double lags_smoothness = 10.0;  ///< lambda
    int lags_outer_iterations = 5;  ///< per pyramid level
    double min_overlap = 0.25;      ///< fraction of target pixels

    /// When set, each warped source is re-standardized onto this scale using
    /// landmarks refreshed at the start of every pyramid level.
    std::optional<StandardScale> restandardize;

    void validate() const;
};

/// One accepted or rejected optimizer step, for the diagnostics CSV.
struct IterationRecord {
    int level = 0;
    int iteration = 0;
    double mse = 0;
    bool accepted = false;
};

struct RegistrationResult {
    std::variant<Affine2D, LocalAffineField> transform;
    double final_mse = 0;
    int iterations_used = 0;
    bool converged = false;
    std::vector<IterationRecord> log;

    const Affine2D& affine() const { return std::get<Affine2D>(transform); }
    const LocalAffineField& field() const { return std::get<LocalAffineField>(transform); }
};

/// Affine (6 DOF) Gauss-Newton registration in edgeness space. The returned
/// transform maps source coordinates onto target coordinates, so
/// warp(source, result.affine()) overlays the target. Smaller images are padded.
RegistrationResult register_affine(const Image& source, const Image& target, const RegistrationConfig& cfg);
RegistrationResult register_affine(const Image& source, const Image& target, const RegistrationConfig& cfg,
                                   const Affine2D& init);

/// Rotation about the image centre plus translation, same objective.
RegistrationResult register_rigid(const Image& source, const Image& target, const RegistrationConfig& cfg);
RegistrationResult register_rigid(const Image& source, const Image& target, const RegistrationConfig& cfg,
                                  const Affine2D& init);

/// Locally affine, globally smooth refinement in image space, starting from
/// `init` (a source->target affine). The result is a pull field for warp().
RegistrationResult register_lags(const Image& source, const Image& target, const Affine2D& init,
                                 const RegistrationConfig& cfg);

/// Image-space MSE between warp(source, t) and target over in-bounds pixels.
double image_space_mse(const Image& source, const Image& target, const Affine2D& t);
double image_space_mse(const Image& source, const Image& target, const LocalAffineField& field);

/// CSV with header `level,iteration,mse,accepted`.
void write_registration_log(std::ostream& os, const RegistrationResult& result);

} // namespace histreg
