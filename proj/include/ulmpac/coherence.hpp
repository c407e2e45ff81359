#pragma once

#include "ulmpac/aberration.hpp"
#include "ulmpac/beamform.hpp"

namespace ulmpac {

struct CoherenceEstimatorConfig {
    int upsample_factor = 8;     // lag-grid refinement for the correlation peak
    double smoothing_span = 0.15;  // fraction of aperture for robust local regression
    int max_lag = 6;             // realignment-grid samples

    void validate() const;
};

// Robust local regression (local linear, tricube distance weights, bisquare
// residual reweighting). `weights` marks unusable points with 0.
std::vector<double> robust_local_regression(const std::vector<double>& y,
                                            const std::vector<double>& weights,
                                            double span, int iterations = 5);

// Per-element delay profile from adjacent-element cross-correlation of one
// (frame, angle) slice, cumulative-summed, before smoothing. `valid` flags
// elements whose pair correlations had usable energy.
std::vector<double> raw_delay_profile(const RealignedPatch& patch,
                                      std::size_t frame, std::size_t angle,
                                      const ProbeGeometry& probe,
                                      const CoherenceEstimatorConfig& config,
                                      std::vector<double>* valid = nullptr);

// Cross-correlation phase-delay estimation across elements: adjacent-element
// correlation peaks (cubic-interpolated, phase-refined), cumulative sum,
// robust smoothing, averaged over frames and angles, piston removed.
AberrationFunction estimate_coherence_based(const RealignedPatch& patch,
                                            const ProbeGeometry& probe,
                                            const CoherenceEstimatorConfig& config);

AberrationFunction average_track_estimates(const std::vector<AberrationFunction>& estimates);

}  // namespace ulmpac
