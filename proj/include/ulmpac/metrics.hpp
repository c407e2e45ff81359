#pragma once

#include "ulmpac/aberration.hpp"
#include "ulmpac/beamform.hpp"
#include "ulmpac/ulm.hpp"

namespace ulmpac {

struct CoherenceCurve {
    std::vector<double> r;  // R(m), m = 0..Ne-1
    double auc = 0.0;       // trapezoid over lag normalized to [0, 1]
};

struct FrcResult {
    std::vector<double> frc;        // per ring
    std::vector<double> threshold;  // half-bit curve per ring
    std::vector<std::size_t> ring_counts;
    double resolution = 0.0;  // m; 0 when no crossing ("none")
    bool has_resolution = false;
    double snr_constant = 0.0;
};

struct Roi {
    std::size_t z0 = 0, z1 = 0;  // half-open pixel ranges
    std::size_t x0 = 0, x1 = 0;
};

// Lag-m spatial coherence of a realigned patch, averaged over frames and
// angles; real part of the normalized complex inner products.
CoherenceCurve spatial_coherence(const RealignedPatch& patch, std::size_t window);

double contrast_ratio(const BeamformedImage& image, const Roi& signal, const Roi& background);

// Linear-interpolated full width at half maximum around the global peak.
double fwhm(const std::vector<double>& profile, double spacing);

double half_bit_threshold(std::size_t ring_count, double snr_constant);

FrcResult frc(const DensityMap& map_a, const DensityMap& map_b, double snr_constant = 0.2071);

std::vector<std::pair<std::size_t, std::size_t>> saturation_curve(
    const std::vector<Track>& tracks, const ImageGrid& base_grid, int factor);

// Piston-removed, wrapped RMS phase difference.
double phase_rmse(const AberrationFunction& est, const AberrationFunction& truth);

// In-place radix-2 FFT; n must be a power of two. inverse applies 1/n.
void fft_radix2(std::vector<cplx>& a, bool inverse);

// 2-D forward DFT of a real matrix, zero-padded to the given power-of-two size.
std::vector<cplx> fft2_real(const RealTensor& m, std::size_t n);

struct MetricRow {
    std::string metric;
    double value = 0.0;
    std::string units;
};

std::string metrics_csv(const std::vector<MetricRow>& rows, const std::string& config_hash);
std::string curve_csv(const std::string& xname, const std::string& yname,
                      const std::vector<std::pair<double, double>>& points);

}  // namespace ulmpac
