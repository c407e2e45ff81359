#pragma once

#include "ulmpac/aberration.hpp"
#include "ulmpac/beamform.hpp"
#include "ulmpac/track.hpp"

namespace ulmpac {

struct Detection {
    double x = 0.0, z = 0.0;  // m
    double correlation = 0.0;
};

struct DensityMap {
    ImageGrid grid;   // fine grid, factor F over the beamforming grid
    RealTensor counts;  // [nz x nx]
};

// Per-pixel aberration function over a coarse spatial grid.
struct AberrationMap {
    ImageGrid grid;
    ComplexTensor values;  // [nz x nx x Ne]

    AberrationFunction at(std::size_t iz, std::size_t ix) const;
};

// Casorati-matrix SVD filter: zero the first cutoff_rank singular components.
std::vector<BeamformedImage> svd_clutter_filter(const std::vector<BeamformedImage>& stack,
                                                int cutoff_rank);

// Normalized cross-correlation with a PSF template, local maxima above
// threshold, paraboloid sub-pixel refinement.
std::vector<Detection> detect_microbubbles(const BeamformedImage& image,
                                           const ComplexTensor& psf_template,
                                           double corr_threshold);

// Frame-to-frame Hungarian assignment; pairs beyond max_link_dist (in
// beamforming-grid pixels) are forbidden, no gap filling.
std::vector<Track> link_tracks(const std::vector<std::vector<Detection>>& detections,
                               double max_link_dist_pixels, std::size_t min_track_len,
                               double pixel_size);

// Optimal assignment minimizing total cost; returns per-row column index or -1.
// Entries >= forbidden_cost are never matched.
std::vector<int> hungarian_assign(const std::vector<std::vector<double>>& cost,
                                  double forbidden_cost);

ImageGrid refine_grid(const ImageGrid& base, int factor);

// Fine-grid pixels crossed by the track polyline (sorted, unique).
std::vector<std::size_t> rasterize_track(const Track& track, const ImageGrid& fine);

DensityMap accumulate_density(const std::vector<Track>& tracks, const ImageGrid& base_grid,
                              int factor, std::size_t min_len);

// Penalized least-squares smoothing on the DCT (Laplacian eigen-) basis with
// iterated weights for missing data. smoothness < 0 selects it by GCV.
RealTensor dct_smooth(const RealTensor& y, const RealTensor& weights, double smoothness);

double dct_smooth_gcv(const RealTensor& y, const RealTensor& weights);

AberrationMap interpolate_aberration_map(
    const std::vector<std::pair<std::pair<double, double>, AberrationFunction>>& samples,
    const ImageGrid& grid, double smoothness);

}  // namespace ulmpac
