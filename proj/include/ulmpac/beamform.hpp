#pragma once

#include <optional>

#include "ulmpac/aberration.hpp"
#include "ulmpac/core.hpp"
#include "ulmpac/track.hpp"

namespace ulmpac {

struct BeamformedImage {
    ImageGrid grid;
    ComplexTensor pixels;  // [nz x nx]
    bool out_of_range = false;  // some requested samples fell outside the record

    cplx& at(std::size_t iz, std::size_t ix) { return pixels.data()[iz * grid.nx + ix]; }
    const cplx& at(std::size_t iz, std::size_t ix) const {
        return pixels.data()[iz * grid.nx + ix];
    }
};

// Per-element receive correction plus a scalar transmit delay.
struct CorrectionProfile {
    std::vector<double> rx_delays;   // s
    std::vector<double> rx_weights;  // unitless
    double tx_delay = 0.0;           // s
};

// Network input: channel data rephased along a bubble track,
// [Ntheta x Nf x Nt x Ne] on a 1/(4 fc) grid.
struct RealignedPatch {
    ComplexTensor data;
    int track_ref = -1;
    std::vector<std::pair<double, double>> center_positions;  // (x, z) per frame
    bool zero_padded = false;

    std::size_t num_angles() const { return data.dim(0); }
    std::size_t num_frames() const { return data.dim(1); }
    std::size_t num_samples() const { return data.dim(2); }
    std::size_t num_elements() const { return data.dim(3); }
};

// Delay-and-sum with coherent angle compounding (plain sum over angles).
// Correction delays shift the per-element sample time to follow the aberrated
// echo; the matching phase rotation keeps the compounding coherent. The piston
// of the correction (mean rx delay and the scalar tx delay) only rotates the
// phase; envelope taps use the mean-removed rx delays so a piston never moves
// the image.
BeamformedImage das_beamform(const ChannelIQ& iq, const ImageGrid& grid,
                             const ProbeGeometry& probe, const TransmitScheme& scheme,
                             const CorrectionProfile* correction = nullptr,
                             int workers = 1);

// Rephase channel data around a bubble track: window of nt samples on a
// 1/(4 fc) grid centered on the round-trip delay of each (frame, element),
// carrier restored with exp(i 2 pi fc t).
RealignedPatch realign_hyperbola(const std::vector<ChannelIQ>& frames,
                                 const Track& track, std::size_t num_frames,
                                 std::size_t nt, const ProbeGeometry& probe,
                                 const TransmitScheme& scheme);

CorrectionProfile make_correction_profile(const AberrationFunction& estimate,
                                          double fc, bool use_amplitude = false);

// Undo an estimated aberration directly on a realigned patch: per element,
// resample the (carrier-restored) rows by the estimated delay and optionally
// divide by the estimated amplitude.
RealignedPatch correct_realigned_patch(const RealignedPatch& patch,
                                       const AberrationFunction& estimate,
                                       const ProbeGeometry& probe,
                                       bool use_amplitude = false);

}  // namespace ulmpac
