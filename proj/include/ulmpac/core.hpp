#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ulmpac/tensor.hpp"

namespace ulmpac {

// Linear-array description grounding all delay math. Element positions are
// centered so they sum to zero.
struct ProbeGeometry {
    int num_elements = 0;      // Ne
    double pitch = 0.0;        // m
    double center_frequency = 0.0;  // Hz
    double sound_speed = 0.0;  // m/s

    static ProbeGeometry linear(int ne, double pitch, double fc, double c);

    double element_x(int n) const {
        return (static_cast<double>(n) - 0.5 * (num_elements - 1)) * pitch;
    }
    double wavelength() const { return sound_speed / center_frequency; }
    double aperture() const { return (num_elements - 1) * pitch; }
    void validate() const;
};

struct TransmitScheme {
    std::vector<double> angles;  // rad
    int pulse_cycles = 3;
    std::vector<double> transmit_apodization;  // per element; empty = uniform
    std::vector<double> transmit_delays;       // per element, s; empty = none

    void validate() const;
};

// Complex baseband channel data, [Ntheta x Nt x Ne].
struct ChannelIQ {
    ComplexTensor data;
    double sample_rate = 0.0;  // Hz
    double t0 = 0.0;           // s, time of first sample

    std::size_t num_angles() const { return data.dim(0); }
    std::size_t num_samples() const { return data.dim(1); }
    std::size_t num_elements() const { return data.dim(2); }
};

struct ImageGrid {
    double x0 = 0.0, z0 = 0.0;  // m
    double dx = 0.0, dz = 0.0;  // m
    std::size_t nx = 0, nz = 0;

    double x(std::size_t ix) const { return x0 + dx * static_cast<double>(ix); }
    double z(std::size_t iz) const { return z0 + dz * static_cast<double>(iz); }
    void validate() const;
    bool operator==(const ImageGrid&) const = default;
};

// Round-trip plane-wave delay to a pixel (x, z) and back to element xn.
inline double das_delay(double x, double z, double theta, double xn, double c) {
    if (z <= 0.0) throw std::domain_error("das_delay: z must be positive");
    if (c <= 0.0) throw std::domain_error("das_delay: c must be positive");
    double dx = x - xn;
    return (z * std::cos(theta) + x * std::sin(theta) + std::sqrt(z * z + dx * dx)) / c;
}

// Catmull-Rom interpolation of a uniformly sampled complex signal at fractional
// index `pos`; zero outside the record. Shared by delay_iq, realignment and the
// beamformer.
cplx cubic_sample(const cplx* s, std::size_t n, double pos);
double cubic_sample(const double* s, std::size_t n, double pos);

// Demodulate real RF [Ntheta x Nt_rf x Ne] sampled at fs_rf into 100% bandwidth
// IQ at rate fc. Downmix by exp(-i 2 pi fc t), 64-tap windowed-sinc low-pass at
// fc/2, decimation by fs_rf/fc (must be an integer >= 4). A pure tone
// cos(2 pi fc t) maps to the constant 0.5.
ChannelIQ demodulate_iq(const RealTensor& rf, double fs_rf, double t0,
                        const ProbeGeometry& probe);

// Apply a time delay tau to a baseband signal sampled at fs: resample the
// envelope at t - tau (cubic) and rotate by exp(-i 2 pi fc tau), the baseband
// image of delaying the RF record. Out-of-range samples are zero.
std::vector<cplx> delay_iq(const std::vector<cplx>& signal, double tau,
                           double fs, double fc);

}  // namespace ulmpac
