#pragma once

#include <cmath>
#include <vector>

#include "ulmpac/beamform.hpp"
#include "ulmpac/simulator.hpp"

namespace testutil {

using namespace ulmpac;

inline ProbeGeometry desk_probe(int ne = 16) {
    double fc = 15.625e6, c = 1540.0;
    return ProbeGeometry::linear(ne, c / fc, fc, c);
}

inline TransmitScheme desk_scheme() {
    TransmitScheme s;
    s.angles = {-0.0872664626, 0.0, 0.0872664626};  // -5, 0, 5 degrees
    s.pulse_cycles = 3;
    return s;
}

inline ImageGrid desk_grid(const ProbeGeometry& probe) {
    double lam = probe.wavelength();
    ImageGrid g;
    g.dx = 0.5 * lam;
    g.dz = 0.5 * lam;
    g.x0 = -8.0 * lam;
    g.z0 = 8.0 * lam;
    g.nx = 33;
    g.nz = 65;  // z up to 40 lambda
    return g;
}

inline SimWindow desk_window(const ProbeGeometry& probe) {
    double lam = probe.wavelength();
    return SimWindow{10.0 * lam / probe.sound_speed, 110.0 * lam / probe.sound_speed};
}

inline double image_nrmse(const BeamformedImage& a, const BeamformedImage& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        num += std::norm(a.pixels[i] - b.pixels[i]);
        den += std::norm(b.pixels[i]);
    }
    return std::sqrt(num / den);
}

// Envelope-image error; insensitive to the global phase a scalar transmit
// correction introduces.
inline double magnitude_nrmse(const BeamformedImage& a, const BeamformedImage& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        double d = std::abs(a.pixels[i]) - std::abs(b.pixels[i]);
        num += d * d;
        den += std::norm(b.pixels[i]);
    }
    return std::sqrt(num / den);
}

inline std::pair<double, double> image_peak(const BeamformedImage& img) {
    double best = -1.0;
    std::size_t bz = 0, bx = 0;
    for (std::size_t iz = 0; iz < img.grid.nz; ++iz)
        for (std::size_t ix = 0; ix < img.grid.nx; ++ix)
            if (std::abs(img.at(iz, ix)) > best) {
                best = std::abs(img.at(iz, ix));
                bz = iz;
                bx = ix;
            }
    return {img.grid.x(bx), img.grid.z(bz)};
}

}  // namespace testutil
