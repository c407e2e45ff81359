#pragma once

#include <string>
#include <vector>

#include "ulmpac/core.hpp"
#include "ulmpac/rng.hpp"

namespace ulmpac {

// Near-field phase-screen aberrator: one complex gain-and-delay per element,
// y(n) = a(n) exp(i w tau(n)).
class AberrationFunction {
public:
    AberrationFunction() = default;
    explicit AberrationFunction(std::vector<cplx> values) : values_(std::move(values)) {}

    static AberrationFunction identity(std::size_t ne) {
        return AberrationFunction(std::vector<cplx>(ne, cplx(1.0, 0.0)));
    }
    static AberrationFunction from_amp_phase(const std::vector<double>& amp,
                                             const std::vector<double>& phase);

    std::size_t size() const { return values_.size(); }
    const std::vector<cplx>& values() const { return values_; }
    cplx value(std::size_t n) const { return values_[n]; }

    double amplitude(std::size_t n) const { return std::abs(values_[n]); }
    double phase(std::size_t n) const { return std::arg(values_[n]); }  // (-pi, pi]
    double delay(std::size_t n, double fc) const {
        return phase(n) / (2.0 * M_PI * fc);
    }
    std::vector<double> delays(double fc) const;
    std::vector<double> phases() const;

    // Subtract the mean phase across elements; a piston displaces nothing.
    AberrationFunction remove_piston() const;

    void save_ulmt(const std::string& path) const;
    void save_csv(const std::string& path) const;
    static AberrationFunction load_ulmt(const std::string& path);

private:
    std::vector<cplx> values_;
};

struct AberrationConfig {
    double phase_bound = 0.5;   // fraction of wavelength, +-lambda/2 at 0.5
    double amp_min = 0.5;       // uniform amplitude lower bound
    int smoothing_points = 16;  // spline knots across the aperture
    std::uint64_t rng_seed = 0;

    void validate() const;
};

// Uniform per-knot draws in amplitude and phase, cubic-spline smoothed across
// the element index, amplitude clamped to [amp_min, 1], phase wrapped.
AberrationFunction generate_aberration(const AberrationConfig& config,
                                       const ProbeGeometry& probe);

// Scale channel n by a(n) and delay it by tau(n) via delay_iq.
ChannelIQ apply_aberration_rx(const ChannelIQ& iq, const AberrationFunction& ab,
                              const ProbeGeometry& probe);

// Scheme whose per-element transmit delays are incremented by tau(n) and
// apodization scaled by a(n); consumed by the simulator's exact mode.
TransmitScheme aberrate_transmit(const TransmitScheme& scheme,
                                 const AberrationFunction& ab,
                                 const ProbeGeometry& probe);

double wrap_phase(double phi);

// Natural cubic spline through (xs, ys), evaluated at xq (xs strictly increasing).
std::vector<double> natural_cubic_spline(const std::vector<double>& xs,
                                         const std::vector<double>& ys,
                                         const std::vector<double>& xq);

}  // namespace ulmpac
