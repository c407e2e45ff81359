#include "ulmpac/aberration.hpp"

#include <fstream>

#include "ulmpac/ulmt.hpp"

namespace ulmpac {

double wrap_phase(double phi) {
    phi = std::fmod(phi + M_PI, 2.0 * M_PI);
    if (phi < 0.0) phi += 2.0 * M_PI;
    return phi - M_PI == -M_PI ? M_PI : phi - M_PI;
}

AberrationFunction AberrationFunction::from_amp_phase(const std::vector<double>& amp,
                                                      const std::vector<double>& phase) {
    if (amp.size() != phase.size())
        throw std::invalid_argument("aberration: amplitude/phase length mismatch");
    std::vector<cplx> v(amp.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = std::polar(amp[i], wrap_phase(phase[i]));
    return AberrationFunction(std::move(v));
}

std::vector<double> AberrationFunction::delays(double fc) const {
    std::vector<double> d(values_.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = delay(i, fc);
    return d;
}

std::vector<double> AberrationFunction::phases() const {
    std::vector<double> p(values_.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = phase(i);
    return p;
}

AberrationFunction AberrationFunction::remove_piston() const {
    double mean = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i) mean += phase(i);
    mean /= static_cast<double>(values_.size());
    std::vector<cplx> v(values_.size());
    cplx rot = std::polar(1.0, -mean);
    for (std::size_t i = 0; i < values_.size(); ++i) v[i] = values_[i] * rot;
    return AberrationFunction(std::move(v));
}

void AberrationFunction::save_ulmt(const std::string& path) const {
    ComplexTensor t({values_.size()}, values_);
    ulmt::write_complex(path, t, ulmt::Dtype::Complex128);
}

void AberrationFunction::save_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("aberration: cannot open " + path);
    f << "element,amplitude,phase_rad\n";
    f.precision(17);
    for (std::size_t i = 0; i < values_.size(); ++i)
        f << i << "," << amplitude(i) << "," << phase(i) << "\n";
}

AberrationFunction AberrationFunction::load_ulmt(const std::string& path) {
    ComplexTensor t = ulmt::read_complex(path);
    if (t.ndim() != 1) throw std::runtime_error("aberration: expected 1-D tensor in " + path);
    return AberrationFunction(std::vector<cplx>(t.data(), t.data() + t.size()));
}

void AberrationConfig::validate() const {
    if (phase_bound <= 0.0 || phase_bound > 0.5)
        throw std::invalid_argument("aberration: phase_bound must be in (0, 0.5]");
    if (amp_min <= 0.0 || amp_min > 1.0)
        throw std::invalid_argument("aberration: amp_min must be in (0, 1]");
    if (smoothing_points < 2)
        throw std::invalid_argument("aberration: need at least 2 smoothing points");
}

std::vector<double> natural_cubic_spline(const std::vector<double>& xs,
                                         const std::vector<double>& ys,
                                         const std::vector<double>& xq) {
    const std::size_t n = xs.size();
    if (n < 2 || ys.size() != n)
        throw std::invalid_argument("spline: need matching xs/ys with >= 2 points");
    std::vector<double> h(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) h[i] = xs[i + 1] - xs[i];

    // Second derivatives via the standard tridiagonal system.
    std::vector<double> m(n, 0.0);
    if (n > 2) {
        std::vector<double> a(n, 0.0), b(n, 0.0), c(n, 0.0), d(n, 0.0);
        for (std::size_t i = 1; i + 1 < n; ++i) {
            a[i] = h[i - 1];
            b[i] = 2.0 * (h[i - 1] + h[i]);
            c[i] = h[i];
            d[i] = 6.0 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]);
        }
        for (std::size_t i = 2; i + 1 < n; ++i) {
            double w = a[i] / b[i - 1];
            b[i] -= w * c[i - 1];
            d[i] -= w * d[i - 1];
        }
        for (std::size_t i = n - 2; i >= 1; --i) {
            m[i] = (d[i] - c[i] * m[i + 1]) / b[i];
            if (i == 1) break;
        }
    }

    std::vector<double> out(xq.size());
    for (std::size_t q = 0; q < xq.size(); ++q) {
        double x = xq[q];
        std::size_t i = 0;
        if (x <= xs.front()) i = 0;
        else if (x >= xs.back()) i = n - 2;
        else {
            while (i + 2 < n && xs[i + 1] < x) ++i;
        }
        double t = x - xs[i];
        double hi = h[i];
        double A = (xs[i + 1] - x) / hi, B = t / hi;
        out[q] = A * ys[i] + B * ys[i + 1] +
                 ((A * A * A - A) * m[i] + (B * B * B - B) * m[i + 1]) * hi * hi / 6.0;
    }
    return out;
}

AberrationFunction generate_aberration(const AberrationConfig& config,
                                       const ProbeGeometry& probe) {
    config.validate();
    probe.validate();
    const int ne = probe.num_elements;
    const int nk = config.smoothing_points;

    Rng rng(config.rng_seed);
    std::vector<double> kx(nk), ka(nk), kp(nk);
    for (int k = 0; k < nk; ++k) {
        kx[k] = static_cast<double>(k) * static_cast<double>(ne - 1) /
                static_cast<double>(nk - 1);
        ka[k] = rng.uniform(config.amp_min, 1.0);
        kp[k] = 2.0 * M_PI * rng.uniform(-config.phase_bound, config.phase_bound);
    }
    std::vector<double> xq(ne);
    for (int n = 0; n < ne; ++n) xq[n] = static_cast<double>(n);

    std::vector<double> amp = natural_cubic_spline(kx, ka, xq);
    std::vector<double> phase = natural_cubic_spline(kx, kp, xq);
    for (double& a : amp) a = std::clamp(a, config.amp_min, 1.0);
    return AberrationFunction::from_amp_phase(amp, phase);
}

ChannelIQ apply_aberration_rx(const ChannelIQ& iq, const AberrationFunction& ab,
                              const ProbeGeometry& probe) {
    if (static_cast<int>(iq.num_elements()) != probe.num_elements ||
        ab.size() != iq.num_elements())
        throw std::invalid_argument("apply_aberration_rx: element count mismatch");

    const std::size_t na = iq.num_angles(), nt = iq.num_samples(), ne = iq.num_elements();
    const double fc = probe.center_frequency;
    ChannelIQ out;
    out.data = ComplexTensor({na, nt, ne});
    out.sample_rate = iq.sample_rate;
    out.t0 = iq.t0;

    std::vector<cplx> chan(nt);
    for (std::size_t e = 0; e < ne; ++e) {
        double a = ab.amplitude(e);
        double tau = ab.delay(e, fc);
        for (std::size_t ang = 0; ang < na; ++ang) {
            for (std::size_t t = 0; t < nt; ++t) chan[t] = iq.data.at3(ang, t, e);
            std::vector<cplx> delayed = delay_iq(chan, tau, iq.sample_rate, fc);
            for (std::size_t t = 0; t < nt; ++t) out.data.at3(ang, t, e) = a * delayed[t];
        }
    }
    return out;
}

TransmitScheme aberrate_transmit(const TransmitScheme& scheme,
                                 const AberrationFunction& ab,
                                 const ProbeGeometry& probe) {
    if (static_cast<int>(ab.size()) != probe.num_elements)
        throw std::invalid_argument("aberrate_transmit: element count mismatch");
    TransmitScheme out = scheme;
    const std::size_t ne = ab.size();
    const double fc = probe.center_frequency;
    if (out.transmit_delays.empty()) out.transmit_delays.assign(ne, 0.0);
    if (out.transmit_apodization.empty()) out.transmit_apodization.assign(ne, 1.0);
    if (out.transmit_delays.size() != ne || out.transmit_apodization.size() != ne)
        throw std::invalid_argument("aberrate_transmit: scheme length mismatch");
    for (std::size_t n = 0; n < ne; ++n) {
        out.transmit_delays[n] += ab.delay(n, fc);
        out.transmit_apodization[n] *= ab.amplitude(n);
    }
    return out;
}

}  // namespace ulmpac
