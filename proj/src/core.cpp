#include "ulmpac/core.hpp"

#include <array>

namespace ulmpac {

ProbeGeometry ProbeGeometry::linear(int ne, double pitch, double fc, double c) {
    ProbeGeometry p{ne, pitch, fc, c};
    p.validate();
    return p;
}

void ProbeGeometry::validate() const {
    if (num_elements < 2) throw std::invalid_argument("probe: need at least 2 elements");
    if (pitch <= 0.0) throw std::invalid_argument("probe: pitch must be positive");
    if (center_frequency <= 0.0) throw std::invalid_argument("probe: fc must be positive");
    if (sound_speed <= 0.0) throw std::invalid_argument("probe: c must be positive");
}

void TransmitScheme::validate() const {
    if (angles.empty()) throw std::invalid_argument("scheme: angles must be non-empty");
    for (double a : angles)
        if (std::abs(a) >= M_PI / 2) throw std::invalid_argument("scheme: |angle| must be < pi/2");
    if (pulse_cycles < 1) throw std::invalid_argument("scheme: pulse_cycles must be >= 1");
}

void ImageGrid::validate() const {
    if (dx <= 0.0 || dz <= 0.0) throw std::invalid_argument("grid: dx, dz must be positive");
    if (z0 <= 0.0) throw std::invalid_argument("grid: z0 must be positive");
    if (nx == 0 || nz == 0) throw std::invalid_argument("grid: empty extents");
}

namespace {

template <typename T>
T catmull_rom(const T* s, std::size_t n, double pos) {
    if (!(pos >= 0.0) || pos > static_cast<double>(n - 1)) return T{};
    auto get = [&](long i) -> T {
        if (i < 0 || i >= static_cast<long>(n)) return T{};
        return s[i];
    };
    long i1 = static_cast<long>(std::floor(pos));
    if (i1 == static_cast<long>(n - 1)) return s[i1];
    double t = pos - static_cast<double>(i1);
    T p0 = get(i1 - 1), p1 = get(i1), p2 = get(i1 + 1), p3 = get(i1 + 2);
    double t2 = t * t, t3 = t2 * t;
    return p1 * 1.0 +
           (p2 - p0) * (0.5 * t) +
           (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * (0.5 * t2) +
           (p1 * 3.0 - p0 - p2 * 3.0 + p3) * (0.5 * t3);
}

}  // namespace

cplx cubic_sample(const cplx* s, std::size_t n, double pos) {
    return catmull_rom(s, n, pos);
}
double cubic_sample(const double* s, std::size_t n, double pos) {
    return catmull_rom(s, n, pos);
}

ChannelIQ demodulate_iq(const RealTensor& rf, double fs_rf, double t0,
                        const ProbeGeometry& probe) {
    const double fc = probe.center_frequency;
    if (rf.ndim() != 3) throw std::invalid_argument("demodulate_iq: rf must be 3-D");
    if (static_cast<int>(rf.dim(2)) != probe.num_elements)
        throw std::invalid_argument("demodulate_iq: element count mismatch");
    if (fs_rf < 4.0 * fc) throw std::invalid_argument("demodulate_iq: fs_rf must be >= 4 fc");
    double ratio = fs_rf / fc;
    auto decim = static_cast<std::size_t>(std::llround(ratio));
    if (std::abs(ratio - static_cast<double>(decim)) > 1e-9)
        throw std::invalid_argument("demodulate_iq: fs_rf must be an integer multiple of fc");
    for (std::size_t i = 0; i < rf.size(); ++i)
        if (!std::isfinite(rf[i])) throw std::invalid_argument("demodulate_iq: non-finite input");

    const std::size_t na = rf.dim(0), nt = rf.dim(1), ne = rf.dim(2);

    // 64-tap Hamming windowed-sinc low-pass, cutoff fc/2 (normalized fc/2/fs).
    constexpr std::size_t kTaps = 64;
    std::array<double, kTaps> h{};
    {
        double sum = 0.0;
        double fcut = 0.5 * fc / fs_rf;  // cycles per sample
        for (std::size_t k = 0; k < kTaps; ++k) {
            double m = static_cast<double>(k) - 0.5 * (kTaps - 1);
            double sinc = (m == 0.0) ? 2.0 * fcut
                                     : std::sin(2.0 * M_PI * fcut * m) / (M_PI * m);
            double w = 0.54 - 0.46 * std::cos(2.0 * M_PI * k / (kTaps - 1));
            h[k] = sinc * w;
            sum += h[k];
        }
        for (double& v : h) v /= sum;  // unit DC gain
    }
    const double group_delay = 0.5 * (kTaps - 1);  // input samples

    std::size_t nt_out = nt / decim;
    ComplexTensor out({na, nt_out, ne});
    std::vector<cplx> mixed(nt);
    const double two_pi_fc = 2.0 * M_PI * fc;
    for (std::size_t a = 0; a < na; ++a) {
        for (std::size_t e = 0; e < ne; ++e) {
            for (std::size_t t = 0; t < nt; ++t) {
                double time = t0 + static_cast<double>(t) / fs_rf;
                double ph = -two_pi_fc * time;
                mixed[t] = rf.at3(a, t, e) * cplx(std::cos(ph), std::sin(ph));
            }
            for (std::size_t m = 0; m < nt_out; ++m) {
                // Output sample m corresponds to input index m*decim + group_delay.
                long base = static_cast<long>(m * decim);
                cplx acc{};
                for (std::size_t k = 0; k < kTaps; ++k) {
                    long idx = base + static_cast<long>(k);
                    if (idx >= 0 && idx < static_cast<long>(nt)) acc += mixed[idx] * h[k];
                }
                out.at3(a, m, e) = acc;
            }
        }
    }
    ChannelIQ iq;
    iq.data = std::move(out);
    iq.sample_rate = fc;
    iq.t0 = t0 + group_delay / fs_rf;
    return iq;
}

std::vector<cplx> delay_iq(const std::vector<cplx>& signal, double tau,
                           double fs, double fc) {
    if (fs <= 0.0) throw std::invalid_argument("delay_iq: fs must be positive");
    if (!std::isfinite(tau)) throw std::invalid_argument("delay_iq: non-finite delay");
    std::vector<cplx> out(signal.size());
    double ph = -2.0 * M_PI * fc * tau;
    cplx rot(std::cos(ph), std::sin(ph));
    double shift = tau * fs;  // fractional samples
    for (std::size_t i = 0; i < signal.size(); ++i) {
        double pos = static_cast<double>(i) - shift;
        out[i] = cubic_sample(signal.data(), signal.size(), pos) * rot;
    }
    return out;
}

}  // namespace ulmpac
