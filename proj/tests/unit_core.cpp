#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "ulmpac/core.hpp"
#include "ulmpac/rng.hpp"

using namespace ulmpac;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Analytic tone burst with Gaussian envelope, evaluated at arbitrary time.
double rf_pulse(double t, double fc, double t_center, double sigma) {
    double env = std::exp(-0.5 * (t - t_center) * (t - t_center) / (sigma * sigma));
    return env * std::cos(2.0 * kPi * fc * (t - t_center));
}

RealTensor make_rf(double fc, double fs, std::size_t nt, double t0, double t_center,
                   double sigma) {
    RealTensor rf({1, nt, 2});
    for (std::size_t i = 0; i < nt; ++i) {
        double v = rf_pulse(t0 + static_cast<double>(i) / fs, fc, t_center, sigma);
        rf.at3(0, i, 0) = v;
        rf.at3(0, i, 1) = v;
    }
    return rf;
}

}  // namespace

TEST_CASE("das_delay on-axis two-way time") {
    double t = das_delay(0.0, 0.01, 0.0, 0.0, 1540.0);
    CHECK(std::abs(t - 0.02 / 1540.0) <= 1e-12);
    CHECK(std::abs(t - 1.2987012987012987e-05) <= 1e-12);
}

TEST_CASE("das_delay off-axis element") {
    double t = das_delay(0.0, 0.01, 0.0, 0.005, 1540.0);
    double expected = (0.01 + std::sqrt(0.01 * 0.01 + 0.005 * 0.005)) / 1540.0;
    CHECK(std::abs(t - expected) <= 1e-12);
    CHECK(std::abs(t - 1.3753467459414903e-05) <= 1e-12);
}

TEST_CASE("das_delay mirror symmetry") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        double x = rng.uniform(-0.01, 0.01);
        double z = rng.uniform(1e-4, 0.05);
        double th = rng.uniform(-1.0, 1.0);
        double xn = rng.uniform(-0.01, 0.01);
        double a = das_delay(x, z, th, xn, 1540.0);
        double b = das_delay(-x, z, -th, -xn, 1540.0);
        CHECK(std::abs(a - b) <= 1e-12);
    }
}

TEST_CASE("das_delay positivity and minimization over xn") {
    Rng rng(12);
    for (int i = 0; i < 100; ++i) {
        double x = rng.uniform(-0.01, 0.01);
        double z = rng.uniform(1e-4, 0.05);
        double th = rng.uniform(-1.0, 1.0);
        double c = 1540.0;
        double at_x = das_delay(x, z, th, x, c);
        CHECK(at_x > 0.0);
        for (int k = 0; k < 10; ++k) {
            double xn = rng.uniform(-0.02, 0.02);
            CHECK(das_delay(x, z, th, xn, c) >= at_x - 1e-15);
        }
    }
}

TEST_CASE("das_delay domain errors") {
    CHECK_THROWS_AS(das_delay(0.0, 0.0, 0.0, 0.0, 1540.0), std::domain_error);
    CHECK_THROWS_AS(das_delay(0.0, -0.01, 0.0, 0.0, 1540.0), std::domain_error);
    CHECK_THROWS_AS(das_delay(0.0, 0.01, 0.0, 0.0, 0.0), std::domain_error);
}

TEST_CASE("cubic_sample integer nodes and linear reproduction") {
    std::vector<double> lin(16);
    for (std::size_t i = 0; i < lin.size(); ++i) lin[i] = 2.0 * static_cast<double>(i) - 3.0;
    for (std::size_t i = 1; i + 2 < lin.size(); ++i) {
        CHECK(cubic_sample(lin.data(), lin.size(), static_cast<double>(i)) ==
              doctest::Approx(lin[i]).epsilon(1e-12));
        double p = static_cast<double>(i) + 0.37;
        CHECK(cubic_sample(lin.data(), lin.size(), p) ==
              doctest::Approx(2.0 * p - 3.0).epsilon(1e-12));
    }
    CHECK(cubic_sample(lin.data(), lin.size(), -5.0) == 0.0);
    CHECK(cubic_sample(lin.data(), lin.size(), 100.0) == 0.0);
}

TEST_CASE("demodulate_iq maps a pure tone to 0.5") {
    double fc = 15.625e6;
    double fs = 8.0 * fc;
    std::size_t nt = 1024;
    RealTensor rf({1, nt, 2});
    for (std::size_t i = 0; i < nt; ++i) {
        double v = std::cos(2.0 * kPi * fc * (static_cast<double>(i) / fs));
        rf.at3(0, i, 0) = v;
        rf.at3(0, i, 1) = v;
    }
    ProbeGeometry probe = ProbeGeometry::linear(2, 1e-4, fc, 1540.0);
    ChannelIQ iq = demodulate_iq(rf, fs, 0.0, probe);
    CHECK(iq.sample_rate == doctest::Approx(fc));
    std::size_t n = iq.num_samples();
    for (std::size_t k = n / 4; k < 3 * n / 4; ++k) {
        cplx v = iq.data.at3(0, k, 0);
        CHECK(std::abs(std::abs(v) - 0.5) < 1e-3);
        CHECK(std::abs(std::arg(v)) < 1e-3);
    }
}

TEST_CASE("demodulate_iq of zero input is zero") {
    double fc = 15.625e6;
    RealTensor rf({1, 512, 2});
    ProbeGeometry probe = ProbeGeometry::linear(2, 1e-4, fc, 1540.0);
    ChannelIQ iq = demodulate_iq(rf, 8.0 * fc, 0.0, probe);
    for (std::size_t i = 0; i < iq.data.size(); ++i) CHECK(std::abs(iq.data[i]) == 0.0);
}

TEST_CASE("demodulate_iq rejects low sample rates and non-finite input") {
    double fc = 15.625e6;
    ProbeGeometry probe = ProbeGeometry::linear(2, 1e-4, fc, 1540.0);
    RealTensor rf({1, 128, 2});
    CHECK_THROWS(demodulate_iq(rf, 2.0 * fc, 0.0, probe));
    RealTensor bad({1, 128, 2});
    bad[5] = std::nan("");
    CHECK_THROWS(demodulate_iq(bad, 8.0 * fc, 0.0, probe));
}

TEST_CASE("demodulate_iq is linear") {
    double fc = 15.625e6;
    double fs = 8.0 * fc;
    std::size_t nt = 512;
    ProbeGeometry probe = ProbeGeometry::linear(2, 1e-4, fc, 1540.0);
    Rng rng(3);
    RealTensor r1({1, nt, 2}), r2({1, nt, 2}), mix({1, nt, 2});
    double a = 0.7, b = -1.3;
    for (std::size_t i = 0; i < r1.size(); ++i) {
        r1[i] = rng.gaussian();
        r2[i] = rng.gaussian();
        mix[i] = a * r1[i] + b * r2[i];
    }
    ChannelIQ q1 = demodulate_iq(r1, fs, 0.0, probe);
    ChannelIQ q2 = demodulate_iq(r2, fs, 0.0, probe);
    ChannelIQ qm = demodulate_iq(mix, fs, 0.0, probe);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < qm.data.size(); ++i) {
        cplx want = a * q1.data[i] + b * q2.data[i];
        num += std::norm(qm.data[i] - want);
        den += std::norm(want);
    }
    CHECK(std::sqrt(num / den) < 1e-10);
}

TEST_CASE("demodulate_iq small delay becomes a phasor") {
    double fc = 15.625e6;
    double fs = 8.0 * fc;
    std::size_t nt = 2048;
    double sigma = 200.0 / fs;  // envelope much wider than the test delay
    double tc = 0.5 * static_cast<double>(nt) / fs;
    double dt = 0.01 / fc;
    ProbeGeometry probe = ProbeGeometry::linear(2, 1e-4, fc, 1540.0);
    ChannelIQ a = demodulate_iq(make_rf(fc, fs, nt, 0.0, tc, sigma), fs, 0.0, probe);
    ChannelIQ b = demodulate_iq(make_rf(fc, fs, nt, 0.0, tc + dt, sigma), fs, 0.0, probe);
    cplx expect = std::exp(cplx(0.0, -2.0 * kPi * fc * dt));
    std::size_t n = a.num_samples();
    for (std::size_t k = n / 4; k < 3 * n / 4; ++k) {
        cplx va = a.data.at3(0, k, 0);
        cplx vb = b.data.at3(0, k, 0);
        if (std::abs(va) < 1e-3) continue;
        CHECK(std::abs(vb / va - expect) < 2e-2);
    }
}

TEST_CASE("delay_iq identity at tau = 0") {
    Rng rng(5);
    std::vector<cplx> s(64);
    for (auto& v : s) v = cplx(rng.gaussian(), rng.gaussian());
    std::vector<cplx> out = delay_iq(s, 0.0, 15.625e6, 15.625e6);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(out[i] - s[i]) < 1e-12);
}

TEST_CASE("delay_iq rotates a constant envelope") {
    double fc = 15.625e6;
    std::vector<cplx> s(64, cplx(0.3, -0.4));
    double tau = 0.13 / fc;
    std::vector<cplx> out = delay_iq(s, tau, fc, fc);
    cplx expect = cplx(0.3, -0.4) * std::exp(cplx(0.0, -2.0 * kPi * fc * tau));
    for (std::size_t i = 4; i + 4 < s.size(); ++i) CHECK(std::abs(out[i] - expect) < 1e-10);
}

TEST_CASE("delay_iq matches RF-domain delay oracle") {
    double fc = 15.625e6;
    double fs_rf = 8.0 * fc;
    std::size_t nt_rf = 4096;
    double tc = 0.5 * static_cast<double>(nt_rf) / fs_rf;
    double sigma = 120.0 / fs_rf;
    double tau = 2.37 / fs_rf;
    ProbeGeometry probe = ProbeGeometry::linear(2, 1e-4, fc, 1540.0);
    ChannelIQ base = demodulate_iq(make_rf(fc, fs_rf, nt_rf, 0.0, tc, sigma), fs_rf, 0.0, probe);
    // Oracle: delay the analytic RF, then demodulate.
    ChannelIQ delayed =
        demodulate_iq(make_rf(fc, fs_rf, nt_rf, 0.0, tc + tau, sigma), fs_rf, 0.0, probe);
    std::size_t n = base.num_samples();
    std::vector<cplx> sig(n);
    for (std::size_t i = 0; i < n; ++i) sig[i] = base.data.at3(0, i, 0);
    std::vector<cplx> out = delay_iq(sig, tau, base.sample_rate, fc);
    double num = 0.0, den = 0.0;
    for (std::size_t i = n / 4; i < 3 * n / 4; ++i) {
        num += std::norm(out[i] - delayed.data.at3(0, i, 0));
        den += std::norm(delayed.data.at3(0, i, 0));
    }
    CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("delay_iq round trip on band-limited signal") {
    double fc = 15.625e6;
    double fs = fc;
    std::size_t n = 256;
    std::vector<cplx> s(n);
    // Smooth band-limited envelope: a few low-frequency Fourier modes.
    Rng rng(9);
    std::vector<cplx> coef(6);
    for (auto& c : coef) c = cplx(rng.gaussian(), rng.gaussian());
    for (std::size_t i = 0; i < n; ++i) {
        cplx v = 0.0;
        for (std::size_t k = 0; k < coef.size(); ++k)
            v += coef[k] * std::exp(cplx(0.0, 2.0 * kPi * static_cast<double>(k * i) /
                                                  static_cast<double>(n * 16)));
        s[i] = v;
    }
    double tau = 1.7 / fs;
    std::vector<cplx> back = delay_iq(delay_iq(s, tau, fs, fc), -tau, fs, fc);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 8; i + 8 < n; ++i) {
        num += std::norm(back[i] - s[i]);
        den += std::norm(s[i]);
    }
    CHECK(std::sqrt(num / den) <= 1e-3);
}

TEST_CASE("probe geometry element positions centered") {
    ProbeGeometry p = ProbeGeometry::linear(16, 1e-4, 15.625e6, 1540.0);
    double sum = 0.0;
    for (int n = 0; n < 16; ++n) sum += p.element_x(n);
    CHECK(std::abs(sum) < 1e-15);
    for (int n = 1; n < 16; ++n) CHECK(p.element_x(n) > p.element_x(n - 1));
    CHECK(p.wavelength() == doctest::Approx(1540.0 / 15.625e6));
}
