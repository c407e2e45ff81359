#include <doctest.h>

#include <cmath>
#include <vector>

#include "ulmpac/metrics.hpp"
#include "ulmpac/rng.hpp"

using namespace ulmpac;

namespace {

RealignedPatch patch_from(std::size_t na, std::size_t nf, std::size_t nt, std::size_t ne) {
    RealignedPatch p;
    p.data = ComplexTensor({na, nf, nt, ne});
    return p;
}

DensityMap random_density(std::size_t nz, std::size_t nx, Rng& rng) {
    DensityMap m;
    m.grid.dx = 1e-5;
    m.grid.dz = 1e-5;
    m.grid.x0 = 0.0;
    m.grid.z0 = 1e-3;
    m.grid.nx = nx;
    m.grid.nz = nz;
    m.counts = RealTensor({nz, nx});
    for (std::size_t i = 0; i < m.counts.size(); ++i)
        m.counts[i] = rng.uniform() < 0.1 ? 1.0 : 0.0;
    return m;
}

}  // namespace

TEST_CASE("identical channels give unit coherence at every lag") {
    RealignedPatch p = patch_from(2, 3, 8, 12);
    Rng rng(1);
    for (std::size_t a = 0; a < 2; ++a)
        for (std::size_t f = 0; f < 3; ++f)
            for (std::size_t t = 0; t < 8; ++t) {
                cplx v(rng.gaussian(), rng.gaussian());
                for (std::size_t n = 0; n < 12; ++n) p.data.at4(a, f, t, n) = v;
            }
    CoherenceCurve c = spatial_coherence(p, 0);
    REQUIRE(c.r.size() == 12);
    for (double r : c.r) CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.auc == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("independent noise decorrelates across the aperture") {
    std::size_t na = 3, nf = 4, nt = 32, ne = 16;
    RealignedPatch p = patch_from(na, nf, nt, ne);
    Rng rng(2);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        p.data[i] = {rng.gaussian(), rng.gaussian()};
    CoherenceCurve c = spatial_coherence(p, 0);
    CHECK(c.r[0] == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t m = 1; m < ne; ++m) {
        double count = static_cast<double>(nt * (ne - m) * na * nf);
        CHECK(std::abs(c.r[m]) <= 4.0 / std::sqrt(count));
    }
}

TEST_CASE("coherence is invariant to global scaling and rejects silence") {
    RealignedPatch p = patch_from(1, 2, 6, 8);
    Rng rng(3);
    for (std::size_t i = 0; i < p.data.size(); ++i)
        p.data[i] = {rng.gaussian(), rng.gaussian()};
    RealignedPatch q = p;
    cplx g = 2.5 * std::exp(cplx(0.0, 1.1));
    for (std::size_t i = 0; i < q.data.size(); ++i) q.data[i] *= g;
    CoherenceCurve ca = spatial_coherence(p, 0);
    CoherenceCurve cb = spatial_coherence(q, 0);
    for (std::size_t m = 0; m < 8; ++m)
        CHECK(ca.r[m] == doctest::Approx(cb.r[m]).epsilon(1e-12));

    RealignedPatch z = patch_from(1, 1, 4, 4);
    CHECK_THROWS(spatial_coherence(z, 0));
    CHECK_THROWS(spatial_coherence(p, 99));
}

TEST_CASE("contrast ratio hits exact decibel marks") {
    BeamformedImage im;
    im.grid.dx = im.grid.dz = 1e-4;
    im.grid.x0 = 0.0;
    im.grid.z0 = 1e-3;
    im.grid.nx = 10;
    im.grid.nz = 10;
    im.pixels = ComplexTensor({10, 10});
    im.pixels.fill({1.0, 0.0});
    Roi sig{0, 4, 0, 10}, bg{6, 10, 0, 10};
    CHECK(contrast_ratio(im, sig, bg) == doctest::Approx(0.0).epsilon(1e-12));

    for (std::size_t z = 0; z < 4; ++z)
        for (std::size_t x = 0; x < 10; ++x) im.at(z, x) = {10.0, 0.0};
    CHECK(contrast_ratio(im, sig, bg) == doctest::Approx(20.0).epsilon(1e-12));

    CHECK_THROWS(contrast_ratio(im, sig, Roi{3, 7, 0, 10}));  // overlap
    CHECK_THROWS(contrast_ratio(im, Roi{0, 0, 0, 10}, bg));   // empty
}

TEST_CASE("fwhm of triangle and gaussian profiles") {
    // Symmetric triangle, 8 samples to zero on each side: width 8 samples.
    std::vector<double> tri(17, 0.0);
    for (int i = 0; i <= 8; ++i) {
        tri[static_cast<std::size_t>(8 - i)] = 1.0 - static_cast<double>(i) / 8.0;
        tri[static_cast<std::size_t>(8 + i)] = 1.0 - static_cast<double>(i) / 8.0;
    }
    CHECK(fwhm(tri, 0.5) == doctest::Approx(8.0 * 0.5).epsilon(1e-12));

    double sigma = 6.0;
    std::vector<double> gauss(81);
    for (std::size_t i = 0; i < gauss.size(); ++i) {
        double d = static_cast<double>(i) - 40.0;
        gauss[i] = std::exp(-0.5 * d * d / (sigma * sigma));
    }
    double expect = 2.0 * std::sqrt(2.0 * std::log(2.0)) * sigma;
    CHECK(std::abs(fwhm(gauss, 1.0) - expect) <= 0.01 * expect);

    CHECK_THROWS(fwhm({1.0, 0.5}, 1.0));
    CHECK_THROWS(fwhm({1.0, 0.5, 0.2}, 1.0));  // peak at the edge
}

TEST_CASE("half-bit threshold approaches its asymptote") {
    double s = std::sqrt(2.0) - 1.0;
    double asym = s / (s + 1.0);
    CHECK(std::abs(half_bit_threshold(1000000000000ULL, s) - asym) <= 1e-3);
    CHECK(std::abs(asym - (1.0 - M_SQRT1_2)) <= 1e-12);
    // Small rings sit above the asymptote.
    CHECK(half_bit_threshold(4, s) > asym);
    CHECK(half_bit_threshold(1, s) > half_bit_threshold(100, s));
}

TEST_CASE("frc of a map with itself is one everywhere") {
    Rng rng(5);
    DensityMap m = random_density(24, 24, rng);
    FrcResult r = frc(m, m);
    for (std::size_t i = 0; i < r.frc.size(); ++i)
        if (r.ring_counts[i] > 0) CHECK(r.frc[i] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK_FALSE(r.has_resolution);
}

TEST_CASE("frc is symmetric and bounded by Nyquist") {
    Rng rng(6);
    DensityMap a = random_density(24, 24, rng);
    DensityMap b = random_density(24, 24, rng);
    FrcResult rab = frc(a, b);
    FrcResult rba = frc(b, a);
    for (std::size_t i = 0; i < rab.frc.size(); ++i)
        CHECK(rab.frc[i] == doctest::Approx(rba.frc[i]).epsilon(1e-9));
    REQUIRE(rab.has_resolution);
    CHECK(rab.resolution >= 2.0 * std::min(a.grid.dx, a.grid.dz));

    DensityMap zero = a;
    zero.counts.fill(0.0);
    CHECK_THROWS(frc(a, zero));
}

TEST_CASE("independent noise maps fall below the half-bit threshold") {
    Rng rng(7);
    DensityMap a = random_density(32, 32, rng);
    DensityMap b = random_density(32, 32, rng);
    FrcResult r = frc(a, b);
    REQUIRE(r.has_resolution);
    std::size_t below = 0, rings = 0;
    for (std::size_t i = 2; i < r.frc.size(); ++i) {
        if (r.ring_counts[i] == 0) continue;
        ++rings;
        if (r.frc[i] < r.threshold[i]) ++below;
    }
    CHECK(below >= (3 * rings) / 4);
}

TEST_CASE("saturation curve grows monotonically and ignores repeats") {
    ImageGrid g;
    g.dx = g.dz = 1e-4;
    g.x0 = 0.0;
    g.z0 = 1e-3;
    g.nx = 16;
    g.nz = 16;
    CHECK(saturation_curve({}, g, 4).empty());

    Track t1;
    t1.id = 0;
    for (int f = 0; f < 10; ++f)
        t1.points.push_back({f, g.x0 + (2.0 + 0.3 * f) * g.dx, g.z0 + 5.0 * g.dz});
    Track t2;
    t2.id = 1;
    for (int f = 0; f < 10; ++f)
        t2.points.push_back({f, g.x0 + 8.0 * g.dx, g.z0 + (2.0 + 0.3 * f) * g.dz});

    std::vector<std::pair<std::size_t, std::size_t>> curve =
        saturation_curve({t1, t2, t1}, g, 4);
    REQUIRE(curve.size() == 3);
    CHECK(curve[0].first == 1);
    CHECK(curve[1].second >= curve[0].second);
    // The repeated track lights no new pixels.
    CHECK(curve[2].second == curve[1].second);
}

TEST_CASE("phase rmse ignores piston and tracks noise level") {
    std::size_t ne = 16;
    std::vector<double> amp(ne, 1.0), ph(ne);
    for (std::size_t n = 0; n < ne; ++n) ph[n] = 0.7 * std::sin(0.4 * static_cast<double>(n));
    AberrationFunction truth = AberrationFunction::from_amp_phase(amp, ph);
    CHECK(phase_rmse(truth, truth) == doctest::Approx(0.0).epsilon(1e-12));

    std::vector<double> shifted(ph);
    for (double& v : shifted) v += 0.9;
    AberrationFunction piston = AberrationFunction::from_amp_phase(amp, shifted);
    CHECK(phase_rmse(piston, truth) <= 1e-9);

    Rng rng(8);
    double total = 0.0;
    const int reps = 200;
    const double sigma = 0.1;
    for (int r = 0; r < reps; ++r) {
        std::vector<double> noisy(ph);
        for (double& v : noisy) v += sigma * rng.gaussian();
        total += phase_rmse(AberrationFunction::from_amp_phase(amp, noisy), truth);
    }
    double mean = total / reps;
    // Piston removal absorbs one degree of freedom.
    double expect = sigma * std::sqrt(static_cast<double>(ne - 1) / static_cast<double>(ne));
    CHECK(std::abs(mean - expect) <= 0.15 * expect);

    CHECK_THROWS(phase_rmse(truth, AberrationFunction::identity(4)));
}

TEST_CASE("fft basics") {
    std::vector<cplx> impulse(8, cplx{});
    impulse[0] = {1.0, 0.0};
    fft_radix2(impulse, false);
    for (const cplx& v : impulse) CHECK(std::abs(v - cplx(1.0, 0.0)) <= 1e-12);

    Rng rng(9);
    std::vector<cplx> sig(16);
    for (cplx& v : sig) v = {rng.gaussian(), rng.gaussian()};
    std::vector<cplx> copy = sig;
    fft_radix2(copy, false);
    double e_time = 0.0, e_freq = 0.0;
    for (const cplx& v : sig) e_time += std::norm(v);
    for (const cplx& v : copy) e_freq += std::norm(v);
    CHECK(std::abs(e_freq - 16.0 * e_time) <= 1e-9 * e_freq);  // Parseval
    fft_radix2(copy, true);
    for (std::size_t i = 0; i < sig.size(); ++i)
        CHECK(std::abs(copy[i] - sig[i]) <= 1e-12);

    std::vector<cplx> bad(6);
    CHECK_THROWS(fft_radix2(bad, false));
}

TEST_CASE("csv writers emit one row per entry") {
    std::string m = metrics_csv({{"frc_resolution", 1.5e-4, "m"},
                                 {"contrast", 20.0, "dB"}},
                                "abc123");
    CHECK(m.rfind("metric,value,units,config_hash\n", 0) == 0);
    CHECK(m.find("frc_resolution,0.00015,m,abc123\n") != std::string::npos);
    CHECK(m.find("contrast,20,dB,abc123\n") != std::string::npos);

    std::string c = curve_csv("lag", "r", {{0.0, 1.0}, {1.0, 0.5}});
    CHECK(c == "lag,r\n0,1\n1,0.5\n");
}
