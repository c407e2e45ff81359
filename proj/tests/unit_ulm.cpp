#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ulmpac/rng.hpp"
#include "ulmpac/ulm.hpp"

using namespace ulmpac;

namespace {

ImageGrid small_grid(std::size_t nz = 24, std::size_t nx = 20) {
    ImageGrid g;
    g.dx = 1e-4;
    g.dz = 1e-4;
    g.x0 = -1e-3;
    g.z0 = 1e-3;
    g.nx = nx;
    g.nz = nz;
    return g;
}

BeamformedImage blank_image(const ImageGrid& g) {
    BeamformedImage im;
    im.grid = g;
    im.pixels = ComplexTensor({g.nz, g.nx});
    return im;
}

// Gaussian blob with a linear phase, placed at pixel (iz, ix).
void add_blob(BeamformedImage& im, double iz, double ix, double amp, double sigma = 1.2) {
    for (std::size_t z = 0; z < im.grid.nz; ++z)
        for (std::size_t x = 0; x < im.grid.nx; ++x) {
            double dz = static_cast<double>(z) - iz;
            double dx = static_cast<double>(x) - ix;
            double env = amp * std::exp(-0.5 * (dz * dz + dx * dx) / (sigma * sigma));
            im.at(z, x) += env * std::exp(cplx(0.0, 0.4 * dz - 0.3 * dx));
        }
}

ComplexTensor blob_template(std::size_t tz = 7, std::size_t tx = 7, double sigma = 1.2) {
    ComplexTensor t({tz, tx});
    double cz = 0.5 * static_cast<double>(tz - 1);
    double cx = 0.5 * static_cast<double>(tx - 1);
    for (std::size_t z = 0; z < tz; ++z)
        for (std::size_t x = 0; x < tx; ++x) {
            double dz = static_cast<double>(z) - cz;
            double dx = static_cast<double>(x) - cx;
            double env = std::exp(-0.5 * (dz * dz + dx * dx) / (sigma * sigma));
            t.data()[z * tx + x] = env * std::exp(cplx(0.0, 0.4 * dz - 0.3 * dx));
        }
    return t;
}

double stack_energy(const std::vector<BeamformedImage>& stack) {
    double e = 0.0;
    for (const auto& im : stack)
        for (std::size_t i = 0; i < im.pixels.size(); ++i) e += std::norm(im.pixels[i]);
    return e;
}

// Leading singular value of the Casorati matrix via power iteration on the
// small frame-by-frame Gram matrix.
double top_singular_value(const std::vector<BeamformedImage>& stack) {
    const std::size_t nf = stack.size(), np = stack[0].pixels.size();
    std::vector<std::vector<cplx>> gram(nf, std::vector<cplx>(nf));
    for (std::size_t a = 0; a < nf; ++a)
        for (std::size_t b = 0; b < nf; ++b) {
            cplx s{};
            for (std::size_t p = 0; p < np; ++p)
                s += std::conj(stack[a].pixels[p]) * stack[b].pixels[p];
            gram[a][b] = s;
        }
    std::vector<cplx> v(nf, cplx(1.0, 0.0));
    double lam = 0.0;
    for (int it = 0; it < 500; ++it) {
        std::vector<cplx> nv(nf);
        for (std::size_t a = 0; a < nf; ++a)
            for (std::size_t b = 0; b < nf; ++b) nv[a] += gram[a][b] * v[b];
        double nrm = 0.0;
        for (const cplx& c : nv) nrm += std::norm(c);
        nrm = std::sqrt(nrm);
        for (cplx& c : nv) c /= nrm;
        lam = nrm;
        v = nv;
    }
    return std::sqrt(lam);
}

std::vector<int> brute_force_assign(const std::vector<std::vector<double>>& cost,
                                    double forbidden) {
    const std::size_t nr = cost.size(), nc = cost[0].size();
    const std::size_t n = std::max(nr, nc);
    std::vector<std::vector<double>> sq(n, std::vector<double>(n, forbidden));
    for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) sq[i][j] = std::min(cost[i][j], forbidden);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    std::vector<std::size_t> best_perm = perm;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += sq[i][perm[i]];
        if (s < best) {
            best = s;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    std::vector<int> out(nr, -1);
    for (std::size_t i = 0; i < nr; ++i) {
        std::size_t j = best_perm[i];
        if (j < nc && cost[i][j] < forbidden) out[i] = static_cast<int>(j);
    }
    return out;
}

double assignment_cost(const std::vector<std::vector<double>>& cost,
                       const std::vector<int>& match, double forbidden) {
    double s = 0.0;
    for (std::size_t i = 0; i < match.size(); ++i)
        s += match[i] >= 0 ? cost[i][static_cast<std::size_t>(match[i])] : forbidden;
    return s;
}

}  // namespace

TEST_CASE("svd filter with zero cutoff is the identity") {
    ImageGrid g = small_grid(8, 6);
    Rng rng(1);
    std::vector<BeamformedImage> stack;
    for (int f = 0; f < 5; ++f) {
        BeamformedImage im = blank_image(g);
        for (std::size_t i = 0; i < im.pixels.size(); ++i)
            im.pixels[i] = {rng.gaussian(), rng.gaussian()};
        stack.push_back(im);
    }
    std::vector<BeamformedImage> out = svd_clutter_filter(stack, 0);
    for (std::size_t f = 0; f < stack.size(); ++f)
        for (std::size_t i = 0; i < stack[f].pixels.size(); ++i)
            CHECK(std::abs(out[f].pixels[i] - stack[f].pixels[i]) <= 1e-9);

    CHECK_THROWS(svd_clutter_filter({stack[0]}, 0));
    CHECK_THROWS(svd_clutter_filter(stack, 5));
    CHECK_THROWS(svd_clutter_filter(stack, -1));
}

TEST_CASE("svd filter removes exactly the leading component energy") {
    ImageGrid g = small_grid(8, 6);
    Rng rng(2);
    std::vector<BeamformedImage> stack;
    for (int f = 0; f < 6; ++f) {
        BeamformedImage im = blank_image(g);
        for (std::size_t i = 0; i < im.pixels.size(); ++i)
            im.pixels[i] = {rng.gaussian(), rng.gaussian()};
        stack.push_back(im);
    }
    double s1 = top_singular_value(stack);
    double before = stack_energy(stack);
    double after = stack_energy(svd_clutter_filter(stack, 1));
    CHECK(std::abs(before - after - s1 * s1) <= 1e-6 * before);
}

TEST_CASE("svd filter suppresses static clutter and keeps the mover") {
    ImageGrid g = small_grid();
    Rng rng(3);
    BeamformedImage clutter = blank_image(g);
    for (std::size_t i = 0; i < clutter.pixels.size(); ++i)
        clutter.pixels[i] = {5.0 * rng.gaussian(), 5.0 * rng.gaussian()};

    std::vector<BeamformedImage> static_stack, mixed;
    std::vector<std::pair<std::size_t, std::size_t>> pos;
    for (int f = 0; f < 10; ++f) {
        static_stack.push_back(clutter);
        BeamformedImage im = clutter;
        std::size_t iz = 5 + static_cast<std::size_t>(f);
        std::size_t ix = 4 + static_cast<std::size_t>(f);
        add_blob(im, static_cast<double>(iz), static_cast<double>(ix), 1.0);
        mixed.push_back(im);
        pos.emplace_back(iz, ix);
    }
    double kept = stack_energy(svd_clutter_filter(static_stack, 1));
    CHECK(kept <= 0.1 * stack_energy(static_stack));

    std::vector<BeamformedImage> filtered = svd_clutter_filter(mixed, 1);
    for (std::size_t f = 0; f < filtered.size(); ++f)
        CHECK(std::abs(filtered[f].at(pos[f].first, pos[f].second)) >= 0.5);
}

TEST_CASE("detection recovers an exact psf with unit correlation") {
    ImageGrid g = small_grid();
    BeamformedImage im = blank_image(g);
    add_blob(im, 10.0, 8.0, 2.0);
    ComplexTensor tpl = blob_template();
    std::vector<Detection> dets = detect_microbubbles(im, tpl, 0.9);
    REQUIRE(dets.size() == 1);
    CHECK(dets[0].correlation >= 0.99);
    CHECK(std::abs(dets[0].x - g.x(8)) <= 1e-6 * g.dx);
    CHECK(std::abs(dets[0].z - g.z(10)) <= 1e-6 * g.dz);
}

TEST_CASE("detection separates two psfs and rejects noise") {
    ImageGrid g = small_grid();
    BeamformedImage im = blank_image(g);
    add_blob(im, 6.0, 5.0, 1.0);
    add_blob(im, 16.0, 13.0, 1.0);
    ComplexTensor tpl = blob_template();
    std::vector<Detection> dets = detect_microbubbles(im, tpl, 0.8);
    REQUIRE(dets.size() == 2);

    BeamformedImage noise = blank_image(g);
    Rng rng(7);
    for (std::size_t i = 0; i < noise.pixels.size(); ++i)
        noise.pixels[i] = {0.1 * rng.gaussian(), 0.1 * rng.gaussian()};
    CHECK(detect_microbubbles(noise, tpl, 0.9).empty());
    CHECK_THROWS(detect_microbubbles(im, ComplexTensor({3, 3}), 0.5));
}

TEST_CASE("sub-pixel refinement tracks an off-grid blob") {
    ImageGrid g = small_grid();
    BeamformedImage im = blank_image(g);
    add_blob(im, 10.3, 8.4, 1.0);
    std::vector<Detection> dets = detect_microbubbles(im, blob_template(), 0.8);
    REQUIRE(dets.size() == 1);
    CHECK(std::abs(dets[0].z - (g.z0 + 10.3 * g.dz)) <= 0.15 * g.dz);
    CHECK(std::abs(dets[0].x - (g.x0 + 8.4 * g.dx)) <= 0.15 * g.dx);
}

TEST_CASE("hungarian assignment matches brute force") {
    Rng rng(11);
    const double forbidden = 100.0;
    for (int it = 0; it < 200; ++it) {
        std::size_t nr = 1 + rng.uniform_index(4);
        std::size_t nc = 1 + rng.uniform_index(4);
        std::vector<std::vector<double>> cost(nr, std::vector<double>(nc));
        for (auto& row : cost)
            for (double& c : row) {
                c = rng.uniform(0.0, 10.0);
                if (rng.uniform() < 0.2) c = forbidden + 1.0;  // forbidden pair
            }
        std::vector<int> got = hungarian_assign(cost, forbidden);
        std::vector<int> want = brute_force_assign(cost, forbidden);
        // Optimal assignments may differ under ties; the total cost may not.
        CHECK(assignment_cost(cost, got, forbidden) ==
              doctest::Approx(assignment_cost(cost, want, forbidden)).epsilon(1e-12));
        // No duplicated column.
        std::vector<int> used;
        for (int j : got)
            if (j >= 0) used.push_back(j);
        std::sort(used.begin(), used.end());
        CHECK(std::adjacent_find(used.begin(), used.end()) == used.end());
    }
}

TEST_CASE("linker follows a single moving bubble") {
    ImageGrid g = small_grid();
    std::vector<std::vector<Detection>> dets(20);
    for (std::size_t f = 0; f < 20; ++f)
        dets[f].push_back({g.x0 + (2.0 + 0.5 * static_cast<double>(f)) * g.dx,
                           g.z0 + 5.0 * g.dz, 1.0});
    std::vector<Track> tracks = link_tracks(dets, 2.0, 16, g.dx);
    REQUIRE(tracks.size() == 1);
    CHECK(tracks[0].length() == 20);
    for (std::size_t f = 0; f < 20; ++f)
        CHECK(tracks[0].points[f].frame == static_cast<int>(f));

    // Ten frames fall below the minimum length.
    std::vector<std::vector<Detection>> short_dets(dets.begin(), dets.begin() + 10);
    CHECK(link_tracks(short_dets, 2.0, 16, g.dx).empty());

    // A jump beyond the gate splits the track; neither half reaches 16 frames.
    std::vector<std::vector<Detection>> jump = dets;
    for (std::size_t f = 10; f < 20; ++f) jump[f][0].z += 10.0 * g.dz;
    CHECK(link_tracks(jump, 2.0, 16, g.dx).empty());
    CHECK(link_tracks(jump, 2.0, 10, g.dx).size() == 2);
}

TEST_CASE("linking is invariant to detection order within a frame") {
    ImageGrid g = small_grid();
    Rng rng(13);
    std::vector<std::vector<Detection>> dets(18);
    for (std::size_t f = 0; f < 18; ++f) {
        dets[f].push_back({g.x0 + (2.0 + 0.4 * static_cast<double>(f)) * g.dx,
                           g.z0 + 4.0 * g.dz, 1.0});
        dets[f].push_back({g.x0 + (15.0 - 0.4 * static_cast<double>(f)) * g.dx,
                           g.z0 + 14.0 * g.dz, 1.0});
    }
    std::vector<std::vector<Detection>> shuffled = dets;
    for (auto& frame : shuffled)
        if (rng.uniform() < 0.5) std::swap(frame[0], frame[1]);

    std::vector<Track> a = link_tracks(dets, 2.0, 16, g.dx);
    std::vector<Track> b = link_tracks(shuffled, 2.0, 16, g.dx);
    REQUIRE(a.size() == 2);
    REQUIRE(b.size() == 2);
    auto key = [](const Track& t) { return t.points[0].x; };
    std::sort(a.begin(), a.end(), [&](const Track& u, const Track& v) { return key(u) < key(v); });
    std::sort(b.begin(), b.end(), [&](const Track& u, const Track& v) { return key(u) < key(v); });
    for (std::size_t t = 0; t < 2; ++t) {
        REQUIRE(a[t].length() == b[t].length());
        for (std::size_t i = 0; i < a[t].length(); ++i) {
            CHECK(a[t].points[i].x == b[t].points[i].x);
            CHECK(a[t].points[i].z == b[t].points[i].z);
        }
    }
}

TEST_CASE("density accumulation rasterizes tracks additively") {
    ImageGrid g = small_grid(10, 10);
    const int factor = 4;

    Track horiz;
    horiz.id = 0;
    for (int f = 0; f < 30; ++f)
        horiz.points.push_back({f, g.x0 + (1.0 + 0.2 * f) * g.dx, g.z0 + 4.0 * g.dz});
    Track vert;
    vert.id = 1;
    for (int f = 0; f < 30; ++f)
        vert.points.push_back({f, g.x0 + 6.0 * g.dx, g.z0 + (1.0 + 0.2 * f) * g.dz});

    DensityMap both = accumulate_density({horiz, vert}, g, factor, 25);
    DensityMap only_h = accumulate_density({horiz}, g, factor, 25);
    DensityMap only_v = accumulate_density({vert}, g, factor, 25);
    REQUIRE(both.grid.nx == g.nx * factor);
    REQUIRE(both.grid.nz == g.nz * factor);
    for (std::size_t i = 0; i < both.counts.size(); ++i)
        CHECK(both.counts[i] == only_h.counts[i] + only_v.counts[i]);

    // The horizontal track paints one fine row, contiguous along x.
    std::vector<std::size_t> px = rasterize_track(horiz, both.grid);
    CHECK(!px.empty());
    for (std::size_t p : px) CHECK(p / both.grid.nx == px[0] / both.grid.nx);

    // Below the minimum length nothing is painted.
    Track short_track;
    short_track.id = 2;
    for (int f = 0; f < 20; ++f)
        short_track.points.push_back({f, g.x0 + (1.0 + 0.2 * f) * g.dx, g.z0 + 2.0 * g.dz});
    DensityMap none = accumulate_density({short_track}, g, factor, 25);
    double total = 0.0;
    for (std::size_t i = 0; i < none.counts.size(); ++i) total += none.counts[i];
    CHECK(total == 0.0);

    // A single-point track paints exactly one pixel.
    Track dot;
    dot.points.push_back({0, g.x0 + 3.0 * g.dx, g.z0 + 3.0 * g.dz});
    CHECK(rasterize_track(dot, both.grid).size() == 1);
}

TEST_CASE("dct smoothing identities") {
    Rng rng(17);
    RealTensor y({8, 10});
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.gaussian();
    RealTensor w({8, 10});
    w.fill(1.0);

    RealTensor same = dct_smooth(y, w, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(same[i] - y[i]) <= 1e-9);

    RealTensor c({8, 10});
    c.fill(3.25);
    RealTensor sc = dct_smooth(c, w, 50.0);
    for (std::size_t i = 0; i < sc.size(); ++i) CHECK(std::abs(sc[i] - 3.25) <= 1e-8);

    CHECK_THROWS(dct_smooth(y, RealTensor({3, 3}), 1.0));
}

TEST_CASE("gcv smoothing recovers a smooth field from noisy holes") {
    Rng rng(19);
    std::size_t nz = 12, nx = 14;
    RealTensor truth({nz, nx}), y({nz, nx}), w({nz, nx});
    for (std::size_t i = 0; i < nz; ++i)
        for (std::size_t j = 0; j < nx; ++j) {
            truth.at2(i, j) = std::sin(0.4 * static_cast<double>(i)) +
                              0.3 * std::cos(0.5 * static_cast<double>(j));
            bool seen = rng.uniform() < 0.7;
            w.at2(i, j) = seen ? 1.0 : 0.0;
            y.at2(i, j) = seen ? truth.at2(i, j) + 0.05 * rng.gaussian() : 0.0;
        }
    double s = dct_smooth_gcv(y, w);
    CHECK(s > 0.0);
    RealTensor sm = dct_smooth(y, w, -1.0);
    double err = 0.0;
    for (std::size_t i = 0; i < sm.size(); ++i) {
        double d = sm[i] - truth[i];
        err += d * d / static_cast<double>(sm.size());
    }
    CHECK(std::sqrt(err) <= 0.2);
}

TEST_CASE("aberration map interpolation reproduces a linear phase field") {
    ImageGrid g;
    g.dx = 1e-3;
    g.dz = 1e-3;
    g.x0 = 0.0;
    g.z0 = 1e-3;
    g.nx = 8;
    g.nz = 8;
    const std::size_t ne = 6;
    std::vector<std::pair<std::pair<double, double>, AberrationFunction>> samples;
    auto truth_phase = [&](double x, std::size_t n) {
        return 0.3 * (x / (g.dx * 7.0)) * (static_cast<double>(n) / 5.0);
    };
    for (std::size_t iz = 0; iz < g.nz; ++iz)
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            std::vector<double> amp(ne, 1.0), ph(ne);
            for (std::size_t n = 0; n < ne; ++n) ph[n] = truth_phase(g.x(ix), n);
            samples.push_back({{g.x(ix), g.z(iz)},
                               AberrationFunction::from_amp_phase(amp, ph)});
        }
    AberrationMap map = interpolate_aberration_map(samples, g, 1e-3);
    for (std::size_t iz = 0; iz < g.nz; ++iz)
        for (std::size_t ix = 0; ix < g.nx; ++ix) {
            AberrationFunction fn = map.at(iz, ix);
            for (std::size_t n = 0; n < ne; ++n) {
                CHECK(std::abs(wrap_phase(fn.phase(n) - truth_phase(g.x(ix), n))) <= 0.05);
                CHECK(fn.amplitude(n) > 0.0);
                CHECK(fn.amplitude(n) <= 1.0 + 1e-12);
            }
        }
}

TEST_CASE("aberration map from one sample is constant") {
    ImageGrid g;
    g.dx = 1e-3;
    g.dz = 1e-3;
    g.x0 = 0.0;
    g.z0 = 1e-3;
    g.nx = 5;
    g.nz = 4;
    std::vector<double> amp(4, 1.0), ph = {0.1, -0.2, 0.3, 0.0};
    AberrationFunction fn = AberrationFunction::from_amp_phase(amp, ph);
    AberrationMap map = interpolate_aberration_map({{{g.x(2), g.z(1)}, fn}}, g, 1.0);
    for (std::size_t iz = 0; iz < g.nz; ++iz)
        for (std::size_t ix = 0; ix < g.nx; ++ix)
            for (std::size_t n = 0; n < 4; ++n)
                CHECK(std::abs(map.at(iz, ix).value(n) - fn.value(n)) <= 1e-6);
    CHECK_THROWS(interpolate_aberration_map({}, g, 1.0));
}
