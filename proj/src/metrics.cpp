#include "ulmpac/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ulmpac {

CoherenceCurve spatial_coherence(const RealignedPatch& patch, std::size_t window) {
    const std::size_t na = patch.num_angles(), nf = patch.num_frames();
    const std::size_t nt = patch.num_samples(), ne = patch.num_elements();
    if (window > nt) throw std::invalid_argument("spatial_coherence: window > samples");
    if (window == 0) window = nt;
    const std::size_t t0 = (nt - window) / 2;

    std::vector<double> acc(ne, 0.0);
    std::size_t slices = 0;
    for (std::size_t f = 0; f < nf; ++f) {
        for (std::size_t a = 0; a < na; ++a) {
            double denom = 0.0;
            for (std::size_t n = 0; n < ne; ++n)
                for (std::size_t t = t0; t < t0 + window; ++t)
                    denom += std::norm(patch.data.at4(a, f, t, n));
            if (denom <= 0.0) throw std::invalid_argument("spatial_coherence: zero-energy patch");
            for (std::size_t m = 0; m < ne; ++m) {
                cplx num{};
                for (std::size_t n = 0; n + m < ne; ++n)
                    for (std::size_t t = t0; t < t0 + window; ++t)
                        num += patch.data.at4(a, f, t, n) *
                               std::conj(patch.data.at4(a, f, t, n + m));
                double scale = static_cast<double>(ne) / static_cast<double>(ne - m);
                acc[m] += scale * num.real() / denom;
            }
            ++slices;
        }
    }
    CoherenceCurve curve;
    curve.r.resize(ne);
    for (std::size_t m = 0; m < ne; ++m) curve.r[m] = acc[m] / static_cast<double>(slices);

    // Trapezoid over lag mapped to [0, 1].
    double auc = 0.0;
    if (ne > 1) {
        for (std::size_t m = 0; m + 1 < ne; ++m) auc += 0.5 * (curve.r[m] + curve.r[m + 1]);
        auc /= static_cast<double>(ne - 1);
    } else {
        auc = curve.r[0];
    }
    curve.auc = auc;
    return curve;
}

double contrast_ratio(const BeamformedImage& image, const Roi& signal, const Roi& background) {
    auto check = [&](const Roi& r) {
        if (r.z1 <= r.z0 || r.x1 <= r.x0 || r.z1 > image.grid.nz || r.x1 > image.grid.nx)
            throw std::invalid_argument("contrast_ratio: bad ROI");
    };
    check(signal);
    check(background);
    bool overlap = signal.z0 < background.z1 && background.z0 < signal.z1 &&
                   signal.x0 < background.x1 && background.x0 < signal.x1;
    if (overlap) throw std::invalid_argument("contrast_ratio: ROIs overlap");

    double peak = 0.0;
    for (std::size_t z = signal.z0; z < signal.z1; ++z)
        for (std::size_t x = signal.x0; x < signal.x1; ++x)
            peak = std::max(peak, std::abs(image.at(z, x)));
    double ss = 0.0;
    std::size_t n = 0;
    for (std::size_t z = background.z0; z < background.z1; ++z)
        for (std::size_t x = background.x0; x < background.x1; ++x) {
            ss += std::norm(image.at(z, x));
            ++n;
        }
    double rms = std::sqrt(ss / static_cast<double>(n));
    if (rms <= 0.0) throw std::invalid_argument("contrast_ratio: zero background");
    return 20.0 * std::log10(peak / rms);
}

double fwhm(const std::vector<double>& profile, double spacing) {
    const std::size_t n = profile.size();
    if (n < 3) throw std::invalid_argument("fwhm: profile too short");
    std::size_t ipk = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (profile[i] > profile[ipk]) ipk = i;
    if (ipk == 0 || ipk == n - 1)
        throw std::invalid_argument("fwhm: peak not interior");
    double half = 0.5 * profile[ipk];

    double left = -1.0, right = -1.0;
    for (std::size_t i = ipk; i > 0; --i) {
        if (profile[i - 1] <= half) {
            double t = (profile[i] - half) / (profile[i] - profile[i - 1]);
            left = static_cast<double>(i) - t;
            break;
        }
    }
    for (std::size_t i = ipk; i + 1 < n; ++i) {
        if (profile[i + 1] <= half) {
            double t = (profile[i] - half) / (profile[i] - profile[i + 1]);
            right = static_cast<double>(i) + t;
            break;
        }
    }
    if (left < 0.0 || right < 0.0)
        throw std::invalid_argument("fwhm: no half-maximum crossing");
    return (right - left) * spacing;
}

void fft_radix2(std::vector<cplx>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw std::invalid_argument("fft_radix2: size must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                cplx u = a[i + k];
                cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (cplx& v : a) v /= static_cast<double>(n);
}

std::vector<cplx> fft2_real(const RealTensor& m, std::size_t n) {
    if (m.ndim() != 2) throw std::invalid_argument("fft2_real: need 2-D input");
    if (m.dim(0) > n || m.dim(1) > n)
        throw std::invalid_argument("fft2_real: pad size smaller than input");
    std::vector<cplx> grid(n * n);
    for (std::size_t i = 0; i < m.dim(0); ++i)
        for (std::size_t j = 0; j < m.dim(1); ++j)
            grid[i * n + j] = m.at2(i, j);

    std::vector<cplx> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(grid.begin() + static_cast<long>(i * n),
                  grid.begin() + static_cast<long>((i + 1) * n), row.begin());
        fft_radix2(row, false);
        std::copy(row.begin(), row.end(), grid.begin() + static_cast<long>(i * n));
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) row[i] = grid[i * n + j];
        fft_radix2(row, false);
        for (std::size_t i = 0; i < n; ++i) grid[i * n + j] = row[i];
    }
    return grid;
}

double half_bit_threshold(std::size_t ring_count, double snr_constant) {
    double rn = std::sqrt(static_cast<double>(std::max<std::size_t>(ring_count, 1)));
    double s = snr_constant;
    return (s + 2.0 * std::sqrt(s) / rn + 1.0 / rn) / (s + 2.0 * std::sqrt(s) / rn + 1.0);
}

FrcResult frc(const DensityMap& map_a, const DensityMap& map_b, double snr_constant) {
    if (!(map_a.grid == map_b.grid))
        throw std::invalid_argument("frc: grids differ");
    double ea = 0.0, eb = 0.0;
    for (std::size_t i = 0; i < map_a.counts.size(); ++i) {
        ea += map_a.counts[i] * map_a.counts[i];
        eb += map_b.counts[i] * map_b.counts[i];
    }
    if (ea <= 0.0 || eb <= 0.0) throw std::invalid_argument("frc: all-zero map");

    std::size_t n = 1;
    while (n < std::max(map_a.grid.nz, map_a.grid.nx)) n <<= 1;
    std::vector<cplx> fa = fft2_real(map_a.counts, n);
    std::vector<cplx> fb = fft2_real(map_b.counts, n);

    const std::size_t nrings = n / 2;
    std::vector<cplx> cross(nrings);
    std::vector<double> pa(nrings, 0.0), pb(nrings, 0.0);
    std::vector<std::size_t> counts(nrings, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double fi = i <= n / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            double fj = j <= n / 2 ? static_cast<double>(j) : static_cast<double>(j) - static_cast<double>(n);
            auto r = static_cast<std::size_t>(std::lround(std::hypot(fi, fj)));
            if (r >= nrings) continue;
            cross[r] += fa[i * n + j] * std::conj(fb[i * n + j]);
            pa[r] += std::norm(fa[i * n + j]);
            pb[r] += std::norm(fb[i * n + j]);
            counts[r]++;
        }
    }

    FrcResult out;
    out.snr_constant = snr_constant;
    out.frc.resize(nrings);
    out.threshold.resize(nrings);
    out.ring_counts = counts;
    for (std::size_t r = 0; r < nrings; ++r) {
        double denom = std::sqrt(pa[r] * pb[r]);
        out.frc[r] = denom > 0.0 ? cross[r].real() / denom : 0.0;
        out.threshold[r] = half_bit_threshold(counts[r], snr_constant);
    }

    // Resolution = 1 / (first frequency where FRC drops below threshold).
    const double pixel = std::min(map_a.grid.dx, map_a.grid.dz);
    for (std::size_t r = 1; r < nrings; ++r) {
        if (out.frc[r] < out.threshold[r]) {
            double freq = static_cast<double>(r) / (static_cast<double>(n) * pixel);
            out.resolution = 1.0 / freq;
            out.has_resolution = true;
            break;
        }
    }
    return out;
}

std::vector<std::pair<std::size_t, std::size_t>> saturation_curve(
    const std::vector<Track>& tracks, const ImageGrid& base_grid, int factor) {
    ImageGrid fine = refine_grid(base_grid, factor);
    std::vector<char> lit(fine.nz * fine.nx, 0);
    std::size_t total = 0;
    std::vector<std::pair<std::size_t, std::size_t>> curve;
    for (std::size_t i = 0; i < tracks.size(); ++i) {
        for (std::size_t p : rasterize_track(tracks[i], fine)) {
            if (!lit[p]) {
                lit[p] = 1;
                ++total;
            }
        }
        curve.emplace_back(i + 1, total);
    }
    return curve;
}

double phase_rmse(const AberrationFunction& est, const AberrationFunction& truth) {
    if (est.size() != truth.size())
        throw std::invalid_argument("phase_rmse: length mismatch");
    const std::size_t ne = est.size();
    auto piston = [](const AberrationFunction& f) {
        cplx s{};
        for (std::size_t n = 0; n < f.size(); ++n)
            s += f.value(n) == cplx{} ? cplx{} : f.value(n) / std::abs(f.value(n));
        return s == cplx{} ? 0.0 : std::arg(s);
    };
    double pe = piston(est), pt = piston(truth);
    double ss = 0.0;
    for (std::size_t n = 0; n < ne; ++n) {
        double d = wrap_phase((est.phase(n) - pe) - (truth.phase(n) - pt));
        ss += d * d;
    }
    return std::sqrt(ss / static_cast<double>(ne));
}

std::string metrics_csv(const std::vector<MetricRow>& rows, const std::string& config_hash) {
    std::ostringstream os;
    os << "metric,value,units,config_hash\n";
    os.precision(12);
    for (const auto& r : rows)
        os << r.metric << ',' << r.value << ',' << r.units << ',' << config_hash << '\n';
    return os.str();
}

std::string curve_csv(const std::string& xname, const std::string& yname,
                      const std::vector<std::pair<double, double>>& points) {
    std::ostringstream os;
    os << xname << ',' << yname << '\n';
    os.precision(12);
    for (const auto& [x, y] : points) os << x << ',' << y << '\n';
    return os.str();
}

}  // namespace ulmpac
