#include "ulmpac/ulm.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <set>

namespace ulmpac {

AberrationFunction AberrationMap::at(std::size_t iz, std::size_t ix) const {
    const std::size_t ne = values.dim(2);
    std::vector<cplx> v(ne);
    for (std::size_t n = 0; n < ne; ++n) v[n] = values.at3(iz, ix, n);
    return AberrationFunction(std::move(v));
}

std::vector<BeamformedImage> svd_clutter_filter(const std::vector<BeamformedImage>& stack,
                                                int cutoff_rank) {
    if (stack.size() < 2) throw std::invalid_argument("svd_clutter_filter: need >= 2 frames");
    const std::size_t nf = stack.size();
    const std::size_t np = stack[0].pixels.size();
    for (const auto& im : stack)
        if (im.pixels.size() != np || !(im.grid == stack[0].grid))
            throw std::invalid_argument("svd_clutter_filter: inconsistent stack");
    if (cutoff_rank < 0 || static_cast<std::size_t>(cutoff_rank) >= std::min(np, nf))
        throw std::invalid_argument("svd_clutter_filter: cutoff_rank out of range");
    if (cutoff_rank == 0) return stack;

    Eigen::MatrixXcd casorati(np, nf);
    for (std::size_t f = 0; f < nf; ++f)
        for (std::size_t p = 0; p < np; ++p)
            casorati(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(f)) =
                stack[f].pixels[p];

    Eigen::BDCSVD<Eigen::MatrixXcd> svd(casorati, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXcd u = svd.matrixU();
    Eigen::MatrixXcd v = svd.matrixV();
    Eigen::VectorXd s = svd.singularValues();

    Eigen::MatrixXcd removed = Eigen::MatrixXcd::Zero(np, nf);
    for (int k = 0; k < cutoff_rank; ++k)
        removed += s(k) * u.col(k) * v.col(k).adjoint();
    Eigen::MatrixXcd filtered = casorati - removed;

    std::vector<BeamformedImage> out(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        out[f].grid = stack[f].grid;
        out[f].out_of_range = stack[f].out_of_range;
        out[f].pixels = ComplexTensor({stack[f].pixels.dim(0), stack[f].pixels.dim(1)});
        for (std::size_t p = 0; p < np; ++p)
            out[f].pixels[p] = filtered(static_cast<Eigen::Index>(p),
                                        static_cast<Eigen::Index>(f));
    }
    return out;
}

std::vector<Detection> detect_microbubbles(const BeamformedImage& image,
                                           const ComplexTensor& psf_template,
                                           double corr_threshold) {
    if (psf_template.ndim() != 2)
        throw std::invalid_argument("detect_microbubbles: template must be 2-D");
    const std::size_t nz = image.grid.nz, nx = image.grid.nx;
    const std::size_t tz = psf_template.dim(0), tx = psf_template.dim(1);
    if (tz > nz || tx > nx)
        throw std::invalid_argument("detect_microbubbles: template larger than image");

    double tpl_energy = 0.0;
    for (std::size_t i = 0; i < psf_template.size(); ++i)
        tpl_energy += std::norm(psf_template[i]);
    if (tpl_energy <= 0.0)
        throw std::invalid_argument("detect_microbubbles: zero template");

    // Correlation magnitude map indexed by template-center position.
    const std::size_t cz = tz / 2, cx = tx / 2;
    RealTensor ncc({nz, nx});
    for (std::size_t z0 = 0; z0 + tz <= nz; ++z0) {
        for (std::size_t x0 = 0; x0 + tx <= nx; ++x0) {
            cplx dot{};
            double energy = 0.0;
            for (std::size_t i = 0; i < tz; ++i) {
                for (std::size_t j = 0; j < tx; ++j) {
                    cplx p = image.at(z0 + i, x0 + j);
                    dot += p * std::conj(psf_template.data()[i * tx + j]);
                    energy += std::norm(p);
                }
            }
            double denom = std::sqrt(energy * tpl_energy);
            ncc.at2(z0 + cz, x0 + cx) = denom > 0.0 ? std::abs(dot) / denom : 0.0;
        }
    }

    std::vector<Detection> out;
    for (std::size_t z = 1; z + 1 < nz; ++z) {
        for (std::size_t x = 1; x + 1 < nx; ++x) {
            double v = ncc.at2(z, x);
            if (v < corr_threshold) continue;
            bool is_max = true;
            for (int dz = -1; dz <= 1 && is_max; ++dz)
                for (int dxp = -1; dxp <= 1; ++dxp) {
                    if (dz == 0 && dxp == 0) continue;
                    double nb = ncc.at2(z + static_cast<std::size_t>(dz + 1) - 1,
                                        x + static_cast<std::size_t>(dxp + 1) - 1);
                    if (nb > v || (nb == v && (dz < 0 || (dz == 0 && dxp < 0)))) {
                        is_max = false;
                        break;
                    }
                }
            if (!is_max) continue;
            // Paraboloid fit on the 3x3 neighbourhood, separable vertex.
            double czz = ncc.at2(z - 1, x) - 2.0 * v + ncc.at2(z + 1, x);
            double cxx = ncc.at2(z, x - 1) - 2.0 * v + ncc.at2(z, x + 1);
            double dz_sub = czz < 0.0 ? 0.5 * (ncc.at2(z - 1, x) - ncc.at2(z + 1, x)) / czz : 0.0;
            double dx_sub = cxx < 0.0 ? 0.5 * (ncc.at2(z, x - 1) - ncc.at2(z, x + 1)) / cxx : 0.0;
            dz_sub = std::clamp(dz_sub, -0.5, 0.5);
            dx_sub = std::clamp(dx_sub, -0.5, 0.5);
            Detection d;
            d.x = image.grid.x(x) + dx_sub * image.grid.dx;
            d.z = image.grid.z(z) + dz_sub * image.grid.dz;
            d.correlation = v;
            out.push_back(d);
        }
    }
    return out;
}

namespace {

// Shortest augmenting path assignment (square matrix), O(n^3).
std::vector<int> solve_square_assignment(const std::vector<std::vector<double>>& cost) {
    const std::size_t n = cost.size();
    constexpr double kInf = 1e100;
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::vector<double> minv(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            std::size_t i0 = p[j0], j1 = 0;
            double delta = kInf;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n, -1);
    for (std::size_t j = 1; j <= n; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = static_cast<int>(j - 1);
    return row_to_col;
}

}  // namespace

std::vector<int> hungarian_assign(const std::vector<std::vector<double>>& cost,
                                  double forbidden_cost) {
    const std::size_t nr = cost.size();
    if (nr == 0) return {};
    const std::size_t nc = cost[0].size();
    const std::size_t n = std::max(nr, nc);
    // Pad to square; dummy entries cost slightly below forbidden so real
    // feasible pairs are always preferred.
    std::vector<std::vector<double>> sq(n, std::vector<double>(n, forbidden_cost));
    for (std::size_t i = 0; i < nr; ++i)
        for (std::size_t j = 0; j < nc; ++j) sq[i][j] = std::min(cost[i][j], forbidden_cost);
    std::vector<int> sol = solve_square_assignment(sq);
    std::vector<int> out(nr, -1);
    for (std::size_t i = 0; i < nr; ++i) {
        int j = sol[i];
        if (j >= 0 && static_cast<std::size_t>(j) < nc && cost[i][static_cast<std::size_t>(j)] < forbidden_cost)
            out[i] = j;
    }
    return out;
}

std::vector<Track> link_tracks(const std::vector<std::vector<Detection>>& detections,
                               double max_link_dist_pixels, std::size_t min_track_len,
                               double pixel_size) {
    const double max_dist = max_link_dist_pixels * pixel_size;
    constexpr double kForbidden = 1e50;

    struct Open {
        Track track;
        Detection last;
    };
    std::vector<Open> open;
    std::vector<Track> done;
    int next_id = 0;

    for (std::size_t f = 0; f < detections.size(); ++f) {
        const auto& dets = detections[f];
        std::vector<int> match(open.size(), -1);
        if (!open.empty() && !dets.empty()) {
            std::vector<std::vector<double>> cost(open.size(),
                                                  std::vector<double>(dets.size()));
            for (std::size_t i = 0; i < open.size(); ++i) {
                for (std::size_t j = 0; j < dets.size(); ++j) {
                    double d = std::hypot(open[i].last.x - dets[j].x,
                                          open[i].last.z - dets[j].z);
                    cost[i][j] = d <= max_dist ? d : kForbidden;
                }
            }
            match = hungarian_assign(cost, kForbidden);
        }

        std::vector<Open> still_open;
        std::vector<char> det_used(dets.size(), 0);
        for (std::size_t i = 0; i < open.size(); ++i) {
            if (match[i] >= 0) {
                auto j = static_cast<std::size_t>(match[i]);
                det_used[j] = 1;
                open[i].track.points.push_back({static_cast<int>(f), dets[j].x, dets[j].z});
                open[i].last = dets[j];
                still_open.push_back(std::move(open[i]));
            } else {
                // Track ends at its first miss; no gap filling.
                if (open[i].track.length() >= min_track_len)
                    done.push_back(std::move(open[i].track));
            }
        }
        for (std::size_t j = 0; j < dets.size(); ++j) {
            if (det_used[j]) continue;
            Open o;
            o.track.id = next_id++;
            o.track.points.push_back({static_cast<int>(f), dets[j].x, dets[j].z});
            o.last = dets[j];
            still_open.push_back(std::move(o));
        }
        open = std::move(still_open);
    }
    for (auto& o : open)
        if (o.track.length() >= min_track_len) done.push_back(std::move(o.track));

    std::sort(done.begin(), done.end(),
              [](const Track& a, const Track& b) { return a.id < b.id; });
    return done;
}

ImageGrid refine_grid(const ImageGrid& base, int factor) {
    if (factor < 1) throw std::invalid_argument("refine_grid: factor >= 1");
    ImageGrid fine = base;
    fine.dx = base.dx / factor;
    fine.dz = base.dz / factor;
    fine.nx = base.nx * static_cast<std::size_t>(factor);
    fine.nz = base.nz * static_cast<std::size_t>(factor);
    return fine;
}

std::vector<std::size_t> rasterize_track(const Track& track, const ImageGrid& fine) {
    std::set<std::size_t> pixels;
    const double step = 0.5 * std::min(fine.dx, fine.dz);
    for (std::size_t i = 0; i + 1 < track.points.size(); ++i) {
        double x0 = track.points[i].x, z0 = track.points[i].z;
        double x1 = track.points[i + 1].x, z1 = track.points[i + 1].z;
        double len = std::hypot(x1 - x0, z1 - z0);
        auto nsteps = static_cast<std::size_t>(std::ceil(len / step)) + 1;
        for (std::size_t s = 0; s <= nsteps; ++s) {
            double t = static_cast<double>(s) / static_cast<double>(nsteps);
            double x = x0 + t * (x1 - x0);
            double z = z0 + t * (z1 - z0);
            auto ix = static_cast<long>(std::lround((x - fine.x0) / fine.dx));
            auto iz = static_cast<long>(std::lround((z - fine.z0) / fine.dz));
            if (ix < 0 || iz < 0 || ix >= static_cast<long>(fine.nx) ||
                iz >= static_cast<long>(fine.nz))
                continue;
            pixels.insert(static_cast<std::size_t>(iz) * fine.nx + static_cast<std::size_t>(ix));
        }
    }
    if (track.points.size() == 1) {
        auto ix = static_cast<long>(std::lround((track.points[0].x - fine.x0) / fine.dx));
        auto iz = static_cast<long>(std::lround((track.points[0].z - fine.z0) / fine.dz));
        if (ix >= 0 && iz >= 0 && ix < static_cast<long>(fine.nx) && iz < static_cast<long>(fine.nz))
            pixels.insert(static_cast<std::size_t>(iz) * fine.nx + static_cast<std::size_t>(ix));
    }
    return {pixels.begin(), pixels.end()};
}

DensityMap accumulate_density(const std::vector<Track>& tracks, const ImageGrid& base_grid,
                              int factor, std::size_t min_len) {
    DensityMap map;
    map.grid = refine_grid(base_grid, factor);
    map.counts = RealTensor({map.grid.nz, map.grid.nx});
    for (const Track& t : tracks) {
        if (t.length() < min_len) continue;
        for (std::size_t p : rasterize_track(t, map.grid)) map.counts[p] += 1.0;
    }
    return map;
}

namespace {

// Orthonormal DCT-II along both axes via precomputed basis matrices.
struct Dct2d {
    Eigen::MatrixXd bz, bx;  // [n x n], rows = frequency index

    explicit Dct2d(std::size_t nz, std::size_t nx) {
        bz = basis(nz);
        bx = basis(nx);
    }
    static Eigen::MatrixXd basis(std::size_t n) {
        Eigen::MatrixXd b(n, n);
        double norm0 = std::sqrt(1.0 / static_cast<double>(n));
        double norm = std::sqrt(2.0 / static_cast<double>(n));
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < n; ++i)
                b(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
                    (k == 0 ? norm0 : norm) *
                    std::cos(M_PI * static_cast<double>(k) *
                             (static_cast<double>(i) + 0.5) / static_cast<double>(n));
        return b;
    }
    Eigen::MatrixXd forward(const Eigen::MatrixXd& y) const { return bz * y * bx.transpose(); }
    Eigen::MatrixXd inverse(const Eigen::MatrixXd& c) const { return bz.transpose() * c * bx; }
};

Eigen::MatrixXd gamma_matrix(std::size_t nz, std::size_t nx, double s) {
    Eigen::MatrixXd g(nz, nx);
    for (std::size_t i = 0; i < nz; ++i) {
        double lz = 2.0 - 2.0 * std::cos(M_PI * static_cast<double>(i) / static_cast<double>(nz));
        for (std::size_t j = 0; j < nx; ++j) {
            double lx = 2.0 - 2.0 * std::cos(M_PI * static_cast<double>(j) / static_cast<double>(nx));
            double lam = lz + lx;
            g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                1.0 / (1.0 + s * lam * lam);
        }
    }
    return g;
}

Eigen::MatrixXd to_eigen(const RealTensor& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.at2(i, j);
    return m;
}

RealTensor from_eigen(const Eigen::MatrixXd& m) {
    RealTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            t.at2(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = m(i, j);
    return t;
}

Eigen::MatrixXd smooth_once(const Dct2d& dct, const Eigen::MatrixXd& g,
                            const Eigen::MatrixXd& y, const Eigen::MatrixXd& w,
                            int max_iter = 300, double tol = 1e-8) {
    // Fill unobserved entries with the observed mean as the starting guess.
    double wsum = w.sum();
    double mean = wsum > 0.0 ? (w.array() * y.array()).sum() / wsum : 0.0;
    Eigen::MatrixXd yhat = Eigen::MatrixXd::Constant(y.rows(), y.cols(), mean);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::MatrixXd target = (w.array() * (y - yhat).array()).matrix() + yhat;
        Eigen::MatrixXd next = dct.inverse((g.array() * dct.forward(target).array()).matrix());
        double delta = (next - yhat).norm() / std::max(1e-30, next.norm());
        yhat = next;
        if (delta < tol) break;
    }
    return yhat;
}

}  // namespace

RealTensor dct_smooth(const RealTensor& y, const RealTensor& weights, double smoothness) {
    if (y.ndim() != 2 || weights.ndim() != 2 || y.dims() != weights.dims())
        throw std::invalid_argument("dct_smooth: need matching 2-D tensors");
    double s = smoothness;
    if (s < 0.0) s = dct_smooth_gcv(y, weights);
    Dct2d dct(y.dim(0), y.dim(1));
    Eigen::MatrixXd g = gamma_matrix(y.dim(0), y.dim(1), s);
    return from_eigen(smooth_once(dct, g, to_eigen(y), to_eigen(weights)));
}

double dct_smooth_gcv(const RealTensor& y, const RealTensor& weights) {
    Dct2d dct(y.dim(0), y.dim(1));
    Eigen::MatrixXd ym = to_eigen(y), wm = to_eigen(weights);
    double n_obs = wm.sum();
    if (n_obs <= 1.0) return 1.0;
    double best_s = 1.0, best_gcv = 1e300;
    for (double log_s = -6.0; log_s <= 6.0; log_s += 0.5) {
        double s = std::pow(10.0, log_s);
        Eigen::MatrixXd g = gamma_matrix(y.dim(0), y.dim(1), s);
        Eigen::MatrixXd yhat = smooth_once(dct, g, ym, wm, 100, 1e-6);
        double rss = (wm.array() * (ym - yhat).array().square()).sum();
        double trace_h = g.sum() * n_obs / static_cast<double>(g.size());
        double denom = 1.0 - trace_h / n_obs;
        if (denom <= 1e-6) continue;
        double gcv = (rss / n_obs) / (denom * denom);
        if (gcv < best_gcv) {
            best_gcv = gcv;
            best_s = s;
        }
    }
    return best_s;
}

AberrationMap interpolate_aberration_map(
    const std::vector<std::pair<std::pair<double, double>, AberrationFunction>>& samples,
    const ImageGrid& grid, double smoothness) {
    if (samples.empty())
        throw std::invalid_argument("interpolate_aberration_map: no samples");
    grid.validate();
    const std::size_t ne = samples[0].second.size();
    for (const auto& s : samples)
        if (s.second.size() != ne)
            throw std::invalid_argument("interpolate_aberration_map: length mismatch");

    // Scatter sample means onto the coarse grid.
    ComplexTensor acc({grid.nz, grid.nx, ne});
    RealTensor hits({grid.nz, grid.nx});
    for (const auto& [pos, fn] : samples) {
        auto ix = static_cast<long>(std::lround((pos.first - grid.x0) / grid.dx));
        auto iz = static_cast<long>(std::lround((pos.second - grid.z0) / grid.dz));
        ix = std::clamp<long>(ix, 0, static_cast<long>(grid.nx) - 1);
        iz = std::clamp<long>(iz, 0, static_cast<long>(grid.nz) - 1);
        for (std::size_t n = 0; n < ne; ++n)
            acc.at3(static_cast<std::size_t>(iz), static_cast<std::size_t>(ix), n) += fn.value(n);
        hits.at2(static_cast<std::size_t>(iz), static_cast<std::size_t>(ix)) += 1.0;
    }
    RealTensor w({grid.nz, grid.nx});
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = hits[i] > 0.0 ? 1.0 : 0.0;

    AberrationMap map;
    map.grid = grid;
    map.values = ComplexTensor({grid.nz, grid.nx, ne});
    RealTensor re({grid.nz, grid.nx}), im({grid.nz, grid.nx});
    for (std::size_t n = 0; n < ne; ++n) {
        for (std::size_t iz = 0; iz < grid.nz; ++iz) {
            for (std::size_t ix = 0; ix < grid.nx; ++ix) {
                double h = hits.at2(iz, ix);
                cplx v = h > 0.0 ? acc.at3(iz, ix, n) / h : cplx{};
                re.at2(iz, ix) = v.real();
                im.at2(iz, ix) = v.imag();
            }
        }
        RealTensor sre = dct_smooth(re, w, smoothness);
        RealTensor sim = dct_smooth(im, w, smoothness);
        for (std::size_t iz = 0; iz < grid.nz; ++iz) {
            for (std::size_t ix = 0; ix < grid.nx; ++ix) {
                cplx v(sre.at2(iz, ix), sim.at2(iz, ix));
                double a = std::abs(v);
                if (a > 1.0) v /= a;               // amplitudes stay in (0, 1]
                if (a <= 0.0) v = cplx(1e-6, 0.0);
                map.values.at3(iz, ix, n) = v;
            }
        }
    }
    return map;
}

}  // namespace ulmpac
