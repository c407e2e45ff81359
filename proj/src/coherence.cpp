#include "ulmpac/coherence.hpp"

namespace ulmpac {

void CoherenceEstimatorConfig::validate() const {
    if (upsample_factor < 1) throw std::invalid_argument("coherence: upsample_factor >= 1");
    if (smoothing_span <= 0.0 || smoothing_span > 1.0)
        throw std::invalid_argument("coherence: smoothing_span in (0, 1]");
    if (max_lag < 1) throw std::invalid_argument("coherence: max_lag >= 1");
}

std::vector<double> robust_local_regression(const std::vector<double>& y,
                                            const std::vector<double>& weights,
                                            double span, int iterations) {
    const std::size_t n = y.size();
    if (n == 0) return {};
    std::vector<double> w0 = weights.empty() ? std::vector<double>(n, 1.0) : weights;
    auto k = static_cast<std::size_t>(std::ceil(span * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 3, n);

    std::vector<double> robust(n, 1.0), fit(y);
    for (int iter = 0; iter < iterations; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            // k nearest neighbours in index distance.
            std::size_t lo = i >= k / 2 ? i - k / 2 : 0;
            if (lo + k > n) lo = n - k;
            double maxd = std::max<double>(static_cast<double>(i - lo),
                                           static_cast<double>(lo + k - 1 - i));
            if (maxd <= 0.0) maxd = 1.0;
            double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
            for (std::size_t j = lo; j < lo + k; ++j) {
                double d = std::abs(static_cast<double>(j) - static_cast<double>(i)) / maxd;
                double tri = d < 1.0 ? std::pow(1.0 - d * d * d, 3) : 0.0;
                double w = tri * w0[j] * robust[j];
                if (w <= 0.0) continue;
                double x = static_cast<double>(j) - static_cast<double>(i);
                sw += w;
                swx += w * x;
                swy += w * y[j];
                swxx += w * x * x;
                swxy += w * x * y[j];
            }
            double det = sw * swxx - swx * swx;
            if (sw <= 0.0) {
                fit[i] = fit.empty() ? 0.0 : fit[i];
            } else if (std::abs(det) < 1e-12 * std::max(1.0, sw * swxx)) {
                fit[i] = swy / sw;
            } else {
                fit[i] = (swxx * swy - swx * swxy) / det;  // intercept at x = 0
            }
        }
        if (iter + 1 == iterations) break;
        // Bisquare reweighting from residuals of usable points.
        std::vector<double> absres;
        for (std::size_t i = 0; i < n; ++i)
            if (w0[i] > 0.0) absres.push_back(std::abs(y[i] - fit[i]));
        if (absres.empty()) break;
        std::nth_element(absres.begin(), absres.begin() + absres.size() / 2, absres.end());
        double s = 6.0 * absres[absres.size() / 2];
        if (s <= 0.0) break;
        for (std::size_t i = 0; i < n; ++i) {
            double r = std::abs(y[i] - fit[i]) / s;
            robust[i] = r < 1.0 ? (1.0 - r * r) * (1.0 - r * r) : 0.0;
        }
    }
    return fit;
}

std::vector<double> raw_delay_profile(const RealignedPatch& patch,
                                      std::size_t frame, std::size_t angle,
                                      const ProbeGeometry& probe,
                                      const CoherenceEstimatorConfig& config,
                                      std::vector<double>* valid) {
    config.validate();
    const std::size_t nt = patch.num_samples();
    const std::size_t ne = patch.num_elements();
    const double grid_dt = 1.0 / (4.0 * probe.center_frequency);
    const double omega = 2.0 * M_PI * probe.center_frequency;
    const int max_lag = std::min<int>(config.max_lag, static_cast<int>(nt) - 1);

    auto row = [&](std::size_t n, long t) -> cplx {
        if (t < 0 || t >= static_cast<long>(nt)) return {};
        return patch.data.at4(angle, frame, static_cast<std::size_t>(t), n);
    };

    std::vector<double> profile(ne, 0.0);
    if (valid) valid->assign(ne, 1.0);

    double cum = 0.0;
    for (std::size_t n = 0; n + 1 < ne; ++n) {
        // Complex cross-correlation over integer lags of the realignment grid.
        std::vector<cplx> corr(2 * max_lag + 1);
        double e0 = 0.0, e1 = 0.0;
        for (long t = 0; t < static_cast<long>(nt); ++t) {
            e0 += std::norm(row(n, t));
            e1 += std::norm(row(n + 1, t));
        }
        bool usable = e0 > 1e-30 && e1 > 1e-30;
        double d = 0.0;
        if (usable) {
            for (int l = -max_lag; l <= max_lag; ++l) {
                cplx acc{};
                for (long t = 0; t < static_cast<long>(nt); ++t)
                    acc += row(n + 1, t) * std::conj(row(n, t - l));
                corr[static_cast<std::size_t>(l + max_lag)] = acc;
            }
            // Cubic interpolation of |C| on the upsampled lag grid.
            std::vector<double> mag(corr.size());
            for (std::size_t i = 0; i < corr.size(); ++i) mag[i] = std::abs(corr[i]);
            double best_pos = 0.0, best = -1.0;
            const int up = config.upsample_factor;
            for (int i = 0; i <= (2 * max_lag) * up; ++i) {
                double pos = static_cast<double>(i) / up;
                double v = cubic_sample(mag.data(), mag.size(), pos);
                if (v > best) {
                    best = v;
                    best_pos = pos;
                }
            }
            double lag = best_pos - max_lag;  // realignment-grid samples
            // Carrier-phase refinement at the interpolated peak: the residual
            // phase is a sub-period offset around the envelope lag.
            cplx c_at = cubic_sample(corr.data(), corr.size(), best_pos);
            d = lag * grid_dt - wrap_phase(std::arg(c_at)) / omega;
        } else if (valid) {
            (*valid)[n + 1] = 0.0;
        }
        cum += d;
        profile[n + 1] = cum;
    }
    if (valid && !valid->empty()) {
        // Propagate the missing flag: a break in the chain taints what follows
        // only through the smoother weights, not the stored values.
        (*valid)[0] = 1.0;
    }
    return profile;
}

AberrationFunction estimate_coherence_based(const RealignedPatch& patch,
                                            const ProbeGeometry& probe,
                                            const CoherenceEstimatorConfig& config) {
    config.validate();
    const std::size_t na = patch.num_angles();
    const std::size_t nf = patch.num_frames();
    const std::size_t ne = patch.num_elements();
    if (ne < 2) throw std::invalid_argument("estimate_coherence_based: need >= 2 elements");

    std::vector<double> mean_delay(ne, 0.0);
    std::size_t count = 0;
    for (std::size_t f = 0; f < nf; ++f) {
        for (std::size_t a = 0; a < na; ++a) {
            std::vector<double> valid;
            std::vector<double> prof = raw_delay_profile(patch, f, a, probe, config, &valid);
            std::vector<double> smooth =
                robust_local_regression(prof, valid, config.smoothing_span);
            for (std::size_t n = 0; n < ne; ++n) mean_delay[n] += smooth[n];
            ++count;
        }
    }
    for (double& v : mean_delay) v /= static_cast<double>(count);

    // Piston removal, unit amplitude.
    double mean = 0.0;
    for (double v : mean_delay) mean += v;
    mean /= static_cast<double>(ne);
    const double omega = 2.0 * M_PI * probe.center_frequency;
    std::vector<double> amp(ne, 1.0), phase(ne);
    for (std::size_t n = 0; n < ne; ++n) phase[n] = omega * (mean_delay[n] - mean);
    return AberrationFunction::from_amp_phase(amp, phase);
}

AberrationFunction average_track_estimates(const std::vector<AberrationFunction>& estimates) {
    if (estimates.empty())
        throw std::invalid_argument("average_track_estimates: empty list");
    const std::size_t ne = estimates[0].size();
    for (const auto& e : estimates)
        if (e.size() != ne)
            throw std::invalid_argument("average_track_estimates: length mismatch");
    std::vector<cplx> mean(ne);
    for (const auto& e : estimates)
        for (std::size_t n = 0; n < ne; ++n) mean[n] += e.value(n);
    std::vector<double> amp(ne, 1.0), phase(ne);
    for (std::size_t n = 0; n < ne; ++n)
        phase[n] = mean[n] == cplx{} ? 0.0 : std::arg(mean[n]);
    return AberrationFunction::from_amp_phase(amp, phase).remove_piston();
}

}  // namespace ulmpac
