#include "ulmpac/beamform.hpp"

#include <atomic>

#include "ulmpac/parallel.hpp"

namespace ulmpac {

double Track::mean_x() const {
    double s = 0.0;
    for (const auto& p : points) s += p.x;
    return s / static_cast<double>(points.size());
}

double Track::mean_z() const {
    double s = 0.0;
    for (const auto& p : points) s += p.z;
    return s / static_cast<double>(points.size());
}

double Track::mean_velocity(double frame_rate) const {
    if (points.size() < 2) return 0.0;
    double dist = 0.0;
    for (std::size_t i = 0; i + 1 < points.size(); ++i)
        dist += std::hypot(points[i + 1].x - points[i].x, points[i + 1].z - points[i].z);
    double dt = static_cast<double>(points.size() - 1) / frame_rate;
    return dist / dt;
}

BeamformedImage das_beamform(const ChannelIQ& iq, const ImageGrid& grid,
                             const ProbeGeometry& probe, const TransmitScheme& scheme,
                             const CorrectionProfile* correction, int workers) {
    grid.validate();
    probe.validate();
    scheme.validate();
    const std::size_t ne = iq.num_elements();
    if (static_cast<int>(ne) != probe.num_elements)
        throw std::invalid_argument("das_beamform: element count mismatch");
    if (iq.num_angles() != scheme.angles.size())
        throw std::invalid_argument("das_beamform: angle count mismatch");
    if (correction) {
        if (correction->rx_delays.size() != ne || correction->rx_weights.size() != ne)
            throw std::invalid_argument("das_beamform: correction length mismatch");
    }

    BeamformedImage img;
    img.grid = grid;
    img.pixels = ComplexTensor({grid.nz, grid.nx});

    const double fc = probe.center_frequency;
    const double c = probe.sound_speed;
    const double fs = iq.sample_rate;
    const std::size_t nt = iq.num_samples();
    const double two_pi_fc = 2.0 * M_PI * fc;
    std::atomic<bool> clipped{false};

    // The piston of the correction carries no focusing information; keep it
    // out of the envelope resampling so depth registration is unchanged, and
    // restore the full correction in the phase rotation.
    double rx_mean = 0.0;
    if (correction) {
        for (double d : correction->rx_delays) rx_mean += d;
        rx_mean /= static_cast<double>(ne);
    }

    parallel_for(grid.nz, workers, [&](std::size_t iz) {
        double z = grid.z(iz);
        std::vector<cplx> row(nt);
        for (std::size_t ix = 0; ix < grid.nx; ++ix) {
            double x = grid.x(ix);
            cplx acc{};
            for (std::size_t ai = 0; ai < scheme.angles.size(); ++ai) {
                double theta = scheme.angles[ai];
                const cplx* base = iq.data.data() + (ai * nt) * ne;
                for (std::size_t n = 0; n < ne; ++n) {
                    double tn = das_delay(x, z, theta, probe.element_x(n), c);
                    double w = 1.0;
                    double ts = tn;
                    double t_env = tn;
                    if (correction) {
                        ts += correction->rx_delays[n] + correction->tx_delay;
                        t_env += correction->rx_delays[n] - rx_mean;
                        w = correction->rx_weights[n];
                    }
                    double pos = (t_env - iq.t0) * fs;
                    if (pos < 0.0 || pos > static_cast<double>(nt - 1)) {
                        clipped.store(true, std::memory_order_relaxed);
                        continue;
                    }
                    for (std::size_t t = 0; t < nt; ++t) row[t] = base[t * ne + n];
                    cplx v = cubic_sample(row.data(), nt, pos);
                    double ph = two_pi_fc * ts;
                    acc += w * v * cplx(std::cos(ph), std::sin(ph));
                }
            }
            img.at(iz, ix) = acc;
        }
    });
    img.out_of_range = clipped.load();
    return img;
}

RealignedPatch realign_hyperbola(const std::vector<ChannelIQ>& frames,
                                 const Track& track, std::size_t num_frames,
                                 std::size_t nt, const ProbeGeometry& probe,
                                 const TransmitScheme& scheme) {
    if (track.length() < num_frames)
        throw std::invalid_argument("realign_hyperbola: track shorter than requested frames");
    if (nt % 2 == 0) throw std::invalid_argument("realign_hyperbola: nt must be odd");
    if (frames.empty()) throw std::invalid_argument("realign_hyperbola: no frames");

    const std::size_t na = scheme.angles.size();
    const std::size_t ne = frames[0].num_elements();
    const double fc = probe.center_frequency;
    const double c = probe.sound_speed;
    const double dt = 1.0 / (4.0 * fc);  // realignment grid
    const double two_pi_fc = 2.0 * M_PI * fc;

    RealignedPatch patch;
    patch.track_ref = track.id;
    patch.data = ComplexTensor({na, num_frames, nt, ne});

    const long half = static_cast<long>(nt / 2);
    std::vector<cplx> chan;
    for (std::size_t f = 0; f < num_frames; ++f) {
        const TrackPoint& pt = track.points[f];
        patch.center_positions.emplace_back(pt.x, pt.z);
        if (pt.frame < 0 || pt.frame >= static_cast<int>(frames.size()))
            throw std::invalid_argument("realign_hyperbola: track frame outside records");
        const ChannelIQ& iq = frames[static_cast<std::size_t>(pt.frame)];
        const std::size_t nrec = iq.num_samples();
        chan.resize(nrec);
        for (std::size_t ai = 0; ai < na; ++ai) {
            double theta = scheme.angles[ai];
            for (std::size_t n = 0; n < ne; ++n) {
                double tn = das_delay(pt.x, pt.z, theta, probe.element_x(n), c);
                for (std::size_t t = 0; t < nrec; ++t) chan[t] = iq.data.at3(ai, t, n);
                for (long k = -half; k <= half; ++k) {
                    double ts = tn + static_cast<double>(k) * dt;
                    double pos = (ts - iq.t0) * iq.sample_rate;
                    cplx v{};
                    if (pos >= 0.0 && pos <= static_cast<double>(nrec - 1)) {
                        double ph = two_pi_fc * ts;
                        v = cubic_sample(chan.data(), nrec, pos) * cplx(std::cos(ph), std::sin(ph));
                    } else {
                        patch.zero_padded = true;
                    }
                    patch.data.at4(ai, f, static_cast<std::size_t>(k + half), n) = v;
                }
            }
        }
    }
    return patch;
}

CorrectionProfile make_correction_profile(const AberrationFunction& estimate,
                                          double fc, bool use_amplitude) {
    CorrectionProfile p;
    const std::size_t ne = estimate.size();
    p.rx_delays.resize(ne);
    p.rx_weights.assign(ne, 1.0);
    double sum = 0.0;
    for (std::size_t n = 0; n < ne; ++n) {
        p.rx_delays[n] = estimate.delay(n, fc);
        sum += p.rx_delays[n];
        if (use_amplitude) {
            double a = estimate.amplitude(n);
            p.rx_weights[n] = std::clamp(a > 0.0 ? 1.0 / a : 2.0, 1.0, 2.0);
        }
    }
    p.tx_delay = sum / static_cast<double>(ne);
    return p;
}

RealignedPatch correct_realigned_patch(const RealignedPatch& patch,
                                       const AberrationFunction& estimate,
                                       const ProbeGeometry& probe,
                                       bool use_amplitude) {
    if (estimate.size() != patch.num_elements())
        throw std::invalid_argument("correct_realigned_patch: element count mismatch");
    const std::size_t na = patch.num_angles(), nf = patch.num_frames();
    const std::size_t nt = patch.num_samples(), ne = patch.num_elements();
    const double grid_rate = 4.0 * probe.center_frequency;

    RealignedPatch out = patch;
    std::vector<cplx> rowv(nt);
    for (std::size_t n = 0; n < ne; ++n) {
        double tau = estimate.delay(n, probe.center_frequency);
        double shift = tau * grid_rate;  // fractional realignment samples
        double gain = 1.0;
        if (use_amplitude) {
            double a = estimate.amplitude(n);
            gain = std::clamp(a > 0.0 ? 1.0 / a : 2.0, 1.0, 2.0);
        }
        for (std::size_t ai = 0; ai < na; ++ai) {
            for (std::size_t f = 0; f < nf; ++f) {
                for (std::size_t t = 0; t < nt; ++t) rowv[t] = patch.data.at4(ai, f, t, n);
                for (std::size_t t = 0; t < nt; ++t) {
                    // Carrier-restored rows: a plain time shift moves envelope
                    // and phase together.
                    double pos = static_cast<double>(t) + shift;
                    out.data.at4(ai, f, t, n) = gain * cubic_sample(rowv.data(), nt, pos);
                }
            }
        }
    }
    return out;
}

}  // namespace ulmpac
