#include "ulmpac/simulator.hpp"

#include <algorithm>

#include "ulmpac/parallel.hpp"

namespace ulmpac {

namespace {

constexpr double kDirectivityCutoffDeg = 60.0;

double directivity(double xe, double xs, double zs) {
    double alpha = std::atan2(std::abs(xs - xe), zs);
    if (alpha > kDirectivityCutoffDeg * M_PI / 180.0) return 0.0;
    return std::cos(alpha);
}

double polyline_length(const std::vector<std::pair<double, double>>& path) {
    double len = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        double dx = path[i + 1].first - path[i].first;
        double dz = path[i + 1].second - path[i].second;
        len += std::hypot(dx, dz);
    }
    return len;
}

// Position and unit tangent at arclength s along the polyline.
void polyline_at(const std::vector<std::pair<double, double>>& path, double s,
                 double& x, double& z, double& tx, double& tz) {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        double dx = path[i + 1].first - path[i].first;
        double dz = path[i + 1].second - path[i].second;
        double seg = std::hypot(dx, dz);
        if (s <= acc + seg || i + 2 == path.size()) {
            double u = seg > 0.0 ? (s - acc) / seg : 0.0;
            u = std::clamp(u, 0.0, 1.0);
            x = path[i].first + u * dx;
            z = path[i].second + u * dz;
            tx = seg > 0.0 ? dx / seg : 1.0;
            tz = seg > 0.0 ? dz / seg : 0.0;
            return;
        }
        acc += seg;
    }
    x = path.back().first;
    z = path.back().second;
    tx = 1.0;
    tz = 0.0;
}

struct Arrival {
    double t = 0.0;
    double weight = 0.0;   // real gain
    double phase = 0.0;    // carrier phase offset from complex reflectivity
};

// Accumulate a pulse centered at arrival.t into one RF trace.
void add_pulse(std::vector<double>& trace, double fs, double t_start,
               const Arrival& a, double fc, int cycles) {
    const double T = static_cast<double>(cycles) / fc;
    long i0 = static_cast<long>(std::ceil(((a.t - 0.5 * T) - t_start) * fs));
    long i1 = static_cast<long>(std::floor(((a.t + 0.5 * T) - t_start) * fs));
    i0 = std::max<long>(i0, 0);
    i1 = std::min<long>(i1, static_cast<long>(trace.size()) - 1);
    for (long i = i0; i <= i1; ++i) {
        double u = t_start + static_cast<double>(i) / fs - a.t;  // relative to center
        double env = 0.5 * (1.0 + std::cos(2.0 * M_PI * u / T));
        trace[i] += a.weight * env * std::cos(2.0 * M_PI * fc * u + a.phase);
    }
}

}  // namespace

void FlowPhantomConfig::validate() const {
    if (vessels.empty()) throw std::invalid_argument("phantom: vessel list is empty");
    if (bubble_concentration <= 0.0)
        throw std::invalid_argument("phantom: concentration must be positive");
    if (frame_rate <= 0.0) throw std::invalid_argument("phantom: frame_rate must be positive");
    if (num_frames < 1) throw std::invalid_argument("phantom: need at least one frame");
    for (const Vessel& v : vessels) {
        if (v.radius <= 0.0) throw std::invalid_argument("phantom: vessel radius must be positive");
        if (v.path.size() < 2) throw std::invalid_argument("phantom: vessel path needs 2+ points");
    }
}

ScattererTimeline make_flow_phantom(const FlowPhantomConfig& config,
                                    const ProbeGeometry& probe) {
    config.validate();
    Rng rng(config.rng_seed);

    struct Bubble {
        int vessel;
        int id;
        double s;       // arclength along path
        double offset;  // signed radial offset, m
        double speed;   // m/s
    };
    std::vector<Bubble> bubbles;
    int next_id = 0;
    for (std::size_t vi = 0; vi < config.vessels.size(); ++vi) {
        const Vessel& v = config.vessels[vi];
        double len = polyline_length(v.path);
        double volume_mm3 = M_PI * v.radius * v.radius * len * 1e9;
        auto count = rng.poisson(config.bubble_concentration * volume_mm3);
        for (std::uint64_t b = 0; b < count; ++b) {
            Bubble bub;
            bub.vessel = static_cast<int>(vi);
            bub.id = next_id++;
            bub.s = rng.uniform(0.0, len);
            bub.offset = v.radius * (2.0 * rng.uniform() - 1.0);
            double r = std::abs(bub.offset) / v.radius;
            bub.speed = v.peak_speed * (1.0 - r * r);
            bubbles.push_back(bub);
        }
    }

    ScattererTimeline timeline;
    timeline.frame_rate = config.frame_rate;
    timeline.noise_fraction = config.noise_fraction;
    timeline.rng_seed = config.rng_seed;
    timeline.bubble_frames.resize(config.num_frames);
    timeline.ground_truth.resize(config.num_frames);

    for (int f = 0; f < config.num_frames; ++f) {
        for (Bubble& bub : bubbles) {
            const Vessel& v = config.vessels[bub.vessel];
            double len = polyline_length(v.path);
            if (bub.s > len) {  // left the vessel; respawn as a new bubble
                bub.s = std::fmod(bub.s, len);
                bub.id = next_id++;
            }
            double x, z, tx, tz;
            polyline_at(v.path, bub.s, x, z, tx, tz);
            // Offset perpendicular to the local tangent.
            double px = x - tz * bub.offset;
            double pz = z + tx * bub.offset;
            timeline.bubble_frames[f].push_back({px, pz, cplx(1.0, 0.0)});
            timeline.ground_truth[f].push_back({bub.id, px, pz});
            bub.s += bub.speed / config.frame_rate;
        }
    }

    // Static fully developed speckle, uniform over the FOV, circular complex
    // Gaussian reflectivity.
    if (config.speckle_density > 0.0) {
        double lambda = probe.wavelength();
        double area_l2 = (2.0 * config.fov_x) * (config.fov_z1 - config.fov_z0) /
                         (lambda * lambda);
        auto n_speckle = static_cast<std::size_t>(config.speckle_density * area_l2);
        timeline.speckle.reserve(n_speckle);
        for (std::size_t i = 0; i < n_speckle; ++i) {
            double x = rng.uniform(-config.fov_x, config.fov_x);
            double z = rng.uniform(config.fov_z0, config.fov_z1);
            cplx r(rng.gaussian(), rng.gaussian());
            timeline.speckle.push_back({x, z, config.speckle_scale * M_SQRT1_2 * r});
        }
    }
    return timeline;
}

SimWindow sequence_window(const ScattererTimeline& timeline, const ProbeGeometry& probe,
                          const TransmitScheme& scheme, const AberrationFunction* ab) {
    double zmin = 1e30, zmax = -1e30, xmin = 1e30, xmax = -1e30;
    auto grow = [&](const Scatterer& s) {
        zmin = std::min(zmin, s.z);
        zmax = std::max(zmax, s.z);
        xmin = std::min(xmin, s.x);
        xmax = std::max(xmax, s.x);
    };
    for (const auto& frame : timeline.bubble_frames)
        for (const auto& s : frame) grow(s);
    for (const auto& s : timeline.speckle) grow(s);
    if (zmax < zmin) throw std::invalid_argument("sequence_window: empty timeline");

    const double c = probe.sound_speed;
    const double half_ap = 0.5 * probe.aperture();
    double max_theta = 0.0, min_sin = 0.0, max_sin = 0.0;
    for (double th : scheme.angles) {
        max_theta = std::max(max_theta, std::abs(th));
        min_sin = std::min(min_sin, std::sin(th));
        max_sin = std::max(max_sin, std::sin(th));
    }
    double max_dist = std::hypot(zmax, std::max(std::abs(xmin), std::abs(xmax)) + half_ap);
    double t_max = (zmax + std::max(xmax * max_sin, xmin * min_sin) + max_dist) / c;
    double t_min = (zmin * std::cos(max_theta) + std::min(xmin * max_sin, xmax * min_sin) + zmin) / c;
    // Transmit-path spread (exact mode) plus aberration delays plus pulse length.
    double margin = (2.0 * half_ap + std::abs(xmin * max_sin)) / c +
                    static_cast<double>(scheme.pulse_cycles + 2) / probe.center_frequency;
    if (ab) margin += 1.0 / probe.center_frequency;  // |tau| <= half a period
    double max_tx_delay = 0.0;
    for (double d : scheme.transmit_delays) max_tx_delay = std::max(max_tx_delay, std::abs(d));
    margin += max_tx_delay;
    SimWindow w;
    w.t_start = std::max(0.0, t_min - margin);
    w.t_end = t_max + margin;
    return w;
}

ChannelIQ simulate_frame(const std::vector<Scatterer>& scatterers,
                         const ProbeGeometry& probe, const TransmitScheme& scheme,
                         const AberrationFunction* ab, SimMode mode,
                         double noise_fraction, std::uint64_t rng_seed,
                         const std::optional<SimWindow>& window) {
    probe.validate();
    scheme.validate();
    const double c = probe.sound_speed;
    const double fc = probe.center_frequency;
    const int ne = probe.num_elements;
    if (ab && static_cast<int>(ab->size()) != ne)
        throw std::invalid_argument("simulate_frame: aberration length mismatch");
    for (const Scatterer& s : scatterers)
        if (s.z <= 0.0) throw std::invalid_argument("simulate_frame: scatterer depth must be positive");

    SimWindow w;
    if (window) {
        w = *window;
    } else {
        ScattererTimeline tmp;
        tmp.bubble_frames.push_back(scatterers);
        if (scatterers.empty()) {  // degenerate: tiny empty record
            w.t_start = 0.0;
            w.t_end = 16.0 / fc;
        } else {
            w = sequence_window(tmp, probe, scheme, ab);
        }
    }

    const double fs = kRfOversample * fc;
    auto nt_rf = static_cast<std::size_t>(std::ceil((w.t_end - w.t_start) * fs));
    // Keep the decimated length well defined.
    nt_rf = (nt_rf / kRfOversample + 1) * kRfOversample;

    RealTensor rf({scheme.angles.size(), nt_rf, static_cast<std::size_t>(ne)});

    std::vector<double> tx_apod = scheme.transmit_apodization;
    std::vector<double> tx_delays = scheme.transmit_delays;
    if (tx_apod.empty()) tx_apod.assign(ne, 1.0);
    if (tx_delays.empty()) tx_delays.assign(ne, 0.0);
    if (static_cast<int>(tx_apod.size()) != ne || static_cast<int>(tx_delays.size()) != ne)
        throw std::invalid_argument("simulate_frame: transmit scheme length mismatch");

    std::vector<double> trace(nt_rf);
    for (std::size_t ai = 0; ai < scheme.angles.size(); ++ai) {
        double theta = scheme.angles[ai];
        double sin_t = std::sin(theta), cos_t = std::cos(theta);
        for (int er = 0; er < ne; ++er) {
            double xr = probe.element_x(er);
            double rx_tau = ab ? ab->delay(er, fc) : 0.0;
            double rx_amp = ab ? ab->amplitude(er) : 1.0;
            std::fill(trace.begin(), trace.end(), 0.0);
            for (const Scatterer& s : scatterers) {
                double dir_r = directivity(xr, s.x, s.z);
                if (dir_r == 0.0) continue;
                double d_rx = std::hypot(s.z, s.x - xr) / c;
                double amp = std::abs(s.reflectivity);
                double ph = std::arg(s.reflectivity);
                if (mode == SimMode::Fast) {
                    Arrival a;
                    a.t = (s.z * cos_t + s.x * sin_t) / c + d_rx + rx_tau;
                    a.weight = rx_amp * amp * dir_r;
                    a.phase = ph;
                    add_pulse(trace, fs, w.t_start, a, fc, scheme.pulse_cycles);
                } else {
                    for (int et = 0; et < ne; ++et) {
                        double xt = probe.element_x(et);
                        double dir_t = directivity(xt, s.x, s.z);
                        if (dir_t == 0.0) continue;
                        double tx_tau = ab ? ab->delay(et, fc) : 0.0;
                        double tx_amp = ab ? ab->amplitude(et) : 1.0;
                        Arrival a;
                        a.t = xt * sin_t / c + tx_delays[et] + tx_tau +
                              std::hypot(s.z, s.x - xt) / c + d_rx + rx_tau;
                        // Scale by 1/Ne so exact and fast levels are comparable.
                        a.weight = tx_apod[et] * tx_amp * rx_amp * amp * dir_t * dir_r /
                                   static_cast<double>(ne);
                        a.phase = ph;
                        add_pulse(trace, fs, w.t_start, a, fc, scheme.pulse_cycles);
                    }
                }
            }
            for (std::size_t t = 0; t < nt_rf; ++t) rf.at3(ai, t, er) = trace[t];
        }
    }

    if (noise_fraction > 0.0) {
        double rms = 0.0;
        for (std::size_t i = 0; i < rf.size(); ++i) rms += rf[i] * rf[i];
        rms = std::sqrt(rms / static_cast<double>(rf.size()));
        double sigma = noise_fraction * rms;
        Rng rng(rng_seed);
        for (std::size_t i = 0; i < rf.size(); ++i) rf[i] += sigma * rng.gaussian();
    }

    return demodulate_iq(rf, fs, w.t_start, probe);
}

std::vector<ChannelIQ> simulate_sequence(const ScattererTimeline& timeline,
                                         const ProbeGeometry& probe,
                                         const TransmitScheme& scheme,
                                         const AberrationFunction* ab, SimMode mode,
                                         int workers) {
    const std::size_t nf = timeline.num_frames();
    if (nf == 0) throw std::invalid_argument("simulate_sequence: empty timeline");
    SimWindow w = sequence_window(timeline, probe, scheme, ab);

    std::vector<ChannelIQ> frames(nf);
    Rng base(timeline.rng_seed);
    std::vector<std::uint64_t> frame_seeds(nf);
    for (std::size_t f = 0; f < nf; ++f) frame_seeds[f] = base.fork(f + 1).next_u64();

    parallel_for(nf, workers, [&](std::size_t f) {
        std::vector<Scatterer> all = timeline.bubble_frames[f];
        all.insert(all.end(), timeline.speckle.begin(), timeline.speckle.end());
        frames[f] = simulate_frame(all, probe, scheme, ab, mode,
                                   timeline.noise_fraction, frame_seeds[f], w);
    });
    return frames;
}

}  // namespace ulmpac
