#pragma once

#include <optional>

#include "ulmpac/aberration.hpp"
#include "ulmpac/core.hpp"

namespace ulmpac {

struct Scatterer {
    double x = 0.0;  // m
    double z = 0.0;  // m
    cplx reflectivity{1.0, 0.0};
};

struct Vessel {
    std::vector<std::pair<double, double>> path;  // polyline, m
    double radius = 0.0;                          // m
    double peak_speed = 0.0;                      // m/s, Poiseuille centerline
};

struct FlowPhantomConfig {
    std::vector<Vessel> vessels;
    double bubble_concentration = 0.0;  // bubbles per mm^3
    double fov_x = 0.0, fov_z0 = 0.0, fov_z1 = 0.0;  // lateral half-width and depth span, m
    double frame_rate = 0.0;            // Hz
    int num_frames = 0;
    double speckle_density = 0.0;       // point sources per lambda^2
    double speckle_scale = 1.0;         // reflectivity scale, calibrated once
    double noise_fraction = 0.0;        // RF noise std as fraction of signal RMS
    std::uint64_t rng_seed = 0;

    void validate() const;
};

struct GroundTruthBubble {
    int id = 0;
    double x = 0.0, z = 0.0;
};

struct ScattererTimeline {
    std::vector<std::vector<Scatterer>> bubble_frames;          // per frame
    std::vector<std::vector<GroundTruthBubble>> ground_truth;   // per frame
    std::vector<Scatterer> speckle;                             // static
    double frame_rate = 0.0;
    double noise_fraction = 0.0;
    std::uint64_t rng_seed = 0;

    std::size_t num_frames() const { return bubble_frames.size(); }
};

enum class SimMode { Exact, Fast };

ScattererTimeline make_flow_phantom(const FlowPhantomConfig& config,
                                    const ProbeGeometry& probe);

struct SimWindow {
    double t_start = 0.0;  // s, RF record start
    double t_end = 0.0;
};

// Record window covering every echo of the timeline with pulse margins.
SimWindow sequence_window(const ScattererTimeline& timeline, const ProbeGeometry& probe,
                          const TransmitScheme& scheme,
                          const AberrationFunction* ab);

// Synthesize one frame of aberrated plane-wave channel IQ.
// Exact mode sums spherical waves per (transmit element, scatterer, receive
// element) with transmit-side aberration; fast mode treats the transmit as an
// unaberrated plane wave and aberrates receive only.
ChannelIQ simulate_frame(const std::vector<Scatterer>& scatterers,
                         const ProbeGeometry& probe, const TransmitScheme& scheme,
                         const AberrationFunction* ab, SimMode mode,
                         double noise_fraction, std::uint64_t rng_seed,
                         const std::optional<SimWindow>& window = std::nullopt);

std::vector<ChannelIQ> simulate_sequence(const ScattererTimeline& timeline,
                                         const ProbeGeometry& probe,
                                         const TransmitScheme& scheme,
                                         const AberrationFunction* ab, SimMode mode,
                                         int workers = 1);

// RF oversampling factor relative to fc before demodulation.
constexpr int kRfOversample = 8;

}  // namespace ulmpac
