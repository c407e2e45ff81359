#pragma once

#include <stdexcept>
#include <string>

#include "ulmpac/core.hpp"
#include "ulmpac/cvcnn.hpp"
#include "ulmpac/simulator.hpp"

namespace ulmpac {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One flat run description; all lengths in wavelengths so desk and paper
// scales share a geometry description.
struct RunConfig {
    bool paper_scale = false;
    std::uint64_t seed = 1;
    int workers = 1;
    std::string out_dir = "run";
    std::string estimator = "coherence";  // coherence | cvcnn | ground-truth | none
    double fit_fraction = 1.0;            // fraction of tracks used for map fitting
    std::string model_checkpoint;         // cvcnn estimator weights

    // Probe and transmit scheme.
    int num_elements = 16;
    double pitch_lambda = 1.0;
    double center_frequency = 15.625e6;  // Hz
    double sound_speed = 1540.0;         // m/s
    int num_angles = 3;
    double angle_span_deg = 10.0;  // full span, angles evenly spaced
    int pulse_cycles = 3;

    // Beamforming grid.
    double pixel_lambda = 0.5;
    double fov_x_lambda = 16.0;  // lateral half-width
    double fov_z0_lambda = 8.0;
    double fov_z1_lambda = 40.0;

    // Flow phantom.
    double bubble_concentration = 30.0;  // per mm^3
    double frame_rate = 500.0;           // Hz
    int num_frames = 64;
    double speckle_density = 2.0;   // per lambda^2
    double speckle_scale = 2.5e-2;  // calibrated for the reference background level
    double noise_fraction = 0.0;

    // Aberrator.
    double aberration_phase_bound = 0.5;
    double aberration_amp_min = 0.5;
    int aberration_knots = 8;

    // Training dataset and patches.
    int dataset_count = 2000;
    int patch_frames = 8;
    int patch_samples = 9;

    // ULM.
    int svd_cutoff = 1;
    double detect_threshold = 0.6;
    double max_link_dist_pixels = 2.0;
    int min_track_len = 16;
    int density_min_len = 25;
    int density_factor = 10;
    double map_smoothness = -1.0;  // < 0 selects by GCV

    // Training.
    double lr0 = 1e-4;
    double lr_gamma = 0.99;
    double alpha = 1e-4;
    int batch_size = 25;
    int epochs = 10;

    // Metrics.
    double frc_snr = 0.2071;

    void validate() const;

    double wavelength() const { return sound_speed / center_frequency; }
    ProbeGeometry probe() const;
    TransmitScheme scheme() const;
    ImageGrid grid() const;
    FlowPhantomConfig phantom() const;
    AberrationConfig aberration() const;
    cvcnn::TrainConfig train_config() const;
    cvcnn::ModelSpec model_spec() const;
};

// Switch the size-bearing fields between the desk and paper presets.
void apply_scale(RunConfig& cfg, bool paper_scale);

RunConfig parse_config_json(const std::string& text);
RunConfig load_config(const std::string& path);
// Canonical serialization: sorted keys, fixed formatting; the config hash in
// metric CSVs is derived from it.
std::string canonical_config(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);
void save_config(const RunConfig& cfg, const std::string& path);

// Typed override for a single key using the JSON field names.
void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value);

}  // namespace ulmpac
