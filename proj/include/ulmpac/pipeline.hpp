#pragma once

#include "ulmpac/coherence.hpp"
#include "ulmpac/config.hpp"
#include "ulmpac/metrics.hpp"
#include "ulmpac/simulator.hpp"
#include "ulmpac/ulm.hpp"

namespace ulmpac::pipeline {

struct Scene {
    ScattererTimeline timeline;
    AberrationFunction aberration;
    std::vector<ChannelIQ> frames;
};

Scene simulate_scene(const RunConfig& cfg);

void save_frames(const std::string& dir, const std::vector<ChannelIQ>& frames);
std::vector<ChannelIQ> load_frames(const std::string& dir);

std::vector<BeamformedImage> beamform_stack(const std::vector<ChannelIQ>& frames,
                                            const RunConfig& cfg,
                                            const CorrectionProfile* profile = nullptr);

// Per-pixel correction from an interpolated aberration map.
std::vector<BeamformedImage> beamform_stack_map(const std::vector<ChannelIQ>& frames,
                                                const RunConfig& cfg,
                                                const AberrationMap& map);

// PSF template: one unaberrated scatterer at the field center through the
// identical simulate/beamform path, cropped around its peak.
ComplexTensor make_psf_template(const RunConfig& cfg, std::size_t half_extent = 3);

struct UlmResult {
    std::vector<std::vector<Detection>> detections;
    std::vector<Track> tracks;
};

UlmResult run_ulm(const std::vector<BeamformedImage>& images,
                  const ComplexTensor& psf_template, const RunConfig& cfg);

AberrationFunction estimate_for_patch(const RealignedPatch& patch, const RunConfig& cfg,
                                      const AberrationFunction* truth,
                                      cvcnn::Model* model);

// Generate one training/validation sample: a random straight bubble track
// under a fresh aberration, realigned along the ground truth.
cvcnn::Sample make_training_sample(const RunConfig& cfg, std::uint64_t index,
                                   AberrationFunction* aberration_out = nullptr);

int cmd_simulate(const RunConfig& cfg);
int cmd_beamform(const RunConfig& cfg);
int cmd_estimate(const RunConfig& cfg);
int cmd_train(const RunConfig& cfg);
int cmd_infer(const RunConfig& cfg);
int cmd_pipeline(const RunConfig& cfg);
int cmd_metrics(const RunConfig& cfg);

}  // namespace ulmpac::pipeline
