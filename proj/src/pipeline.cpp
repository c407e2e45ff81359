#include "ulmpac/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "ulmpac/parallel.hpp"
#include "ulmpac/ulmt.hpp"

namespace fs = std::filesystem;

namespace ulmpac::pipeline {

namespace {

using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("pipeline: cannot write " + path);
    os << text;
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

void save_image_stack(const std::string& path, const std::vector<BeamformedImage>& images) {
    const std::size_t nf = images.size();
    const std::size_t nz = images[0].grid.nz, nx = images[0].grid.nx;
    ComplexTensor t({nf, nz, nx});
    for (std::size_t f = 0; f < nf; ++f)
        std::copy(images[f].pixels.data(), images[f].pixels.data() + nz * nx,
                  t.data() + f * nz * nx);
    ulmt::write_complex(path, t);
}

std::string tracks_csv(const std::vector<Track>& tracks) {
    std::ostringstream os;
    os << "track_id,frame,x,z\n";
    os.precision(12);
    for (const Track& t : tracks)
        for (const TrackPoint& p : t.points)
            os << t.id << ',' << p.frame << ',' << p.x << ',' << p.z << '\n';
    return os.str();
}

std::vector<std::string> sorted_files(const std::string& dir, const std::string& ext) {
    std::vector<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext)
            out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<cvcnn::Sample> load_samples(const std::string& dir) {
    std::vector<cvcnn::Sample> out;
    for (const auto& p : sorted_files(dir, ".ulms")) out.push_back(cvcnn::load_sample(p));
    return out;
}

DensityMap density_from_tracks(const std::vector<Track>& tracks, const RunConfig& cfg) {
    return accumulate_density(tracks, cfg.grid(), cfg.density_factor,
                              static_cast<std::size_t>(cfg.density_min_len));
}

// FRC split: alternate assignment after a seed-fixed shuffle.
std::pair<std::vector<Track>, std::vector<Track>> split_tracks(
    const std::vector<Track>& tracks, std::uint64_t seed) {
    std::vector<std::size_t> idx(tracks.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    for (std::size_t i = idx.size(); i > 1; --i)
        std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    std::pair<std::vector<Track>, std::vector<Track>> out;
    for (std::size_t i = 0; i < idx.size(); ++i)
        (i % 2 == 0 ? out.first : out.second).push_back(tracks[idx[i]]);
    return out;
}

struct FrcSummary {
    double resolution = 0.0;
    bool has_resolution = false;
};

FrcSummary frc_for_tracks(const std::vector<Track>& tracks, const RunConfig& cfg,
                          const std::string& csv_path) {
    FrcSummary out;
    auto [a, b] = split_tracks(tracks, cfg.seed + 0xf8c);
    if (a.empty() || b.empty()) return out;
    DensityMap da = density_from_tracks(a, cfg);
    DensityMap db = density_from_tracks(b, cfg);
    bool za = true, zb = true;
    for (std::size_t i = 0; i < da.counts.size(); ++i) {
        if (da.counts[i] != 0.0) za = false;
        if (db.counts[i] != 0.0) zb = false;
    }
    if (za || zb) return out;
    FrcResult r = frc(da, db, cfg.frc_snr);
    out.resolution = r.resolution;
    out.has_resolution = r.has_resolution;
    if (!csv_path.empty()) {
        std::vector<std::pair<double, double>> pts;
        for (std::size_t i = 0; i < r.frc.size(); ++i)
            pts.emplace_back(static_cast<double>(i), r.frc[i]);
        write_text(csv_path, curve_csv("ring", "frc", pts));
    }
    return out;
}

}  // namespace

Scene simulate_scene(const RunConfig& cfg) {
    Scene scene;
    scene.timeline = make_flow_phantom(cfg.phantom(), cfg.probe());
    scene.aberration = generate_aberration(cfg.aberration(), cfg.probe());
    scene.frames = simulate_sequence(scene.timeline, cfg.probe(), cfg.scheme(),
                                     &scene.aberration, SimMode::Fast, cfg.workers);
    return scene;
}

void save_frames(const std::string& dir, const std::vector<ChannelIQ>& frames) {
    ensure_dir(dir);
    const std::size_t nf = frames.size();
    const std::size_t na = frames[0].num_angles(), nt = frames[0].num_samples(),
                      ne = frames[0].num_elements();
    ComplexTensor t({nf, na, nt, ne});
    json meta;
    meta["sample_rate"] = frames[0].sample_rate;
    json t0s = json::array();
    for (std::size_t f = 0; f < nf; ++f) {
        if (frames[f].data.size() != na * nt * ne)
            throw std::runtime_error("save_frames: inconsistent frame shapes");
        std::copy(frames[f].data.data(), frames[f].data.data() + na * nt * ne,
                  t.data() + f * na * nt * ne);
        t0s.push_back(frames[f].t0);
    }
    meta["t0"] = t0s;
    ulmt::write_complex(dir + "/frames.ulmt", t);
    write_text(dir + "/frames_meta.json", meta.dump(2) + "\n");
}

std::vector<ChannelIQ> load_frames(const std::string& dir) {
    ComplexTensor t = ulmt::read_complex(dir + "/frames.ulmt");
    if (t.ndim() != 4) throw std::runtime_error("load_frames: expected 4-D tensor");
    std::ifstream is(dir + "/frames_meta.json");
    if (!is) throw std::runtime_error("load_frames: missing frames_meta.json");
    json meta = json::parse(is);
    const std::size_t nf = t.dim(0);
    std::vector<ChannelIQ> frames(nf);
    const std::size_t per = t.dim(1) * t.dim(2) * t.dim(3);
    for (std::size_t f = 0; f < nf; ++f) {
        frames[f].data = ComplexTensor(
            {t.dim(1), t.dim(2), t.dim(3)},
            std::vector<cplx>(t.data() + f * per, t.data() + (f + 1) * per));
        frames[f].sample_rate = meta.at("sample_rate").get<double>();
        frames[f].t0 = meta.at("t0")[f].get<double>();
    }
    return frames;
}

std::vector<BeamformedImage> beamform_stack(const std::vector<ChannelIQ>& frames,
                                            const RunConfig& cfg,
                                            const CorrectionProfile* profile) {
    std::vector<BeamformedImage> out(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f)
        out[f] = das_beamform(frames[f], cfg.grid(), cfg.probe(), cfg.scheme(), profile,
                              cfg.workers);
    return out;
}

std::vector<BeamformedImage> beamform_stack_map(const std::vector<ChannelIQ>& frames,
                                                const RunConfig& cfg,
                                                const AberrationMap& map) {
    const ImageGrid grid = cfg.grid();
    if (!(map.grid == grid))
        throw std::invalid_argument("beamform_stack_map: map grid mismatch");
    const ProbeGeometry probe = cfg.probe();
    const TransmitScheme scheme = cfg.scheme();
    const std::size_t ne = static_cast<std::size_t>(probe.num_elements);
    const double fc = probe.center_frequency;

    // Precompute the per-pixel correction profiles once.
    std::vector<CorrectionProfile> profiles(grid.nz * grid.nx);
    parallel_for(grid.nz, cfg.workers, [&](std::size_t iz) {
        for (std::size_t ix = 0; ix < grid.nx; ++ix)
            profiles[iz * grid.nx + ix] =
                make_correction_profile(map.at(iz, ix), fc, false);
    });

    std::vector<BeamformedImage> out(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        const ChannelIQ& iq = frames[f];
        const std::size_t nt = iq.num_samples();
        BeamformedImage img;
        img.grid = grid;
        img.pixels = ComplexTensor({grid.nz, grid.nx});
        parallel_for(grid.nz, cfg.workers, [&](std::size_t iz) {
            double z = grid.z(iz);
            std::vector<cplx> row(nt);
            for (std::size_t ix = 0; ix < grid.nx; ++ix) {
                const CorrectionProfile& p = profiles[iz * grid.nx + ix];
                double rx_mean = 0.0;
                for (double d : p.rx_delays) rx_mean += d;
                rx_mean /= static_cast<double>(ne);
                double x = grid.x(ix);
                cplx acc{};
                for (std::size_t ai = 0; ai < scheme.angles.size(); ++ai) {
                    const cplx* base = iq.data.data() + (ai * nt) * ne;
                    for (std::size_t n = 0; n < ne; ++n) {
                        double tn = das_delay(x, z, scheme.angles[ai], probe.element_x(n),
                                              probe.sound_speed);
                        double ts = tn + p.rx_delays[n] + p.tx_delay;
                        // Same piston handling as das_beamform: envelope taps
                        // exclude the mean rx delay.
                        double pos = (tn + p.rx_delays[n] - rx_mean - iq.t0) * iq.sample_rate;
                        if (pos < 0.0 || pos > static_cast<double>(nt - 1)) continue;
                        for (std::size_t t = 0; t < nt; ++t) row[t] = base[t * ne + n];
                        double ph = 2.0 * M_PI * fc * ts;
                        acc += p.rx_weights[n] * cubic_sample(row.data(), nt, pos) *
                               cplx(std::cos(ph), std::sin(ph));
                    }
                }
                img.at(iz, ix) = acc;
            }
        });
        out[f] = std::move(img);
    }
    return out;
}

ComplexTensor make_psf_template(const RunConfig& cfg, std::size_t half_extent) {
    const ImageGrid grid = cfg.grid();
    double cx = grid.x(grid.nx / 2), cz = grid.z(grid.nz / 2);
    std::vector<Scatterer> sc = {{cx, cz, cplx(1.0, 0.0)}};
    ChannelIQ iq = simulate_frame(sc, cfg.probe(), cfg.scheme(), nullptr, SimMode::Fast,
                                  0.0, cfg.seed + 0x95f);
    BeamformedImage img = das_beamform(iq, grid, cfg.probe(), cfg.scheme(), nullptr,
                                       cfg.workers);
    // Crop around the actual peak, not the nominal center.
    std::size_t pz = 0, px = 0;
    double best = -1.0;
    for (std::size_t z = 0; z < grid.nz; ++z)
        for (std::size_t x = 0; x < grid.nx; ++x)
            if (std::abs(img.at(z, x)) > best) {
                best = std::abs(img.at(z, x));
                pz = z;
                px = x;
            }
    const std::size_t side = 2 * half_extent + 1;
    ComplexTensor tpl({side, side});
    for (std::size_t i = 0; i < side; ++i)
        for (std::size_t j = 0; j < side; ++j) {
            long z = static_cast<long>(pz + i) - static_cast<long>(half_extent);
            long x = static_cast<long>(px + j) - static_cast<long>(half_extent);
            if (z >= 0 && x >= 0 && z < static_cast<long>(grid.nz) &&
                x < static_cast<long>(grid.nx))
                tpl.data()[i * side + j] =
                    img.at(static_cast<std::size_t>(z), static_cast<std::size_t>(x));
        }
    return tpl;
}

UlmResult run_ulm(const std::vector<BeamformedImage>& images,
                  const ComplexTensor& psf_template, const RunConfig& cfg) {
    UlmResult out;
    std::vector<BeamformedImage> filtered =
        cfg.svd_cutoff > 0 ? svd_clutter_filter(images, cfg.svd_cutoff) : images;
    out.detections.resize(filtered.size());
    parallel_for(filtered.size(), cfg.workers, [&](std::size_t f) {
        out.detections[f] =
            detect_microbubbles(filtered[f], psf_template, cfg.detect_threshold);
    });
    out.tracks = link_tracks(out.detections, cfg.max_link_dist_pixels,
                             static_cast<std::size_t>(cfg.min_track_len),
                             cfg.pixel_lambda * cfg.wavelength());
    return out;
}

AberrationFunction estimate_for_patch(const RealignedPatch& patch, const RunConfig& cfg,
                                      const AberrationFunction* truth,
                                      cvcnn::Model* model) {
    if (cfg.estimator == "none")
        return AberrationFunction::identity(static_cast<std::size_t>(cfg.num_elements));
    if (cfg.estimator == "ground-truth") {
        if (!truth) throw std::invalid_argument("estimate: ground truth unavailable");
        return *truth;
    }
    if (cfg.estimator == "cvcnn") {
        if (!model) throw std::invalid_argument("estimate: cvcnn model unavailable");
        return cvcnn::infer(*model, patch, cfg.workers);
    }
    CoherenceEstimatorConfig ec;
    return estimate_coherence_based(patch, cfg.probe(), ec);
}

cvcnn::Sample make_training_sample(const RunConfig& cfg, std::uint64_t index,
                                   AberrationFunction* aberration_out) {
    Rng rng = Rng(cfg.seed).fork(index);
    const ProbeGeometry probe = cfg.probe();
    const TransmitScheme scheme = cfg.scheme();
    const double lam = cfg.wavelength();

    AberrationConfig ac = cfg.aberration();
    ac.rng_seed = rng.fork(1).next_u64();
    AberrationFunction ab = generate_aberration(ac, probe);

    // Straight track through the central half of the field.
    Rng geo = rng.fork(2);
    double zmin = cfg.fov_z0_lambda * lam, zmax = cfg.fov_z1_lambda * lam;
    double x0 = geo.uniform(-0.5, 0.5) * cfg.fov_x_lambda * lam;
    double z0 = zmin + (0.25 + 0.5 * geo.uniform()) * (zmax - zmin);
    double heading = geo.uniform(0.0, 2.0 * M_PI);
    double step = 0.3 * lam;
    Track track;
    track.id = static_cast<int>(index);
    std::vector<Scatterer> positions;
    for (int f = 0; f < cfg.patch_frames; ++f) {
        double x = x0 + step * std::cos(heading) * f;
        double z = z0 + step * std::sin(heading) * f;
        track.points.push_back({f, x, z});
        positions.push_back({x, z, cplx(1.0, 0.0)});
    }

    ScattererTimeline tl;
    tl.frame_rate = cfg.frame_rate;
    for (const auto& p : positions) tl.bubble_frames.push_back({p});
    SimWindow window = sequence_window(tl, probe, scheme, &ab);

    std::vector<ChannelIQ> frames(positions.size());
    for (std::size_t f = 0; f < positions.size(); ++f)
        frames[f] = simulate_frame({positions[f]}, probe, scheme, &ab, SimMode::Fast,
                                   cfg.noise_fraction, rng.fork(100 + f).next_u64(), window);

    RealignedPatch patch = realign_hyperbola(frames, track,
                                             static_cast<std::size_t>(cfg.patch_frames),
                                             static_cast<std::size_t>(cfg.patch_samples),
                                             probe, scheme);
    cvcnn::Sample s;
    s.input = cvcnn::patch_to_input(patch);
    s.target = ab.values();
    if (aberration_out) *aberration_out = ab;
    return s;
}

int cmd_simulate(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    save_config(cfg, cfg.out_dir + "/config.snapshot");
    ensure_dir(cfg.out_dir + "/train");
    ensure_dir(cfg.out_dir + "/val");

    const std::size_t count = static_cast<std::size_t>(cfg.dataset_count);
    std::vector<cvcnn::Sample> samples(count);
    parallel_for(count, cfg.workers,
                 [&](std::size_t i) { samples[i] = make_training_sample(cfg, i); });
    for (std::size_t i = 0; i < count; ++i) {
        const char* split = (i % 5 == 4) ? "val" : "train";
        std::ostringstream name;
        name << cfg.out_dir << '/' << split << "/sample_" << std::setw(5)
             << std::setfill('0') << i << ".ulms";
        cvcnn::save_sample(name.str(), samples[i]);
    }
    return 0;
}

int cmd_beamform(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    save_config(cfg, cfg.out_dir + "/config.snapshot");
    std::vector<ChannelIQ> frames = load_frames(cfg.out_dir);
    std::vector<BeamformedImage> images = beamform_stack(frames, cfg);
    save_image_stack(cfg.out_dir + "/images_uncorrected.ulmt", images);
    return 0;
}

int cmd_estimate(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    save_config(cfg, cfg.out_dir + "/config.snapshot");
    std::string patch_dir = fs::is_directory(cfg.out_dir + "/patches")
                                ? cfg.out_dir + "/patches"
                                : cfg.out_dir + "/val";
    std::vector<std::string> files = sorted_files(patch_dir, ".ulms");
    if (files.empty()) throw std::runtime_error("estimate: no patches in " + patch_dir);

    std::unique_ptr<cvcnn::Model> model;
    if (cfg.estimator == "cvcnn") {
        model = std::make_unique<cvcnn::Model>(cfg.model_spec());
        cvcnn::Adam opt;
        std::string ckpt = cfg.model_checkpoint.empty()
                               ? cfg.out_dir + "/checkpoint.ulmc"
                               : cfg.model_checkpoint;
        cvcnn::load_checkpoint(ckpt, *model, nullptr, nullptr, nullptr);
    }

    ensure_dir(cfg.out_dir + "/estimates");
    std::ostringstream csv;
    csv << "patch,phase_rmse\n";
    csv.precision(12);
    for (const std::string& f : files) {
        cvcnn::Sample s = cvcnn::load_sample(f);
        RealignedPatch patch;
        patch.data = ComplexTensor(
            {s.input.dim(0), s.input.dim(1), s.input.dim(2), s.input.dim(3)},
            std::vector<cplx>(s.input.data(), s.input.data() + s.input.size()));
        AberrationFunction truth(s.target);
        AberrationFunction est = estimate_for_patch(patch, cfg, &truth, model.get());
        std::string stem = fs::path(f).stem().string();
        est.save_ulmt(cfg.out_dir + "/estimates/" + stem + ".ulmt");
        csv << stem << ',' << phase_rmse(est, truth) << '\n';
    }
    write_text(cfg.out_dir + "/estimates.csv", csv.str());
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    save_config(cfg, cfg.out_dir + "/config.snapshot");
    std::vector<cvcnn::Sample> train_set = load_samples(cfg.out_dir + "/train");
    std::vector<cvcnn::Sample> val_set = load_samples(cfg.out_dir + "/val");
    if (train_set.empty()) throw std::runtime_error("train: no samples in " + cfg.out_dir + "/train");

    cvcnn::Model model(cfg.model_spec());
    cvcnn::Adam opt;
    Rng rng(cfg.seed);
    std::vector<cvcnn::EpochStats> history;
    std::size_t start_epoch = 0;
    std::string ckpt = cfg.out_dir + "/checkpoint.ulmc";
    if (fs::exists(ckpt)) {
        start_epoch = cvcnn::load_checkpoint(ckpt, model, &opt, &rng, &history);
    } else {
        model.init_weights(cfg.seed);
    }

    cvcnn::TrainConfig tc = cfg.train_config();
    tc.checkpoint_dir = cfg.out_dir;
    std::vector<cvcnn::EpochStats> more =
        cvcnn::train(model, train_set, val_set, tc, &opt, &rng, start_epoch);
    history.insert(history.end(), more.begin(), more.end());
    write_text(cfg.out_dir + "/history.csv", cvcnn::history_csv(history));
    return 0;
}

int cmd_infer(const RunConfig& cfg) {
    RunConfig c = cfg;
    c.estimator = "cvcnn";
    return cmd_estimate(c);
}

int cmd_pipeline(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    save_config(cfg, cfg.out_dir + "/config.snapshot");

    Scene scene = simulate_scene(cfg);
    save_frames(cfg.out_dir, scene.frames);
    scene.aberration.save_ulmt(cfg.out_dir + "/aberration_true.ulmt");
    scene.aberration.save_csv(cfg.out_dir + "/aberration_true.csv");

    std::vector<BeamformedImage> images = beamform_stack(scene.frames, cfg);
    save_image_stack(cfg.out_dir + "/images_uncorrected.ulmt", images);

    ComplexTensor psf = make_psf_template(cfg);
    UlmResult ulm_before = run_ulm(images, psf, cfg);
    write_text(cfg.out_dir + "/tracks_uncorrected.csv", tracks_csv(ulm_before.tracks));

    DensityMap density_before = density_from_tracks(ulm_before.tracks, cfg);
    ulmt::write_real(cfg.out_dir + "/density_before.ulmt", density_before.counts);
    FrcSummary frc_before = frc_for_tracks(ulm_before.tracks, cfg,
                                           cfg.out_dir + "/frc_before.csv");

    // Per-track estimation on a fit-fraction subset.
    std::vector<std::size_t> order(ulm_before.tracks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(cfg.seed + 0xf17);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    std::size_t fit_count = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(cfg.fit_fraction *
                                              static_cast<double>(order.size()))));
    fit_count = std::min(fit_count, order.size());

    std::unique_ptr<cvcnn::Model> model;
    if (cfg.estimator == "cvcnn") {
        model = std::make_unique<cvcnn::Model>(cfg.model_spec());
        if (cfg.model_checkpoint.empty())
            throw std::runtime_error("pipeline: cvcnn estimator needs model_checkpoint");
        cvcnn::load_checkpoint(cfg.model_checkpoint, *model, nullptr, nullptr, nullptr);
    }

    std::vector<std::pair<std::pair<double, double>, AberrationFunction>> samples;
    std::vector<double> auc_before, auc_after;
    std::vector<AberrationFunction> estimates;
    for (std::size_t i = 0; i < fit_count && !ulm_before.tracks.empty(); ++i) {
        const Track& tr = ulm_before.tracks[order[i]];
        if (tr.length() < static_cast<std::size_t>(cfg.patch_frames)) continue;
        RealignedPatch patch = realign_hyperbola(
            scene.frames, tr, static_cast<std::size_t>(cfg.patch_frames),
            static_cast<std::size_t>(cfg.patch_samples), cfg.probe(), cfg.scheme());
        AberrationFunction est =
            estimate_for_patch(patch, cfg, &scene.aberration, model.get());
        estimates.push_back(est);
        samples.push_back({{tr.mean_x(), tr.mean_z()}, est});

        CoherenceCurve cb = spatial_coherence(patch, 0);
        auc_before.push_back(cb.auc);
        RealignedPatch corrected = correct_realigned_patch(patch, est, cfg.probe());
        CoherenceCurve ca = spatial_coherence(corrected, 0);
        auc_after.push_back(ca.auc);
    }

    json report;
    report["config_hash"] = config_hash(cfg);
    report["tracks_before"] = ulm_before.tracks.size();
    report["estimated_tracks"] = samples.size();
    report["frc_before_resolution"] = frc_before.has_resolution ? frc_before.resolution : 0.0;
    report["frc_before_has_resolution"] = frc_before.has_resolution;

    std::vector<MetricRow> rows;
    rows.push_back({"tracks_before", static_cast<double>(ulm_before.tracks.size()), "count"});
    if (frc_before.has_resolution)
        rows.push_back({"frc_resolution_before", frc_before.resolution, "m"});

    if (!samples.empty() && cfg.estimator != "none") {
        AberrationMap map =
            interpolate_aberration_map(samples, cfg.grid(), cfg.map_smoothness);
        ulmt::write_complex(cfg.out_dir + "/aberration_map.ulmt", map.values);

        AberrationFunction mean_est = average_track_estimates(estimates);
        mean_est.save_ulmt(cfg.out_dir + "/aberration_estimate.ulmt");
        double rmse = phase_rmse(mean_est, scene.aberration);
        rows.push_back({"phase_rmse", rmse, "rad"});
        report["phase_rmse"] = rmse;

        std::vector<BeamformedImage> corrected_images =
            beamform_stack_map(scene.frames, cfg, map);
        save_image_stack(cfg.out_dir + "/images_corrected.ulmt", corrected_images);

        UlmResult ulm_after = run_ulm(corrected_images, psf, cfg);
        write_text(cfg.out_dir + "/tracks_corrected.csv", tracks_csv(ulm_after.tracks));
        DensityMap density_after = density_from_tracks(ulm_after.tracks, cfg);
        ulmt::write_real(cfg.out_dir + "/density_after.ulmt", density_after.counts);
        FrcSummary frc_after = frc_for_tracks(ulm_after.tracks, cfg,
                                              cfg.out_dir + "/frc_after.csv");
        report["tracks_after"] = ulm_after.tracks.size();
        report["frc_after_resolution"] = frc_after.has_resolution ? frc_after.resolution : 0.0;
        report["frc_after_has_resolution"] = frc_after.has_resolution;
        rows.push_back({"tracks_after", static_cast<double>(ulm_after.tracks.size()), "count"});
        if (frc_after.has_resolution)
            rows.push_back({"frc_resolution_after", frc_after.resolution, "m"});
    } else {
        // estimator = none: before and after are the same data by construction.
        ulmt::write_real(cfg.out_dir + "/density_after.ulmt", density_before.counts);
        report["tracks_after"] = ulm_before.tracks.size();
    }

    if (!auc_before.empty()) {
        double mb = 0.0, ma = 0.0;
        for (double v : auc_before) mb += v;
        for (double v : auc_after) ma += v;
        mb /= static_cast<double>(auc_before.size());
        ma /= static_cast<double>(auc_after.size());
        rows.push_back({"coherence_auc_before", mb, "unitless"});
        rows.push_back({"coherence_auc_after", ma, "unitless"});
        report["coherence_auc_before"] = mb;
        report["coherence_auc_after"] = ma;
    }

    write_text(cfg.out_dir + "/metrics.csv", metrics_csv(rows, config_hash(cfg)));
    write_text(cfg.out_dir + "/report.json", report.dump(2) + "\n");
    return 0;
}

int cmd_metrics(const RunConfig& cfg) {
    ensure_dir(cfg.out_dir);
    std::vector<MetricRow> rows;
    std::string before_path = cfg.out_dir + "/density_before.ulmt";
    std::string after_path = cfg.out_dir + "/density_after.ulmt";
    if (fs::exists(before_path) && fs::exists(after_path)) {
        DensityMap a, b;
        a.grid = b.grid = refine_grid(cfg.grid(), cfg.density_factor);
        a.counts = ulmt::read_real(before_path);
        b.counts = ulmt::read_real(after_path);
        double overlap = 0.0, ea = 0.0, eb = 0.0;
        for (std::size_t i = 0; i < a.counts.size(); ++i) {
            overlap += a.counts[i] * b.counts[i];
            ea += a.counts[i] * a.counts[i];
            eb += b.counts[i] * b.counts[i];
        }
        if (ea > 0.0 && eb > 0.0)
            rows.push_back({"density_correlation", overlap / std::sqrt(ea * eb), "unitless"});
    }
    std::string est_path = cfg.out_dir + "/aberration_estimate.ulmt";
    std::string true_path = cfg.out_dir + "/aberration_true.ulmt";
    if (fs::exists(est_path) && fs::exists(true_path)) {
        AberrationFunction est = AberrationFunction::load_ulmt(est_path);
        AberrationFunction truth = AberrationFunction::load_ulmt(true_path);
        rows.push_back({"phase_rmse", phase_rmse(est, truth), "rad"});
    }
    if (rows.empty()) throw std::runtime_error("metrics: no inputs found in " + cfg.out_dir);
    write_text(cfg.out_dir + "/metrics.csv", metrics_csv(rows, config_hash(cfg)));
    return 0;
}

}  // namespace ulmpac::pipeline
