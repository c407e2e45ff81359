#include "ulmpac/config.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <json.hpp>

namespace ulmpac {

namespace {

using nlohmann::json;

// Field table drives parsing, serialization and single-key overrides alike.
struct Field {
    const char* key;
    enum Kind { Bool, Int, U64, Double, String } kind;
    void* (*ptr)(RunConfig&);
};

#define F(kind, name) \
    {#name, Field::kind, [](RunConfig& c) -> void* { return &c.name; }}

const Field kFields[] = {
    F(Bool, paper_scale),
    F(U64, seed),
    F(Int, workers),
    F(String, out_dir),
    F(String, estimator),
    F(Double, fit_fraction),
    F(String, model_checkpoint),
    F(Int, num_elements),
    F(Double, pitch_lambda),
    F(Double, center_frequency),
    F(Double, sound_speed),
    F(Int, num_angles),
    F(Double, angle_span_deg),
    F(Int, pulse_cycles),
    F(Double, pixel_lambda),
    F(Double, fov_x_lambda),
    F(Double, fov_z0_lambda),
    F(Double, fov_z1_lambda),
    F(Double, bubble_concentration),
    F(Double, frame_rate),
    F(Int, num_frames),
    F(Double, speckle_density),
    F(Double, speckle_scale),
    F(Double, noise_fraction),
    F(Double, aberration_phase_bound),
    F(Double, aberration_amp_min),
    F(Int, aberration_knots),
    F(Int, dataset_count),
    F(Int, patch_frames),
    F(Int, patch_samples),
    F(Int, svd_cutoff),
    F(Double, detect_threshold),
    F(Double, max_link_dist_pixels),
    F(Int, min_track_len),
    F(Int, density_min_len),
    F(Int, density_factor),
    F(Double, map_smoothness),
    F(Double, lr0),
    F(Double, lr_gamma),
    F(Double, alpha),
    F(Int, batch_size),
    F(Int, epochs),
    F(Double, frc_snr),
};

#undef F

void assign_field(RunConfig& cfg, const Field& f, const json& v) {
    try {
        switch (f.kind) {
            case Field::Bool: *static_cast<bool*>(f.ptr(cfg)) = v.get<bool>(); break;
            case Field::Int: *static_cast<int*>(f.ptr(cfg)) = v.get<int>(); break;
            case Field::U64:
                *static_cast<std::uint64_t*>(f.ptr(cfg)) = v.get<std::uint64_t>();
                break;
            case Field::Double: *static_cast<double*>(f.ptr(cfg)) = v.get<double>(); break;
            case Field::String:
                *static_cast<std::string*>(f.ptr(cfg)) = v.get<std::string>();
                break;
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for ") + f.key + ": " + e.what());
    }
}

json field_value(const RunConfig& cfg, const Field& f) {
    RunConfig& c = const_cast<RunConfig&>(cfg);
    switch (f.kind) {
        case Field::Bool: return *static_cast<bool*>(f.ptr(c));
        case Field::Int: return *static_cast<int*>(f.ptr(c));
        case Field::U64: return *static_cast<std::uint64_t*>(f.ptr(c));
        case Field::Double: return *static_cast<double*>(f.ptr(c));
        case Field::String: return *static_cast<std::string*>(f.ptr(c));
    }
    return nullptr;
}

}  // namespace

void RunConfig::validate() const {
    if (num_elements < 2) throw ConfigError("config: num_elements must be >= 2");
    if (num_angles < 1) throw ConfigError("config: num_angles must be >= 1");
    if (center_frequency <= 0.0 || sound_speed <= 0.0)
        throw ConfigError("config: center_frequency and sound_speed must be positive");
    if (pixel_lambda <= 0.0) throw ConfigError("config: pixel_lambda must be positive");
    if (fov_z1_lambda <= fov_z0_lambda || fov_z0_lambda <= 0.0)
        throw ConfigError("config: depth span must be positive and increasing");
    if (estimator != "coherence" && estimator != "cvcnn" && estimator != "ground-truth" &&
        estimator != "none")
        throw ConfigError("config: unknown estimator '" + estimator + "'");
    if (fit_fraction <= 0.0 || fit_fraction > 1.0)
        throw ConfigError("config: fit_fraction in (0, 1]");
    if (patch_samples % 2 == 0) throw ConfigError("config: patch_samples must be odd");
    if (patch_frames < 1 || num_frames < 1)
        throw ConfigError("config: frame counts must be positive");
    if (batch_size < 1 || epochs < 0) throw ConfigError("config: bad training sizes");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (dataset_count < 1) throw ConfigError("config: dataset_count must be >= 1");
}

ProbeGeometry RunConfig::probe() const {
    double lam = wavelength();
    return ProbeGeometry::linear(num_elements, pitch_lambda * lam, center_frequency,
                                 sound_speed);
}

TransmitScheme RunConfig::scheme() const {
    TransmitScheme s;
    s.pulse_cycles = pulse_cycles;
    double span = angle_span_deg * M_PI / 180.0;
    for (int i = 0; i < num_angles; ++i) {
        double a = num_angles == 1
                       ? 0.0
                       : -span / 2.0 + span * static_cast<double>(i) /
                                           static_cast<double>(num_angles - 1);
        s.angles.push_back(a);
    }
    return s;
}

ImageGrid RunConfig::grid() const {
    double lam = wavelength();
    ImageGrid g;
    g.dx = g.dz = pixel_lambda * lam;
    g.x0 = -fov_x_lambda * lam;
    g.z0 = fov_z0_lambda * lam;
    g.nx = static_cast<std::size_t>(std::floor(2.0 * fov_x_lambda / pixel_lambda)) + 1;
    g.nz = static_cast<std::size_t>(
               std::floor((fov_z1_lambda - fov_z0_lambda) / pixel_lambda)) +
           1;
    return g;
}

FlowPhantomConfig RunConfig::phantom() const {
    double lam = wavelength();
    FlowPhantomConfig p;
    p.bubble_concentration = bubble_concentration;
    p.fov_x = fov_x_lambda * lam;
    p.fov_z0 = fov_z0_lambda * lam;
    p.fov_z1 = fov_z1_lambda * lam;
    p.frame_rate = frame_rate;
    p.num_frames = num_frames;
    p.speckle_density = speckle_density;
    p.speckle_scale = speckle_scale;
    p.noise_fraction = noise_fraction;
    p.rng_seed = seed;

    // Two horizontal vessels spanning the field of view.
    double zmid = 0.5 * (p.fov_z0 + p.fov_z1);
    double dz4 = 0.25 * (p.fov_z1 - p.fov_z0);
    for (double zf : {zmid - dz4, zmid + dz4}) {
        Vessel v;
        v.path = {{-p.fov_x, zf}, {p.fov_x, zf}};
        v.radius = lam;
        v.peak_speed = 0.4 * lam * frame_rate;  // < half a wavelength per frame
        p.vessels.push_back(v);
    }
    return p;
}

AberrationConfig RunConfig::aberration() const {
    AberrationConfig a;
    a.phase_bound = aberration_phase_bound;
    a.amp_min = aberration_amp_min;
    a.smoothing_points = aberration_knots;
    a.rng_seed = seed + 0x5eed;
    return a;
}

cvcnn::TrainConfig RunConfig::train_config() const {
    cvcnn::TrainConfig t;
    t.lr0 = lr0;
    t.lr_gamma = lr_gamma;
    t.alpha = alpha;
    t.batch_size = static_cast<std::size_t>(batch_size);
    t.epochs = static_cast<std::size_t>(epochs);
    t.seed = seed;
    t.workers = workers;
    return t;
}

cvcnn::ModelSpec RunConfig::model_spec() const {
    cvcnn::ModelSpec s = cvcnn::spec_for(paper_scale ? cvcnn::Scale::Paper
                                                     : cvcnn::Scale::Desk);
    s.angles = static_cast<std::size_t>(num_angles);
    s.frames = static_cast<std::size_t>(patch_frames);
    s.samples = static_cast<std::size_t>(patch_samples);
    s.elements = static_cast<std::size_t>(num_elements);
    return s;
}

void apply_scale(RunConfig& cfg, bool paper_scale) {
    cfg.paper_scale = paper_scale;
    if (paper_scale) {
        cfg.num_elements = 128;
        cfg.num_angles = 11;
        cfg.patch_frames = 16;
        cfg.patch_samples = 17;
        cfg.aberration_knots = 16;
        cfg.dataset_count = 20000;
        cfg.fov_x_lambda = 64.0;
        cfg.fov_z1_lambda = 136.0;
        cfg.speckle_density = 50.0;
    } else {
        cfg.num_elements = 16;
        cfg.num_angles = 3;
        cfg.patch_frames = 8;
        cfg.patch_samples = 9;
        cfg.aberration_knots = 8;
        cfg.dataset_count = 2000;
        cfg.fov_x_lambda = 16.0;
        cfg.fov_z1_lambda = 40.0;
        cfg.speckle_density = 2.0;
    }
}

RunConfig parse_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: parse error: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    RunConfig cfg;
    if (j.contains("paper_scale")) {
        if (!j["paper_scale"].is_boolean())
            throw ConfigError("config: paper_scale must be boolean");
        apply_scale(cfg, j["paper_scale"].get<bool>());
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const Field& f : kFields) {
            if (it.key() == f.key) {
                assign_field(cfg, f, it.value());
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("config: unknown key '" + it.key() + "'");
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return parse_config_json(os.str());
}

std::string canonical_config(const RunConfig& cfg) {
    std::map<std::string, json> sorted;
    for (const Field& f : kFields) sorted[f.key] = field_value(cfg, f);
    std::ostringstream os;
    os << "{\n";
    bool first = true;
    for (const auto& [k, v] : sorted) {
        if (!first) os << ",\n";
        first = false;
        if (v.is_number_float()) {
            std::ostringstream num;
            num << std::setprecision(17) << v.get<double>();
            os << "  \"" << k << "\": " << num.str();
        } else {
            os << "  \"" << k << "\": " << v.dump();
        }
    }
    os << "\n}\n";
    return os.str();
}

std::string config_hash(const RunConfig& cfg) {
    // FNV-1a 64 over the canonical serialization.
    std::string s = canonical_config(cfg);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot write " + path);
    os << canonical_config(cfg);
}

void set_config_field(RunConfig& cfg, const std::string& key, const std::string& value) {
    for (const Field& f : kFields) {
        if (key != f.key) continue;
        json v;
        if (f.kind == Field::String) {
            v = value;
        } else {
            try {
                v = json::parse(value);
            } catch (const json::exception&) {
                throw ConfigError("config: bad value '" + value + "' for " + key);
            }
        }
        if (key == "paper_scale") {
            if (!v.is_boolean()) throw ConfigError("config: paper_scale must be boolean");
            apply_scale(cfg, v.get<bool>());
            return;
        }
        assign_field(cfg, f, v);
        return;
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace ulmpac
