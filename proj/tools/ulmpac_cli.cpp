#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ulmpac.h"

namespace {

struct CtxDeleter {
    void operator()(ulmpac_ctx* c) const { ulmpac_ctx_free(c); }
};

int fail(ulmpac_ctx* ctx, int code) {
    const char* msg = ulmpac_last_error(ctx);
    if (msg && *msg) std::fprintf(stderr, "ulmpac: %s\n", msg);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Phase-aberration correction workbench for ultrasound localization microscopy"};
    app.require_subcommand(1);
    app.set_version_flag("--version", ulmpac_version());

    std::string config_path, out_dir, estimator;
    std::string seed, workers, fit_fraction;
    bool paper_scale = false;

    app.add_option("--config", config_path, "JSON run configuration file");
    app.add_option("--seed", seed, "Global seed override");
    app.add_option("--workers", workers, "Worker thread count");
    app.add_option("--out", out_dir, "Output directory");
    app.add_flag("--paper-scale", paper_scale, "Use the full-size preset");
    app.add_option("--estimator", estimator,
                   "Estimator: coherence, cvcnn, ground-truth, none");
    app.add_option("--fit-fraction", fit_fraction,
                   "Fraction of tracks used for aberration fitting");

    const std::vector<std::string> subcommands = {
        "simulate", "beamform", "estimate", "train", "infer", "pipeline", "metrics"};
    for (const auto& name : subcommands) app.add_subcommand(name)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : ULMPAC_ERR_CONFIG;
    }

    std::unique_ptr<ulmpac_ctx, CtxDeleter> ctx(ulmpac_ctx_new());
    if (!config_path.empty()) {
        int rc = ulmpac_load_config(ctx.get(), config_path.c_str());
        if (rc != ULMPAC_OK) return fail(ctx.get(), rc);
    }
    if (paper_scale) {
        int rc = ulmpac_set_option(ctx.get(), "paper_scale", "true");
        if (rc != ULMPAC_OK) return fail(ctx.get(), rc);
    }
    auto set = [&](const char* key, const std::string& value) {
        if (value.empty()) return ULMPAC_OK;
        return ulmpac_set_option(ctx.get(), key, value.c_str());
    };
    for (auto [key, value] : {std::pair<const char*, std::string>{"seed", seed},
                              {"workers", workers},
                              {"out_dir", out_dir},
                              {"estimator", estimator},
                              {"fit_fraction", fit_fraction}}) {
        int rc = set(key, value);
        if (rc != ULMPAC_OK) return fail(ctx.get(), rc);
    }

    for (const auto& name : subcommands) {
        if (app.got_subcommand(name)) {
            int rc = ulmpac_run(ctx.get(), name.c_str());
            if (rc != ULMPAC_OK) return fail(ctx.get(), rc);
            return 0;
        }
    }
    std::fprintf(stderr, "ulmpac: no subcommand\n");
    return ULMPAC_ERR_CONFIG;
}
