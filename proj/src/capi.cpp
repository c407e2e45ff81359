#include "ulmpac.h"

#include <functional>
#include <string>

#include "ulmpac/config.hpp"
#include "ulmpac/pipeline.hpp"

struct ulmpac_ctx {
    ulmpac::RunConfig cfg;
    std::string last_error;
    std::string hash;
};

namespace {

int guard(ulmpac_ctx* ctx, int config_code, const std::function<int()>& fn) {
    if (!ctx) return ULMPAC_ERR_CONFIG;
    ctx->last_error.clear();
    try {
        return fn();
    } catch (const ulmpac::ConfigError& e) {
        ctx->last_error = e.what();
        return config_code;
    } catch (const std::exception& e) {
        ctx->last_error = e.what();
        return ULMPAC_ERR_STAGE;
    }
}

}  // namespace

extern "C" {

const char* ulmpac_version(void) { return "ulmpac 1.0.0"; }

ulmpac_ctx* ulmpac_ctx_new(void) { return new ulmpac_ctx(); }

void ulmpac_ctx_free(ulmpac_ctx* ctx) { delete ctx; }

const char* ulmpac_last_error(const ulmpac_ctx* ctx) {
    return ctx ? ctx->last_error.c_str() : "null context";
}

int ulmpac_load_config(ulmpac_ctx* ctx, const char* path) {
    return guard(ctx, ULMPAC_ERR_CONFIG, [&] {
        if (!path) throw ulmpac::ConfigError("config: null path");
        ctx->cfg = ulmpac::load_config(path);
        return ULMPAC_OK;
    });
}

int ulmpac_set_option(ulmpac_ctx* ctx, const char* key, const char* value) {
    return guard(ctx, ULMPAC_ERR_CONFIG, [&] {
        if (!key || !value) throw ulmpac::ConfigError("config: null option");
        ulmpac::set_config_field(ctx->cfg, key, value);
        return ULMPAC_OK;
    });
}

const char* ulmpac_config_hash(ulmpac_ctx* ctx) {
    if (!ctx) return "";
    ctx->hash = ulmpac::config_hash(ctx->cfg);
    return ctx->hash.c_str();
}

int ulmpac_run(ulmpac_ctx* ctx, const char* subcommand) {
    return guard(ctx, ULMPAC_ERR_CONFIG, [&]() -> int {
        if (!subcommand) throw ulmpac::ConfigError("run: null subcommand");
        std::string cmd = subcommand;
        ctx->cfg.validate();
        using namespace ulmpac::pipeline;
        if (cmd == "simulate") return cmd_simulate(ctx->cfg);
        if (cmd == "beamform") return cmd_beamform(ctx->cfg);
        if (cmd == "estimate") return cmd_estimate(ctx->cfg);
        if (cmd == "train") return cmd_train(ctx->cfg);
        if (cmd == "infer") return cmd_infer(ctx->cfg);
        if (cmd == "pipeline") return cmd_pipeline(ctx->cfg);
        if (cmd == "metrics") return cmd_metrics(ctx->cfg);
        throw ulmpac::ConfigError("run: unknown subcommand '" + cmd + "'");
    });
}

int ulmpac_das_delay(double x, double z, double theta_rad, double xn, double c,
                     double* out_seconds) {
    if (!out_seconds) return ULMPAC_ERR_CONFIG;
    try {
        *out_seconds = ulmpac::das_delay(x, z, theta_rad, xn, c);
        return ULMPAC_OK;
    } catch (const std::exception&) {
        return ULMPAC_ERR_CONFIG;
    }
}

}  // extern "C"
