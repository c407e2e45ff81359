#ifndef ULMPAC_H
#define ULMPAC_H

/* C interface to the ulmpac workbench. All entry points return 0 on success,
 * 2 on configuration errors and 3 on stage failures; the last error message
 * is available per context. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#define ULMPAC_OK 0
#define ULMPAC_ERR_CONFIG 2
#define ULMPAC_ERR_STAGE 3

typedef struct ulmpac_ctx ulmpac_ctx;

const char* ulmpac_version(void);

ulmpac_ctx* ulmpac_ctx_new(void);
void ulmpac_ctx_free(ulmpac_ctx* ctx);

/* Empty string when no error has occurred. The pointer stays valid until the
 * next call on the same context. */
const char* ulmpac_last_error(const ulmpac_ctx* ctx);

/* Load a JSON run configuration file into the context. */
int ulmpac_load_config(ulmpac_ctx* ctx, const char* path);

/* Override one configuration field by its JSON key. Non-string values are
 * given in JSON literal syntax. */
int ulmpac_set_option(ulmpac_ctx* ctx, const char* key, const char* value);

/* Canonical hash of the current configuration. */
const char* ulmpac_config_hash(ulmpac_ctx* ctx);

/* Run one subcommand: simulate, beamform, estimate, train, infer, pipeline,
 * metrics. */
int ulmpac_run(ulmpac_ctx* ctx, const char* subcommand);

/* Plane-wave round-trip delay to pixel (x, z) and back to element xn. */
int ulmpac_das_delay(double x, double z, double theta_rad, double xn, double c,
                     double* out_seconds);

#ifdef __cplusplus
}
#endif

#endif /* ULMPAC_H */
