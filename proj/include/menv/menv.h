#ifndef MENV_MENV_H
#define MENV_MENV_H

#include <stddef.h>

#if defined(_WIN32)
#define MENV_API __declspec(dllexport)
#elif defined(__GNUC__)
#define MENV_API __attribute__((visibility("default")))
#else
#define MENV_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum menv_status {
  MENV_OK = 0,
  MENV_E_INVALID_ARGUMENT = 1,
  MENV_E_PARSE = 2,
  MENV_E_DIMENSION = 3,
  MENV_E_RANGE = 4,
  MENV_E_DEGENERATE = 5,
  MENV_E_CONFIG = 6,
  MENV_E_NUMERIC = 7,
  MENV_E_IO = 8,
  MENV_E_INTERNAL = 9
} menv_status;

typedef struct menv_config menv_config;
typedef struct menv_vae menv_vae;
typedef struct menv_envelope menv_envelope;

typedef struct menv_score {
  double pd_measure;
  size_t ood_count;
  size_t length;
  size_t dims;
} menv_score;

/* Message of the last failure on the calling thread; never NULL. */
MENV_API const char* menv_last_error(void);
MENV_API const char* menv_status_name(menv_status status);
/* Process exit code for a status: 0 ok, 2 config/validation, 3 numeric, 4 I/O. */
MENV_API int menv_exit_code(menv_status status);

/* path may be NULL (defaults only). overrides are "a.b=value" strings. */
MENV_API menv_status menv_config_load(const char* path, const char* const* overrides, size_t n_overrides,
                                      menv_config** out);
MENV_API menv_status menv_config_set(menv_config* config, const char* assignment);
MENV_API menv_status menv_config_set_jobs(menv_config* config, size_t jobs);
/* Resolved configuration as canonical JSON. Release with menv_string_free. */
MENV_API menv_status menv_config_dump(const menv_config* config, char** out);
MENV_API void menv_config_free(menv_config* config);
MENV_API void menv_string_free(char* text);

MENV_API menv_status menv_cmd_synth(const menv_config* config);
MENV_API menv_status menv_cmd_train_vae(const menv_config* config);
MENV_API menv_status menv_cmd_encode(const menv_config* config);
MENV_API menv_status menv_cmd_fit_envelope(const menv_config* config);
MENV_API menv_status menv_cmd_score(const menv_config* config);
MENV_API menv_status menv_cmd_evaluate(const menv_config* config);
MENV_API menv_status menv_cmd_plot(const menv_config* config);
MENV_API menv_status menv_cmd_run(const menv_config* config);

MENV_API menv_status menv_vae_load(const char* path, menv_vae** out);
MENV_API size_t menv_vae_latent_dim(const menv_vae* vae);
/* pose has 183 values; mu and logvar receive latent_dim values each. */
MENV_API menv_status menv_vae_encode(const menv_vae* vae, const double* pose, double* mu, double* logvar);
MENV_API menv_status menv_vae_decode(const menv_vae* vae, const double* z, double* pose);
MENV_API void menv_vae_free(menv_vae* vae);

MENV_API menv_status menv_envelope_load(const char* path, menv_envelope** out);
MENV_API menv_status menv_envelope_shape(const menv_envelope* envelope, size_t* length, size_t* dims);
/* Each output array holds `length` values for the requested dimension. */
MENV_API menv_status menv_envelope_posterior(const menv_envelope* envelope, size_t dimension, double* mean,
                                             double* var_f, double* var_pred);
/* mu and logvar are frames x dims, row-major. Aligns to the reference and
   scores with the default scoring options. */
MENV_API menv_status menv_envelope_score(const menv_envelope* envelope, const double* mu, const double* logvar,
                                         size_t frames, size_t dims, menv_score* out);
MENV_API void menv_envelope_free(menv_envelope* envelope);

#ifdef __cplusplus
}
#endif

#endif
