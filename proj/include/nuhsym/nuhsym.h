#ifndef NUHSYM_H
#define NUHSYM_H

/* C interface of the nuhsym toolkit. Handles are opaque; every call that can
   fail returns a status and leaves a message in a thread-local buffer read by
   nuh_last_error(). Strings handed out by the library are freed with
   nuh_free_string(). Matrices are row-major. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(NUHSYM_BUILDING)
#    define NUH_API __declspec(dllexport)
#  else
#    define NUH_API __declspec(dllimport)
#  endif
#else
#  define NUH_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nuh_status {
  NUH_OK = 0,
  NUH_E_SINGULAR_POINT = 1,
  NUH_E_SINGULAR_ENCOUNTERED,
  NUH_E_NO_SUCH_BRANCH,
  NUH_E_BRANCH_DOMAIN,
  NUH_E_NOT_HYPERBOLIC,
  NUH_E_NON_CONVERGENT,
  NUH_E_DIVERGENT,
  NUH_E_ILL_CONDITIONED,
  NUH_E_BLOCK_BOUND,
  NUH_E_UNDERFLOW,
  NUH_E_DOMAIN_ESCAPE,
  NUH_E_OUT_OF_IMAGE,
  NUH_E_ADMISSIBILITY_LOST,
  NUH_E_SHADOW_ESCAPE,
  NUH_E_EMPTY_INPUT,
  NUH_E_EMPTY_CORE,
  NUH_E_OVERFLOW,
  NUH_E_PATH_EXHAUSTED,
  NUH_E_INVALID_ARGUMENT,
  NUH_E_CONFIG,
  NUH_E_IO,
  NUH_E_INTERNAL = 100
} nuh_status;

typedef struct nuh_system nuh_system;
typedef struct nuh_window nuh_window;

NUH_API const char* nuh_version(void);
NUH_API const char* nuh_status_string(nuh_status s);
/* message of the last failed call on this thread ("" when none) */
NUH_API const char* nuh_last_error(void);
NUH_API void nuh_free_string(char* s);

/* spec_json is the "system" object of the config, e.g. {"type":"viana","alpha":0.01} */
NUH_API nuh_status nuh_system_create(const char* spec_json, nuh_system** out);
NUH_API void nuh_system_destroy(nuh_system* s);
NUH_API int nuh_system_dim(const nuh_system* s);
NUH_API nuh_status nuh_system_step(const nuh_system* s, const double* x, double* y);
NUH_API nuh_status nuh_system_derivative(const nuh_system* s, const double* x, double* jac);
/* branch (digit, sign); invertible systems use (0, 0) */
NUH_API nuh_status nuh_system_inverse(const nuh_system* s, const double* y, int digit, int sign, double* x);

/* window x_{-n_bwd}..x_{n_fwd}, backward branches drawn from rng_seed */
NUH_API nuh_status nuh_window_create(const nuh_system* s, const double* seed, int n_fwd, int n_bwd,
                                     uint64_t rng_seed, nuh_window** out);
NUH_API void nuh_window_destroy(nuh_window* w);
NUH_API nuh_status nuh_window_bounds(const nuh_window* w, int* nb, int* nf);
NUH_API nuh_status nuh_window_point(const nuh_window* w, int n, double* x);

/* descending exponents, cap >= dim */
NUH_API nuh_status nuh_lyapunov_exponents(const nuh_system* s, const nuh_window* w, double* out, int cap);
/* Lyapunov data at x_k: ds, then S (ds values) and U (dim-ds values) in su, C as dim x dim */
NUH_API nuh_status nuh_lyapunov_data(const nuh_system* s, const nuh_window* w, double chi, int k, int* ds,
                                     double* su, double* C, double* inv_C_norm);
/* reduced derivative D(x_k), dim x dim */
NUH_API nuh_status nuh_reduced_derivative(const nuh_system* s, const nuh_window* w, double chi, int k,
                                          double* D, double* off_block);

NUH_API nuh_status nuh_default_config(char** out_json);
/* defaults overlaid with config_json and the overrides (either may be NULL);
   only key names and types are checked, a missing seed stays null */
NUH_API nuh_status nuh_merged_config(const char* config_json, const int64_t* seed_override,
                                     const char* policy_override, char** out_json);
/* same, fully validated */
NUH_API nuh_status nuh_effective_config(const char* config_json, char** out_json);
NUH_API nuh_status nuh_config_hash(const char* config_json, char** out_hex);

/* Runs a driver command. seed_override and policy_override may be NULL.
   exit_code (optional) gets 0 ok, 2 config error, 3 numeric failure, 1 I/O. */
NUH_API nuh_status nuh_run(const char* command, const char* config_json, const char* out_dir,
                           const int64_t* seed_override, const char* policy_override, int* exit_code);

#ifdef __cplusplus
}
#endif

#endif
