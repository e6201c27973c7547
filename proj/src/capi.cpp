#include "nuhsym/nuhsym.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <random>
#include <string>

#include "nuhsym/cocycle.hpp"
#include "nuhsym/driver.hpp"

struct nuh_system {
  nuh::ModelPtr m;
};

struct nuh_window {
  nuh::OrbitWindow w;
};

namespace {

thread_local std::string g_last;

nuh_status fail(nuh_status s, const std::string& msg) {
  g_last = msg;
  return s;
}

template <class F>
nuh_status guard(F&& f) {
  try {
    g_last.clear();
    return f();
  } catch (const nuh::Error& e) {
    return fail(static_cast<nuh_status>(e.code()), e.what());
  } catch (const nuh::json::exception& e) {
    return fail(NUH_E_CONFIG, std::string("ConfigError: ") + e.what());
  } catch (const std::exception& e) {
    return fail(NUH_E_INTERNAL, e.what());
  } catch (...) {
    return fail(NUH_E_INTERNAL, "unknown exception");
  }
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (p) std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

nuh::json parse(const char* text) {
  if (!text || !*text) return nuh::json::object();
  try {
    return nuh::json::parse(text);
  } catch (const nuh::json::exception& e) {
    throw nuh::Error(nuh::Errc::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
}

nuh::Vec vec_in(const double* x, int n) { return Eigen::Map<const nuh::Vec>(x, n); }

void mat_out(const nuh::Mat& A, double* out) {
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) out[i * A.cols() + j] = A(i, j);
}

#define NUH_REQUIRE(cond, what) \
  if (!(cond)) return fail(NUH_E_INVALID_ARGUMENT, std::string("InvalidArgument: ") + (what))

}  // namespace

extern "C" {

const char* nuh_version(void) { return nuh::kVersion; }

const char* nuh_status_string(nuh_status s) {
  if (s == NUH_OK) return "Ok";
  if (s == NUH_E_INTERNAL) return "Internal";
  if (s >= NUH_E_SINGULAR_POINT && s <= NUH_E_IO) return nuh::errc_name(static_cast<nuh::Errc>(s));
  return "Unknown";
}

const char* nuh_last_error(void) { return g_last.c_str(); }

void nuh_free_string(char* s) { std::free(s); }

nuh_status nuh_system_create(const char* spec_json, nuh_system** out) {
  NUH_REQUIRE(out, "out is null");
  *out = nullptr;
  return guard([&] {
    auto m = nuh::make_system(parse(spec_json));
    *out = new nuh_system{m};
    return NUH_OK;
  });
}

void nuh_system_destroy(nuh_system* s) { delete s; }

int nuh_system_dim(const nuh_system* s) { return s ? s->m->dim() : 0; }

nuh_status nuh_system_step(const nuh_system* s, const double* x, double* y) {
  NUH_REQUIRE(s && x && y, "null argument");
  return guard([&] {
    nuh::Vec r = s->m->step(vec_in(x, s->m->dim()));
    std::memcpy(y, r.data(), sizeof(double) * static_cast<size_t>(r.size()));
    return NUH_OK;
  });
}

nuh_status nuh_system_derivative(const nuh_system* s, const double* x, double* jac) {
  NUH_REQUIRE(s && x && jac, "null argument");
  return guard([&] {
    mat_out(s->m->derivative(vec_in(x, s->m->dim())), jac);
    return NUH_OK;
  });
}

nuh_status nuh_system_inverse(const nuh_system* s, const double* y, int digit, int sign, double* x) {
  NUH_REQUIRE(s && y && x, "null argument");
  return guard([&] {
    nuh::Vec r = s->m->inverse_branch(vec_in(y, s->m->dim()), nuh::BranchId{digit, sign});
    std::memcpy(x, r.data(), sizeof(double) * static_cast<size_t>(r.size()));
    return NUH_OK;
  });
}

nuh_status nuh_window_create(const nuh_system* s, const double* seed, int n_fwd, int n_bwd, uint64_t rng_seed,
                             nuh_window** out) {
  NUH_REQUIRE(s && seed && out, "null argument");
  NUH_REQUIRE(n_fwd >= 0 && n_bwd >= 0, "negative window length");
  *out = nullptr;
  return guard([&] {
    std::mt19937_64 rng(rng_seed);
    *out = new nuh_window{nuh::random_window(*s->m, vec_in(seed, s->m->dim()), n_fwd, n_bwd, rng)};
    return NUH_OK;
  });
}

void nuh_window_destroy(nuh_window* w) { delete w; }

nuh_status nuh_window_bounds(const nuh_window* w, int* nb, int* nf) {
  NUH_REQUIRE(w, "null window");
  if (nb) *nb = w->w.nb;
  if (nf) *nf = w->w.nf;
  return NUH_OK;
}

nuh_status nuh_window_point(const nuh_window* w, int n, double* x) {
  NUH_REQUIRE(w && x, "null argument");
  NUH_REQUIRE(n >= -w->w.nb && n <= w->w.nf, "index outside the window");
  const nuh::Vec& p = w->w.x(n);
  std::memcpy(x, p.data(), sizeof(double) * static_cast<size_t>(p.size()));
  return NUH_OK;
}

nuh_status nuh_lyapunov_exponents(const nuh_system* s, const nuh_window* w, double* out, int cap) {
  NUH_REQUIRE(s && w && out, "null argument");
  NUH_REQUIRE(cap >= s->m->dim(), "output too small");
  return guard([&] {
    auto e = nuh::lyapunov_exponents(*s->m, w->w);
    std::copy(e.begin(), e.end(), out);
    return NUH_OK;
  });
}

nuh_status nuh_lyapunov_data(const nuh_system* s, const nuh_window* w, double chi, int k, int* ds, double* su,
                             double* C, double* inv_C_norm) {
  NUH_REQUIRE(s && w, "null argument");
  return guard([&] {
    nuh::CocycleFrames fr(*s->m, w->w, chi);
    nuh::LyapunovData d = fr.data_at(k);
    if (ds) *ds = d.ds;
    if (su) {
      for (int i = 0; i < d.ds; ++i) su[i] = d.S(i);
      for (int i = 0; i < d.du; ++i) su[d.ds + i] = d.U(i);
    }
    if (C) mat_out(d.C, C);
    if (inv_C_norm) *inv_C_norm = d.inv_C_norm;
    return NUH_OK;
  });
}

nuh_status nuh_reduced_derivative(const nuh_system* s, const nuh_window* w, double chi, int k, double* D,
                                  double* off_block) {
  NUH_REQUIRE(s && w, "null argument");
  return guard([&] {
    nuh::CocycleFrames fr(*s->m, w->w, chi);
    nuh::ReducedDerivative r = fr.reduce_at(k);
    if (D) mat_out(r.D, D);
    if (off_block) *off_block = r.off_block;
    return NUH_OK;
  });
}

nuh_status nuh_default_config(char** out_json) {
  NUH_REQUIRE(out_json, "null argument");
  return guard([&] {
    *out_json = dup(nuh::default_config().dump(2));
    return NUH_OK;
  });
}

nuh_status nuh_merged_config(const char* config_json, const int64_t* seed_override, const char* policy_override,
                             char** out_json) {
  NUH_REQUIRE(out_json, "null argument");
  return guard([&] {
    nuh::json cfg = parse(config_json);
    if (!cfg.is_object()) throw nuh::Error(nuh::Errc::ConfigError, "/: expected an object");
    if (seed_override) cfg["seed"] = *seed_override;
    if (policy_override) cfg["policy"] = policy_override;
    *out_json = dup(nuh::merged_config(cfg).dump(2));
    return NUH_OK;
  });
}

nuh_status nuh_effective_config(const char* config_json, char** out_json) {
  NUH_REQUIRE(out_json, "null argument");
  return guard([&] {
    *out_json = dup(nuh::effective_config(parse(config_json)).dump(2));
    return NUH_OK;
  });
}

nuh_status nuh_config_hash(const char* config_json, char** out_hex) {
  NUH_REQUIRE(out_hex, "null argument");
  return guard([&] {
    *out_hex = dup(nuh::config_hash(nuh::effective_config(parse(config_json))));
    return NUH_OK;
  });
}

nuh_status nuh_run(const char* command, const char* config_json, const char* out_dir, const int64_t* seed_override,
                   const char* policy_override, int* exit_code) {
  if (exit_code) *exit_code = 2;
  NUH_REQUIRE(command, "null command");
  return guard([&] {
    nuh::json cfg = parse(config_json);
    if (!cfg.is_object()) throw nuh::Error(nuh::Errc::ConfigError, "/: expected an object");
    if (seed_override) cfg["seed"] = *seed_override;
    if (policy_override) cfg["policy"] = policy_override;
    nuh::RunResult r = nuh::run(command, cfg, out_dir ? out_dir : "");
    if (exit_code) *exit_code = r.status;
    if (r.status == 0) return NUH_OK;
    return fail(r.error ? static_cast<nuh_status>(r.error) : NUH_E_INTERNAL, r.message);
  });
}

}  // extern "C"
