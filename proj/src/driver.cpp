#include "nuhsym/driver.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <locale>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "nuhsym/coarse.hpp"
#include "nuhsym/cocycle.hpp"
#include "nuhsym/gtransform.hpp"
#include "nuhsym/symbolic.hpp"

namespace fs = std::filesystem;

namespace nuh {

json default_config() {
  return json::parse(R"({
  "seed": null,
  "system": {
    "type": "torus",
    "matrix": [[2, 1], [1, 1]],
    "delta": 0.001,
    "d": 16,
    "a0": 1.9,
    "alpha": 0.01,
    "diagonal": [0.5, 2.0],
    "cubic": 0.0,
    "tol": 1e-10
  },
  "eps": 0.1,
  "chi": "auto",
  "policy": "practical",
  "practical": {
    "c": 2.0,
    "e1": 2.0,
    "e2": 2.0,
    "overlap_kappa": 0.17,
    "overlap_power": 0.5,
    "am1_factor": 0.5,
    "net_spacing": 0.001
  },
  "threads": 1,
  "output_dir": "out",
  "analyze": {"orbits": 1, "window": 64, "band": 8},
  "samples": {"count": 100000, "window": 48, "burn_in": 16},
  "alphabet": {"band": 8, "lattice_radius": 0.05},
  "periodic": {"n_min": 1, "n_max": 5, "budget": 1000000, "dedup_tol": 1e-8, "nodes": 9},
  "shadow": {"path_file": "", "nodes": 33},
  "refine": {"samples": 500, "band": 4, "agree": 2},
  "suspend": {
    "base": "graph",
    "symbols": 2,
    "roof": "random",
    "r_min": 0.5,
    "r_max": 1.5,
    "path_length": 256,
    "steps": 64,
    "tau": 0.37
  }
})");
}

namespace {

[[noreturn]] void bad(const std::string& path, const std::string& what) {
  throw Error(Errc::ConfigError, path + ": " + what);
}

std::string kind(const json& j) {
  if (j.is_null()) return "null";
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  return "object";
}

void overlay(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) bad(path.empty() ? "/" : path, "expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string p = path + "/" + it.key();
    if (!base.contains(it.key())) bad(p, "unknown key");
    json& d = base[it.key()];
    const json& u = it.value();
    if (d.is_object()) {
      overlay(d, u, p);
      continue;
    }
    const std::string kd = kind(d), ku = kind(u);
    bool ok = kd == ku || (kd == "number" && ku == "integer") || d.is_null();
    if (p == "/chi") ok = u.is_number() || (u.is_string() && u.get<std::string>() == "auto");
    if (!ok) bad(p, "expected " + kd + ", got " + ku);
    d = u;
  }
}

double num(const json& cfg, const std::string& ptr) { return cfg.at(json::json_pointer(ptr)).get<double>(); }
long integer(const json& cfg, const std::string& ptr) { return cfg.at(json::json_pointer(ptr)).get<long>(); }
std::string str(const json& cfg, const std::string& ptr) { return cfg.at(json::json_pointer(ptr)).get<std::string>(); }

void range(const json& cfg, const std::string& ptr, double lo, double hi, bool open_lo = false) {
  double v = num(cfg, ptr);
  if (!std::isfinite(v) || v > hi || v < lo || (open_lo && v == lo)) {
    std::ostringstream os;
    os << "must lie in " << (open_lo ? "(" : "[") << lo << ", " << hi << "], got " << v;
    bad(ptr, os.str());
  }
}

void one_of(const json& cfg, const std::string& ptr, std::initializer_list<const char*> xs) {
  std::string v = str(cfg, ptr);
  std::string all;
  for (const char* x : xs) {
    if (v == x) return;
    all += all.empty() ? x : std::string("|") + x;
  }
  bad(ptr, "must be one of " + all + ", got '" + v + "'");
}

Mat int_matrix(const json& a, const std::string& p) {
  if (!a.is_array() || a.empty()) bad(p, "expected a non-empty square array");
  const size_t n = a.size();
  Mat A(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (size_t i = 0; i < n; ++i) {
    if (!a[i].is_array() || a[i].size() != n) bad(p, "expected a square array");
    for (size_t j = 0; j < n; ++j) {
      if (!a[i][j].is_number_integer()) bad(p + "/" + std::to_string(i) + "/" + std::to_string(j), "expected integer");
      A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j].get<double>();
    }
  }
  if (std::abs(std::abs(A.determinant()) - 1.0) > 1e-9) bad(p, "determinant must be +-1");
  return A;
}

}  // namespace

void validate_config(const json& cfg) {
  const json& seed = cfg.at("seed");
  if (seed.is_null()) bad("/seed", "required (set it in the config or pass --seed)");
  if (!seed.is_number_integer() || seed.get<long long>() < 0) bad("/seed", "expected a non-negative integer");
  make_system(cfg.at("system"));
  range(cfg, "/eps", 0, 1, true);
  if (cfg.at("chi").is_number()) range(cfg, "/chi", 0, 50, true);
  one_of(cfg, "/policy", {"paper", "practical"});
  range(cfg, "/practical/c", 0, 1e6, true);
  range(cfg, "/practical/e1", 0, 100);
  range(cfg, "/practical/e2", 0, 100);
  range(cfg, "/practical/overlap_kappa", 0, 1e6, true);
  range(cfg, "/practical/overlap_power", 0, 100, true);
  range(cfg, "/practical/am1_factor", 0, 1, true);
  range(cfg, "/practical/net_spacing", 0, 1e6, true);
  range(cfg, "/threads", 1, 256);
  range(cfg, "/analyze/orbits", 1, 1e6);
  range(cfg, "/analyze/window", 32, 1e6);
  range(cfg, "/analyze/band", 0, num(cfg, "/analyze/window") - 2);
  range(cfg, "/samples/count", 1, 1e9);
  range(cfg, "/alphabet/band", 0, 1e4);
  range(cfg, "/samples/window", num(cfg, "/alphabet/band") + 2, 1e6);
  range(cfg, "/samples/burn_in", 0, 1e6);
  range(cfg, "/alphabet/lattice_radius", 0, 1e6, true);
  range(cfg, "/periodic/n_min", 1, 12);
  range(cfg, "/periodic/n_max", num(cfg, "/periodic/n_min"), 12);
  range(cfg, "/periodic/budget", 1, 1e12);
  range(cfg, "/periodic/dedup_tol", 0, 1, true);
  range(cfg, "/periodic/nodes", 3, 1025);
  range(cfg, "/shadow/nodes", 3, 1025);
  range(cfg, "/refine/samples", 1, 1e9);
  range(cfg, "/refine/band", 1, 1e4);
  range(cfg, "/refine/agree", 1, num(cfg, "/refine/band"));
  one_of(cfg, "/suspend/base", {"graph", "full_shift"});
  range(cfg, "/suspend/symbols", 1, 1e6);
  one_of(cfg, "/suspend/roof", {"constant", "random"});
  range(cfg, "/suspend/r_min", 0, 1e12, true);
  range(cfg, "/suspend/r_max", num(cfg, "/suspend/r_min"), 1e12);
  range(cfg, "/suspend/path_length", 2, 1e8);
  range(cfg, "/suspend/steps", 0, 1e8);
  range(cfg, "/suspend/tau", -1e12, 1e12);
  const double travel = std::abs(num(cfg, "/suspend/tau")) * num(cfg, "/suspend/steps");
  if (travel >= (std::floor(num(cfg, "/suspend/path_length") / 2) - 1) * num(cfg, "/suspend/r_min"))
    bad("/suspend/steps", "total displacement does not fit in half the path");
}

json merged_config(const json& user) {
  json cfg = default_config();
  if (!user.is_null()) overlay(cfg, user, "");
  return cfg;
}

json effective_config(const json& user) {
  json cfg = merged_config(user);
  validate_config(cfg);
  return cfg;
}

std::string config_hash(const json& cfg) {
  json c = cfg;
  c.erase("output_dir");
  c.erase("threads");
  const std::string s = c.dump();
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a(s.data(), s.size());
  return os.str();
}

ModelPtr make_system(const json& sys) {
  json s = default_config()["system"];
  overlay(s, sys, "/system");
  const std::string type = s["type"].get<std::string>();
  std::shared_ptr<SystemModel> m;
  if (type == "torus") {
    m = std::make_shared<TorusAutomorphism>(int_matrix(s["matrix"], "/system/matrix"));
  } else if (type == "perturbed_torus") {
    double delta = s["delta"].get<double>();
    if (!(std::abs(delta) < 0.1)) bad("/system/delta", "must satisfy |delta| < 0.1");
    m = std::make_shared<PerturbedCat>(int_matrix(s["matrix"], "/system/matrix"), delta);
  } else if (type == "diagonal_cubic") {
    const json& d = s["diagonal"];
    if (d.empty()) bad("/system/diagonal", "must be non-empty");
    Vec v(static_cast<Eigen::Index>(d.size()));
    for (size_t i = 0; i < d.size(); ++i) {
      if (!d[i].is_number()) bad("/system/diagonal/" + std::to_string(i), "expected number");
      v(static_cast<Eigen::Index>(i)) = d[i].get<double>();
      if (v(static_cast<Eigen::Index>(i)) == 0 || std::abs(std::abs(v(static_cast<Eigen::Index>(i))) - 1) < 1e-12)
        bad("/system/diagonal/" + std::to_string(i), "entries must be nonzero and off the unit circle");
    }
    m = std::make_shared<DiagonalCubic>(v, s["cubic"].get<double>());
  } else if (type == "viana") {
    if (!s["d"].is_number_integer() || s["d"].get<long>() < 2) bad("/system/d", "expected an integer >= 2");
    double a0 = s["a0"].get<double>(), alpha = s["alpha"].get<double>();
    if (!(a0 > 1 && a0 < 2)) bad("/system/a0", "must lie in (1, 2)");
    if (!(alpha >= 0 && alpha < 0.5)) bad("/system/alpha", "must lie in [0, 0.5)");
    m = std::make_shared<VianaMap>(s["d"].get<int>(), a0, alpha);
  } else {
    bad("/system/type", "must be one of torus|perturbed_torus|diagonal_cubic|viana, got '" + type + "'");
  }
  double tol = s["tol"].get<double>();
  if (!(tol > 0 && tol < 1)) bad("/system/tol", "must lie in (0, 1)");
  m->tol = tol;
  return m;
}

int exit_status(Errc e) {
  switch (e) {
    case Errc::ConfigError:
      return 2;
    case Errc::IoError:
      return 1;
    default:
      return 3;
  }
}

std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os << std::setprecision(17) << x;
  return os.str();
}

namespace {

// ---- deterministic streams

enum Stream : uint64_t { kOrbit = 0, kSample = 1, kSuspend = 2 };

std::mt19937_64 stream_rng(uint64_t seed, uint64_t stream, uint64_t i) {
  std::seed_seq ss{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(stream),
                   static_cast<uint32_t>(i), static_cast<uint32_t>(i >> 32)};
  return std::mt19937_64(ss);
}

double unit(std::mt19937_64& r) { return static_cast<double>(r() >> 11) * 0x1.0p-53; }

Vec random_point(const SystemModel& m, std::mt19937_64& r) {
  Vec x(m.dim());
  for (int i = 0; i < m.dim(); ++i) {
    double P = m.domain().period[static_cast<size_t>(i)];
    x(i) = P > 0 ? P * unit(r) : unit(r) - 0.5;
  }
  return x;
}

OrbitWindow sample_window(const SystemModel& m, uint64_t seed, uint64_t stream, uint64_t i, int half,
                          int burn_in) {
  auto r = stream_rng(seed, stream, i);
  Vec x = random_point(m, r);
  for (int k = 0; k < burn_in; ++k) x = m.step(x);
  return random_window(m, x, half, half, r);
}

std::vector<double> to_std(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

json mat_json(const Mat& A) {
  json a = json::array();
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < A.cols(); ++j) row.push_back(A(i, j));
    a.push_back(row);
  }
  return a;
}

// ---- run context

struct Ctx {
  json cfg;
  std::string hash;
  ModelPtr m;
  ChartParams p;
  uint64_t seed = 0;
  fs::path out;
  RunResult* res = nullptr;

  std::string header() const { return std::string("# nuhsym ") + kVersion + " config=" + hash + "\n"; }

  json stamp() const {
    json j;
    j["version"] = kVersion;
    j["config_hash"] = hash;
    return j;
  }

  void write(const std::string& name, const std::string& body) const {
    std::ofstream f(out / name, std::ios::binary);
    if (!f) throw Error(Errc::IoError, "cannot write " + (out / name).string());
    f << body;
    if (!f) throw Error(Errc::IoError, "write failed: " + (out / name).string());
    res->artifacts.push_back(name);
  }
  void write_json(const std::string& name, const json& j) const { write(name, j.dump(2) + "\n"); }
};

struct Row {
  std::ostringstream os;
  bool first = true;
  Row() { os.imbue(std::locale::classic()); }
  Row& operator<<(double x) { return put(fmt_num(x)); }
  Row& operator<<(long x) { return put(std::to_string(x)); }
  Row& operator<<(int x) { return put(std::to_string(x)); }
  Row& operator<<(const std::string& s) { return put(s); }
  Row& put(const std::string& s) {
    if (!first) os << ',';
    os << s;
    first = false;
    return *this;
  }
  std::string line() const { return os.str() + "\n"; }
};

ChartParams make_params(const json& cfg, const SystemModel& m, double chi) {
  const double eps = num(cfg, "/eps");
  if (str(cfg, "/policy") == "paper") return ChartParams::paper(eps, m.beta, m.a, chi);
  ChartParams p;
  p.eps = eps;
  p.beta = m.beta;
  p.a = m.a;
  p.chi = chi;
  p.policy = SizePolicy::Practical;
  p.c = num(cfg, "/practical/c");
  p.e1 = num(cfg, "/practical/e1");
  p.e2 = num(cfg, "/practical/e2");
  p.overlap_kappa = num(cfg, "/practical/overlap_kappa");
  p.overlap_power = num(cfg, "/practical/overlap_power");
  p.am1_factor = num(cfg, "/practical/am1_factor");
  p.net_spacing = num(cfg, "/practical/net_spacing");
  return p;
}

OrbitWindow orbit_window(const Ctx& c, long o) {
  const int W = static_cast<int>(integer(c.cfg, "/analyze/window"));
  return sample_window(*c.m, c.seed, kOrbit, static_cast<uint64_t>(o), W, 0);
}

// ---- analyze

void cmd_analyze(const Ctx& c) {
  const SystemModel& m = *c.m;
  const long orbits = integer(c.cfg, "/analyze/orbits");
  const int band = static_cast<int>(integer(c.cfg, "/analyze/band"));
  std::string ex = c.header() + "orbit,index,exponent\n";
  json summary = c.stamp();
  summary["chi"] = c.p.chi;
  summary["orbits"] = json::array();
  for (long o = 0; o < orbits; ++o) {
    OrbitWindow w = orbit_window(c, o);
    CocycleFrames fr(m, w, c.p.chi);
    const auto& exps = fr.exponents();
    for (size_t i = 0; i < exps.size(); ++i) {
      Row r;
      r << o << static_cast<long>(i) << exps[i];
      ex += r.line();
    }
    const int dim = m.dim(), ds = fr.ds(), du = fr.du();
    std::string head = "index";
    for (int i = 0; i < dim; ++i) head += ",x_" + std::to_string(i);
    for (int i = 0; i < ds; ++i) head += ",S_" + std::to_string(i);
    for (int i = 0; i < du; ++i) head += ",U_" + std::to_string(i);
    head += ",inv_C_norm,trunc_s,trunc_u,off_block,Ds_norm,Du_min_sv";
    for (const char* nm : {"C", "D", "Es", "Eu"}) {
      int cols = std::string(nm) == "Es" ? ds : std::string(nm) == "Eu" ? du : dim;
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < cols; ++j) head += "," + std::string(nm) + "_" + std::to_string(i) + std::to_string(j);
    }
    std::string ly = c.header() + head + "\n";
    for (int k = -band; k <= band; ++k) {
      LyapunovData d = fr.data_at(k);
      ReducedDerivative rd = fr.reduce_at(k);
      Row r;
      r << k;
      for (int i = 0; i < dim; ++i) r << w.x(k)(i);
      for (int i = 0; i < ds; ++i) r << d.S(i);
      for (int i = 0; i < du; ++i) r << d.U(i);
      r << d.inv_C_norm << d.trunc_s << d.trunc_u << rd.off_block << rd.Ds_norm << rd.Du_min_sv;
      for (const Mat* A : {&d.C, &rd.D, &d.Es, &d.Eu})
        for (Eigen::Index i = 0; i < A->rows(); ++i)
          for (Eigen::Index j = 0; j < A->cols(); ++j) r << (*A)(i, j);
      ly += r.line();
    }
    ChartSequence seq = build_chart_sequence(m, w, c.p, band);
    std::string ch = c.header() + "index,inv_C_norm,rho,Q,q_s,q_u,q,log_Q,log_q\n";
    for (int k = -band; k <= band; ++k) {
      const size_t i = static_cast<size_t>(k + band);
      const PesinChart& pc = seq.charts[i];
      Row r;
      r << k << pc.inv_C_norm << pc.rho << pc.Q(c.p.eps) << std::exp(seq.q.log_qs[i]) << std::exp(seq.q.log_qu[i])
        << std::exp(seq.q.log_q[i]) << level_log(pc.q_level, c.p.eps) << seq.q.log_q[i];
      ch += r.line();
    }
    std::ostringstream sfx;
    sfx << std::setw(3) << std::setfill('0') << o;
    const std::string suffix = sfx.str();
    c.write(std::string("lyapunov_") + suffix + ".csv", ly);
    c.write(std::string("charts_") + suffix + ".csv", ch);
    json jo;
    jo["orbit"] = o;
    jo["seed_point"] = to_std(w.x(0));
    jo["exponents"] = exps;
    jo["ds"] = ds;
    jo["du"] = du;
    jo["splitting_residual"] = fr.split_at(0).residual;
    summary["orbits"].push_back(jo);
  }
  c.write("exponents.csv", ex);
  c.write_json("analyze.json", summary);
}

// ---- pipeline: samples -> alphabet -> graph

struct Pipeline {
  std::vector<Vertex> alphabet;
  AlphabetStats stats;
  long window_failures = 0;
  GpoGraph graph;
  GpoGraph pruned;
};

Pipeline build_pipeline(const Ctx& c, bool with_graph) {
  const SystemModel& m = *c.m;
  const long N = integer(c.cfg, "/samples/count");
  const int W = static_cast<int>(integer(c.cfg, "/samples/window"));
  const int burn = static_cast<int>(integer(c.cfg, "/samples/burn_in"));
  AlphabetOptions ao;
  ao.band = static_cast<int>(integer(c.cfg, "/alphabet/band"));
  ao.lattice.radius = num(c.cfg, "/alphabet/lattice_radius");
  const int T = static_cast<int>(std::min<long>(integer(c.cfg, "/threads"), N));
  std::vector<AlphabetBuilder> builders;
  for (int t = 0; t < T; ++t) builders.emplace_back(m, c.p, ao);
  std::vector<long> failures(static_cast<size_t>(T), 0);
  auto work = [&](int t) {
    const long lo = N * t / T, hi = N * (t + 1) / T;
    for (long i = lo; i < hi; ++i) {
      OrbitWindow w;
      try {
        w = sample_window(m, c.seed, kSample, static_cast<uint64_t>(i), W, burn);
      } catch (const Error&) {
        ++failures[static_cast<size_t>(t)];
        continue;
      }
      builders[static_cast<size_t>(t)].add(w, i);
    }
  };
  if (T == 1) {
    work(0);
  } else {
    std::vector<std::thread> th;
    for (int t = 0; t < T; ++t) th.emplace_back(work, t);
    for (auto& x : th) x.join();
  }
  for (int t = 1; t < T; ++t) builders[0].merge(std::move(builders[static_cast<size_t>(t)]));
  Pipeline pl;
  pl.alphabet = builders[0].finish();
  pl.stats = builders[0].stats();
  for (long f : failures) pl.window_failures += f;
  if (pl.alphabet.empty()) throw Error(Errc::EmptyInput, "every sample was rejected");
  if (with_graph) {
    pl.graph = build_graph(m, pl.alphabet, c.p);
    pl.pruned = prune_relevant(pl.graph);
    if (pl.pruned.size() == 0) throw Error(Errc::EmptyCore, "graph has no cycles");
  }
  return pl;
}

json stats_json(const Pipeline& pl) {
  json s;
  s["samples"] = pl.stats.samples;
  s["window_failures"] = pl.window_failures;
  s["rejected"] = pl.stats.rejected;
  s["not_adapted"] = pl.stats.not_adapted;
  s["cells"] = pl.stats.cells;
  s["dropped_by_net"] = pl.stats.dropped_by_net;
  s["alphabet"] = pl.alphabet.size();
  return s;
}

std::string vertex_header(const SystemModel& m) {
  std::string h = "id,sample,cell";
  for (int i = 0; i < m.dim(); ++i) h += ",x_" + std::to_string(i);
  return h + ",ds,inv_C_norm,rho,q_level,ps,pu,Q\n";
}

std::string vertex_row(const Vertex& v, long id, double eps) {
  const PesinChart& pc = v.chart.chart;
  Row r;
  r << id << v.sample << v.cell.label();
  for (Eigen::Index i = 0; i < pc.x(0).size(); ++i) r << pc.x(0)(i);
  r << pc.ds << pc.inv_C_norm << pc.rho << pc.q_level << v.chart.ps << v.chart.pu << pc.Q(eps);
  return r.line();
}

json vertex_json(const Vertex& v, const GpoGraph& g, size_t i, double eps) {
  const PesinChart& pc = v.chart.chart;
  json j;
  j["id"] = i;
  if (!g.origin.empty()) j["origin"] = g.origin[i];
  j["sample"] = v.sample;
  j["cell"] = v.cell.label();
  j["saturated"] = v.cell.saturated;
  j["centres"] = {to_std(pc.x(-1)), to_std(pc.x(0)), to_std(pc.x(1))};
  j["C"] = {mat_json(pc.C[0]), mat_json(pc.C[1]), mat_json(pc.C[2])};
  j["ds"] = pc.ds;
  j["du"] = pc.du;
  j["inv_C_norm"] = pc.inv_C_norm;
  j["rho"] = pc.rho;
  j["q_level"] = pc.q_level;
  j["Q"] = pc.Q(eps);
  j["ps"] = v.chart.ps;
  j["pu"] = v.chart.pu;
  j["back_branch"] = {pc.back.digit, pc.back.sign};
  j["own_branch"] = {pc.own.digit, pc.own.sign};
  j["core"] = static_cast<bool>(g.core[i]);
  return j;
}

void cmd_alphabet(const Ctx& c) {
  Pipeline pl = build_pipeline(c, false);
  std::string s = c.header() + vertex_header(*c.m);
  for (size_t i = 0; i < pl.alphabet.size(); ++i) s += vertex_row(pl.alphabet[i], static_cast<long>(i), c.p.eps);
  c.write("alphabet.csv", s);
  json j = c.stamp();
  j["stats"] = stats_json(pl);
  c.write_json("alphabet.json", j);
}

void cmd_graph(const Ctx& c) {
  Pipeline pl = build_pipeline(c, true);
  const GpoGraph& g = pl.pruned;
  std::ostringstream dot;
  dot << "// nuhsym " << kVersion << " config=" << c.hash << "\n";
  dot << "digraph gpo {\n";
  for (int i = 0; i < g.size(); ++i)
    dot << "  " << i << " [label=\"" << g.vertices[static_cast<size_t>(i)].cell.label() << "\"];\n";
  for (auto [a, b] : g.edges) dot << "  " << a << " -> " << b << ";\n";
  dot << "}\n";
  c.write("graph.dot", dot.str());
  json j = c.stamp();
  j["stats"] = stats_json(pl);
  j["unpruned"] = {{"vertices", pl.graph.size()}, {"edges", pl.graph.edges.size()}};
  j["vertices"] = json::array();
  for (size_t i = 0; i < g.vertices.size(); ++i) j["vertices"].push_back(vertex_json(g.vertices[i], g, i, c.p.eps));
  j["edges"] = json::array();
  for (auto [a, b] : g.edges) j["edges"].push_back({a, b});
  c.write_json("graph.json", j);
}

// ---- shadow

void cmd_shadow(const Ctx& c) {
  const std::string file = str(c.cfg, "/shadow/path_file");
  if (file.empty()) bad("/shadow/path_file", "required for shadow");
  std::ifstream f(file);
  if (!f) bad("/shadow/path_file", "cannot read '" + file + "'");
  json path;
  try {
    path = json::parse(f);
  } catch (const json::exception& e) {
    bad("/shadow/path_file", std::string("not valid JSON: ") + e.what());
  }
  const SystemModel& m = *c.m;
  ManifoldOptions mo;
  mo.nodes = static_cast<int>(integer(c.cfg, "/shadow/nodes"));
  json rep = c.stamp();
  ShadowResult sr;
  std::vector<DoubleChart> gpo;
  bool periodic = path.value("periodic", false);
  if (path.contains("orbit")) {
    const json& o = path["orbit"];
    if (!o.contains("seed") || !o["seed"].is_array() || static_cast<int>(o["seed"].size()) != m.dim())
      bad("path_file:/orbit/seed", "expected an array of the system dimension");
    const int len = o.value("length", 20);
    if (len < 1) bad("path_file:/orbit/length", "must be >= 1");
    Vec x(m.dim());
    for (int i = 0; i < m.dim(); ++i) x(i) = o["seed"][static_cast<size_t>(i)].get<double>();
    const int band = len / 2;
    const int W = band + static_cast<int>(integer(c.cfg, "/samples/window"));
    auto r = stream_rng(c.seed, kOrbit, 0);
    OrbitWindow w = random_window(m, x, W, W, r);
    ChartSequence seq = build_chart_sequence(m, w, c.p, band);
    gpo = seq.doubles;
    sr = shadow(m, gpo, c.p, mo);
    rep["generator_distance"] = m.dist(sr.window.x(0), w.x(0));
  } else if (path.contains("vertices")) {
    Pipeline pl = build_pipeline(c, true);
    const GpoGraph& g = pl.pruned;
    std::vector<int> ids = path["vertices"].get<std::vector<int>>();
    if (ids.empty()) bad("path_file:/vertices", "empty path");
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= g.size()) bad("path_file:/vertices/" + std::to_string(i), "no such vertex");
      if (i > 0 || periodic) {
        int a = ids[i > 0 ? i - 1 : ids.size() - 1], b = ids[i];
        const auto& o = g.out[static_cast<size_t>(a)];
        if (!std::binary_search(o.begin(), o.end(), b))
          bad("path_file:/vertices/" + std::to_string(i), "not an edge of the graph");
      }
      gpo.push_back(g.vertices[static_cast<size_t>(ids[i])].chart);
    }
    if (periodic) {
      mo.periodic = true;
      sr = shadow_periodic(m, gpo, c.p, mo);
    } else {
      sr = shadow(m, gpo, c.p, mo);
    }
  } else {
    bad("/shadow/path_file", "expects an 'orbit' or a 'vertices' entry");
  }
  std::string s = c.header() + "n";
  for (int i = 0; i < m.dim(); ++i) s += ",x_" + std::to_string(i);
  s += "\n";
  for (int n = -sr.window.nb; n <= sr.window.nf; ++n) {
    Row r;
    r << n;
    for (int i = 0; i < m.dim(); ++i) r << sr.window.x(n)(i);
    s += r.line();
  }
  c.write("shadow.csv", s);
  rep["periodic"] = periodic;
  rep["length"] = gpo.size();
  rep["middle"] = sr.middle;
  rep["chart_point"] = to_std(sr.chart_point);
  rep["s_certificate"] = sr.s_certificate;
  rep["u_certificate"] = sr.u_certificate;
  rep["max_chart_ratio"] = sr.max_chart_ratio;
  c.write_json("shadow.json", rep);
}

// ---- periodic

// |det(A^n - I)| for toral automorphisms, by fraction-free elimination
std::string exact_reference(const SystemModel& m, int n) {
  auto t = dynamic_cast<const TorusAutomorphism*>(&m);
  if (!t) return "";
  const Mat& A = t->matrix();
  const size_t d = static_cast<size_t>(A.rows());
  using I = long long;
  using M = std::vector<std::vector<I>>;
  M P(d, std::vector<I>(d, 0));
  for (size_t i = 0; i < d; ++i) P[i][i] = 1;
  for (int k = 0; k < n; ++k) {
    M Q(d, std::vector<I>(d, 0));
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j < d; ++j)
        for (size_t l = 0; l < d; ++l)
          Q[i][j] += P[i][l] * static_cast<I>(std::llround(A(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j))));
    P = Q;
  }
  for (size_t i = 0; i < d; ++i) P[i][i] -= 1;
  I prev = 1, sign = 1;
  for (size_t k = 0; k + 1 < d; ++k) {
    if (P[k][k] == 0) {
      size_t r = k + 1;
      while (r < d && P[r][k] == 0) ++r;
      if (r == d) return "0";
      std::swap(P[k], P[r]);
      sign = -sign;
    }
    for (size_t i = k + 1; i < d; ++i)
      for (size_t j = k + 1; j < d; ++j) P[i][j] = (P[i][j] * P[k][k] - P[i][k] * P[k][j]) / prev;
    prev = P[k][k];
  }
  I det = sign * P[d - 1][d - 1];
  return std::to_string(det < 0 ? -det : det);
}

void cmd_periodic(const Ctx& c) {
  const SystemModel& m = *c.m;
  Pipeline pl = build_pipeline(c, true);
  const int n0 = static_cast<int>(integer(c.cfg, "/periodic/n_min"));
  const int n1 = static_cast<int>(integer(c.cfg, "/periodic/n_max"));
  PeriodicOptions po;
  po.budget = integer(c.cfg, "/periodic/budget");
  po.dedup_tol = num(c.cfg, "/periodic/dedup_tol");
  po.manifold.nodes = static_cast<int>(integer(c.cfg, "/periodic/nodes"));
  Tms t = Tms::from_graph(pl.pruned);
  std::vector<PeriodicReport> reps;
  std::string tab = c.header() + "n,cycles_found,genuine_orbits,rejected,exact_reference,closed_paths,label\n";
  std::string pts = c.header() + "n,orbit,period,k";
  for (int i = 0; i < m.dim(); ++i) pts += ",x_" + std::to_string(i);
  pts += ",closing_error\n";
  json rj = c.stamp();
  rj["rows"] = json::array();
  // divisor periods feed the point counts, so enumeration always starts at 1
  for (int n = 1; n <= n1; ++n) {
    reps.push_back(enumerate_periodic_points(m, pl.pruned, n, c.p, po));
    if (n < n0) continue;
    std::vector<const PeriodicReport*> v;
    for (auto& r : reps) v.push_back(&r);
    const PeriodicReport& pr = reps.back();
    const long genuine = count_periodic_points(m, v, n, po.dedup_tol);
    const std::string closed = count_closed_paths(t, n).str();
    Row r;
    r << n << pr.cycles_found << genuine << pr.rejected << exact_reference(m, n) << closed
      << std::string(pr.upper_bound_only ? "upper_bound" : "exact");
    tab += r.line();
    for (size_t o = 0; o < pr.orbits.size(); ++o)
      for (size_t k = 0; k < pr.orbits[o].points.size(); ++k) {
        Row q;
        q << n << static_cast<long>(o) << pr.orbits[o].period << static_cast<long>(k);
        for (int i = 0; i < m.dim(); ++i) q << pr.orbits[o].points[k](i);
        q << pr.orbits[o].closing_error;
        pts += q.line();
      }
    json jr;
    jr["n"] = n;
    jr["duplicates"] = pr.duplicates;
    jr["reject_reasons"] = pr.reject_reasons;
    rj["rows"].push_back(jr);
  }
  rj["stats"] = stats_json(pl);
  rj["graph"] = {{"vertices", pl.pruned.size()}, {"edges", pl.pruned.edges.size()}};
  c.write("periodic.csv", tab);
  c.write("periodic_points.csv", pts);
  c.write_json("periodic.json", rj);
}

// ---- entropy

void cmd_entropy(const Ctx& c) {
  Pipeline pl = build_pipeline(c, true);
  Tms t = Tms::from_graph(pl.pruned);
  EntropyReport er = entropy_estimate(t);
  json j = c.stamp();
  j["entropy"] = er.entropy;
  j["largest_component"] = er.largest_component;
  j["largest_component_entropy"] = er.largest_component_entropy;
  j["component_sizes"] = er.component_sizes;
  j["component_entropy"] = er.component_entropy;
  j["iterations"] = er.iterations;
  j["vertices"] = pl.pruned.size();
  j["edges"] = pl.pruned.edges.size();
  if (auto a = dynamic_cast<const TorusAutomorphism*>(c.m.get())) {
    Eigen::EigenSolver<Mat> es(a->matrix());
    double h = 0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) h += std::max(0.0, std::log(std::abs(es.eigenvalues()(i))));
    j["reference"] = h;
  }
  j["stats"] = stats_json(pl);
  c.write_json("entropy.json", j);
}

// ---- refine

struct Codings {
  std::vector<Coding> all;
  std::map<std::pair<long, int>, size_t> by_sample_symbol;
};

void cmd_refine(const Ctx& c) {
  const SystemModel& m = *c.m;
  Pipeline pl = build_pipeline(c, true);
  const GpoGraph& g = pl.pruned;
  const long S = std::min(integer(c.cfg, "/refine/samples"), integer(c.cfg, "/samples/count"));
  const int R = static_cast<int>(integer(c.cfg, "/refine/band"));
  const int agree = static_cast<int>(integer(c.cfg, "/refine/agree"));
  const int W = R + static_cast<int>(integer(c.cfg, "/samples/window"));
  const int burn = static_cast<int>(integer(c.cfg, "/samples/burn_in"));
  long min_level = g.vertices[0].chart.eta_level();
  for (auto& v : g.vertices) min_level = std::min(min_level, v.chart.eta_level());
  const double eta_max = level_value(min_level, c.p.eps);
  CenterGrid grid(m, std::max(overlap_bound(eta_max, eta_max, c.p), 1e-300));
  for (int i = 0; i < g.size(); ++i) grid.insert(g.vertices[static_cast<size_t>(i)].chart.chart.x(0), i);
  auto first_in = [](const std::vector<int>& cand, const std::vector<int>& adj) {
    for (int v : cand)
      if (std::binary_search(adj.begin(), adj.end(), v)) return v;
    return -1;
  };
  Codings cs;
  long coded = 0, skipped = 0;
  for (long i = 0; i < S; ++i) {
    ChartSequence seq;
    try {
      OrbitWindow w = sample_window(m, c.seed, kSample, static_cast<uint64_t>(i), W, burn);
      seq = build_chart_sequence(m, w, c.p, R);
    } catch (const Error&) {
      ++skipped;
      continue;
    }
    std::vector<std::vector<int>> cand(static_cast<size_t>(2 * R + 1));
    for (int k = -R; k <= R; ++k) {
      const DoubleChart& dc = seq.doubles[static_cast<size_t>(k + R)];
      const double ec = level_value(dc.eta_level(), c.p.eps);
      for (int v : grid.near(dc.chart.x(0))) {
        const DoubleChart& vc = g.vertices[static_cast<size_t>(v)].chart;
        if (overlaps(m, vc.chart, level_value(vc.eta_level(), c.p.eps), dc.chart, ec, c.p))
          cand[static_cast<size_t>(k + R)].push_back(v);
      }
    }
    bool any = false;
    for (int v0 : cand[static_cast<size_t>(R)]) {
      std::vector<int> fwd, bwd;
      int cur = v0;
      for (int k = 1; k <= R; ++k) {
        cur = first_in(cand[static_cast<size_t>(R + k)], g.out[static_cast<size_t>(cur)]);
        if (cur < 0) break;
        fwd.push_back(cur);
      }
      cur = v0;
      for (int k = 1; k <= R; ++k) {
        cur = first_in(cand[static_cast<size_t>(R - k)], g.in[static_cast<size_t>(cur)]);
        if (cur < 0) break;
        bwd.push_back(cur);
      }
      Coding cd;
      cd.sample = i;
      cd.symbols.assign(bwd.rbegin(), bwd.rend());
      cd.zero = static_cast<int>(cd.symbols.size());
      cd.symbols.push_back(v0);
      cd.symbols.insert(cd.symbols.end(), fwd.begin(), fwd.end());
      cs.by_sample_symbol[{i, v0}] = cs.all.size();
      cs.all.push_back(std::move(cd));
      any = true;
    }
    if (any) ++coded;
  }
  std::vector<CoverCell> cells = build_cover(cs.all);
  // s-classes: agreement of forward codings over `agree` steps; u-classes: backward
  std::map<std::vector<int>, long> words;
  auto word_class = [&](long sample, int cell, bool forward) -> long {
    const Coding& cd = cs.all[cs.by_sample_symbol.at({sample, cells[static_cast<size_t>(cell)].symbol})];
    std::vector<int> w;
    w.push_back(forward ? 1 : -1);
    for (int k = 0; k <= agree; ++k) {
      int idx = forward ? cd.zero + k : cd.zero - k;
      if (idx < 0 || idx >= static_cast<int>(cd.symbols.size())) return -1 - sample;  // too short: own class
      w.push_back(cd.symbols[static_cast<size_t>(idx)]);
    }
    return words.emplace(w, static_cast<long>(words.size())).first->second;
  };
  auto s_class = [&](long s, int cell) { return word_class(s, cell, true); };
  auto u_class = [&](long s, int cell) { return word_class(s, cell, false); };
  std::vector<RefinedCell> part = refine_cover(cells, s_class, u_class);
  std::vector<int> lf = local_finiteness(cells);
  std::vector<int> aff = affiliation_counts(part, cells);
  json j = c.stamp();
  j["samples"] = S;
  j["samples_coded"] = coded;
  j["samples_skipped"] = skipped;
  j["cover"] = json::array();
  for (size_t i = 0; i < cells.size(); ++i)
    j["cover"].push_back({{"symbol", cells[i].symbol}, {"members", cells[i].members}, {"meets", lf[i]}});
  j["partition"] = json::array();
  for (size_t i = 0; i < part.size(); ++i) {
    std::vector<int> syms;
    for (int ci : part[i].cover) syms.push_back(cells[static_cast<size_t>(ci)].symbol);
    j["partition"].push_back({{"members", part[i].members}, {"cover", syms}, {"affiliated", aff[i]}});
  }
  j["max_local_finiteness"] = lf.empty() ? 0 : *std::max_element(lf.begin(), lf.end());
  j["max_affiliation"] = aff.empty() ? 0 : *std::max_element(aff.begin(), aff.end());
  c.write_json("partition.json", j);
}

// ---- suspend

void cmd_suspend(const Ctx& c) {
  Tms base;
  json j = c.stamp();
  if (str(c.cfg, "/suspend/base") == "graph") {
    Pipeline pl = build_pipeline(c, true);
    base = Tms::from_graph(pl.pruned);
  } else {
    base = Tms::full_shift(static_cast<int>(integer(c.cfg, "/suspend/symbols")));
  }
  auto rng = stream_rng(c.seed, kSuspend, 0);
  const double r0 = num(c.cfg, "/suspend/r_min"), r1 = num(c.cfg, "/suspend/r_max");
  const bool random_roof = str(c.cfg, "/suspend/roof") == "random";
  std::vector<double> roof(static_cast<size_t>(base.n));
  for (auto& r : roof) r = random_roof ? r0 + (r1 - r0) * unit(rng) : r0;
  Suspension s(base, roof);
  const long L = integer(c.cfg, "/suspend/path_length");
  FlowState x;
  x.path.push_back(static_cast<int>(rng() % static_cast<uint64_t>(base.n)));
  for (long k = 1; k < L; ++k) {
    const auto& o = base.out[static_cast<size_t>(x.path.back())];
    if (o.empty()) throw Error(Errc::PathExhausted, "dead end in the base graph", k);
    x.path.push_back(o[rng() % o.size()]);
  }
  x.pos = L / 2;
  x.t = 0.0;
  const long steps = integer(c.cfg, "/suspend/steps");
  const double tau = num(c.cfg, "/suspend/tau");
  std::string body = c.header() + "step,time,pos,symbol,t,direct_pos,direct_t\n";
  FlowState y = x;
  double worst = 0.0;
  for (long k = 0; k <= steps; ++k) {
    if (k > 0) y = suspension_step(s, y, tau);
    FlowState d = suspension_step(s, x, tau * static_cast<double>(k));
    // compare positions along the flow line: sum of roofs plus t
    double gap = 0;
    if (d.pos == y.pos) {
      gap = std::abs(d.t - y.t);
    } else {
      gap = std::numeric_limits<double>::infinity();
    }
    worst = std::max(worst, gap);
    Row r;
    r << k << tau * static_cast<double>(k) << y.pos << y.path[static_cast<size_t>(y.pos)] << y.t << d.pos << d.t;
    body += r.line();
  }
  c.write("suspend.csv", body);
  j["base_vertices"] = base.n;
  j["base_edges"] = base.edge_count();
  j["r_min"] = s.r_min;
  j["r_max"] = s.r_max;
  j["cocycle_defect"] = worst;
  c.write_json("suspend.json", j);
}

}  // namespace

ChartParams chart_params(const json& cfg, const SystemModel& m) {
  double chi;
  if (cfg.at("chi").is_number()) {
    chi = cfg.at("chi").get<double>();
  } else {
    const int W = static_cast<int>(integer(cfg, "/analyze/window"));
    OrbitWindow w = sample_window(m, cfg.at("seed").get<uint64_t>(), kOrbit, 0, W, 0);
    chi = default_chi(lyapunov_exponents(m, w));
  }
  return make_params(cfg, m, chi);
}

RunResult run(const std::string& command, const json& user_config, const std::string& out_dir) {
  RunResult res;
  try {
    Ctx c;
    c.res = &res;
    c.cfg = effective_config(user_config);
    c.hash = config_hash(c.cfg);
    c.seed = c.cfg["seed"].get<uint64_t>();
    c.m = make_system(c.cfg["system"]);
    static const std::set<std::string> known{"analyze", "alphabet", "graph",  "shadow",
                                             "periodic", "entropy", "refine", "suspend"};
    if (!known.count(command)) throw Error(Errc::ConfigError, "unknown command '" + command + "'");
    c.out = out_dir.empty() ? fs::path(c.cfg["output_dir"].get<std::string>()) : fs::path(out_dir);
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + c.out.string() + ": " + ec.message());
    c.p = chart_params(c.cfg, *c.m);
    if (command == "analyze") cmd_analyze(c);
    else if (command == "alphabet") cmd_alphabet(c);
    else if (command == "graph") cmd_graph(c);
    else if (command == "shadow") cmd_shadow(c);
    else if (command == "periodic") cmd_periodic(c);
    else if (command == "entropy") cmd_entropy(c);
    else if (command == "refine") cmd_refine(c);
    else cmd_suspend(c);
  } catch (const Error& e) {
    res.status = exit_status(e.code());
    res.error = static_cast<int>(e.code());
    res.message = e.what();
  } catch (const json::exception& e) {
    res.status = 2;
    res.error = static_cast<int>(Errc::ConfigError);
    res.message = std::string("ConfigError: ") + e.what();
  } catch (const std::exception& e) {
    res.status = 1;
    res.message = e.what();
  }
  return res;
}

}  // namespace nuh
