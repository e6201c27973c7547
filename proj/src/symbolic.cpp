#include "nuhsym/symbolic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <unordered_map>

namespace nuh {

// ---- shifts

Tms Tms::from_graph(const GpoGraph& g) {
  Tms t;
  t.n = g.size();
  t.out = g.out;
  for (auto& o : t.out) std::sort(o.begin(), o.end());
  return t;
}

Tms Tms::from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  Tms t;
  t.n = n;
  t.out.assign(static_cast<size_t>(n), {});
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n) throw Error(Errc::InvalidArgument, "edge endpoint out of range");
    t.out[static_cast<size_t>(a)].push_back(b);
  }
  for (auto& o : t.out) {
    std::sort(o.begin(), o.end());
    o.erase(std::unique(o.begin(), o.end()), o.end());
  }
  return t;
}

Tms Tms::full_shift(int k) {
  std::vector<std::pair<int, int>> e;
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) e.emplace_back(a, b);
  return from_edges(k, e);
}

std::vector<std::vector<int>> Tms::in() const {
  std::vector<std::vector<int>> r(static_cast<size_t>(n));
  for (int a = 0; a < n; ++a)
    for (int b : out[static_cast<size_t>(a)]) r[static_cast<size_t>(b)].push_back(a);
  return r;
}

long Tms::edge_count() const {
  long e = 0;
  for (auto& o : out) e += static_cast<long>(o.size());
  return e;
}

// ---- closed paths

namespace {

using u128 = unsigned __int128;

struct Overflowed {};

inline void add_to(u128& a, u128 b) {
  u128 r = a + b;
  if (r < a) throw Overflowed{};
  a = r;
}
inline u128 mul(u128 a, u128 b) {
  if (a != 0 && b > std::numeric_limits<u128>::max() / a) throw Overflowed{};
  return a * b;
}
inline void add_to(BigCount& a, const BigCount& b) { a += b; }
inline BigCount mul(const BigCount& a, const BigCount& b) { return a * b; }

// counts of walks of length len from s, along adj; result in val (touched lists the support)
template <class T>
void walk_layers(const std::vector<std::vector<int>>& adj, int s, int len, std::vector<T>& val,
                 std::vector<int>& touched, std::vector<T>& tmp, std::vector<int>& tmp_touched,
                 std::vector<char>& mark) {
  for (int v : touched) val[static_cast<size_t>(v)] = 0;
  touched.clear();
  val[static_cast<size_t>(s)] = 1;
  touched.push_back(s);
  for (int step = 0; step < len; ++step) {
    tmp_touched.clear();
    for (int v : touched)
      for (int w : adj[static_cast<size_t>(v)]) {
        const size_t ws = static_cast<size_t>(w);
        if (!mark[ws]) {
          mark[ws] = 1;
          tmp[ws] = 0;
          tmp_touched.push_back(w);
        }
        add_to(tmp[ws], val[static_cast<size_t>(v)]);
      }
    for (int v : touched) val[static_cast<size_t>(v)] = 0;
    touched.clear();
    for (int w : tmp_touched) {
      const size_t ws = static_cast<size_t>(w);
      mark[ws] = 0;
      val[ws] = tmp[ws];
      touched.push_back(w);
    }
  }
}

template <class T>
T trace_power(const Tms& t, int n) {
  const int a = (n + 1) / 2, b = n - a;
  auto in = t.in();
  const size_t V = static_cast<size_t>(t.n);
  std::vector<T> F(V, T(0)), B(V, T(0)), tmp(V, T(0));
  std::vector<int> tf, tb, tt;
  std::vector<char> mark(V, 0);
  T total = 0;
  for (int s = 0; s < t.n; ++s) {
    walk_layers(t.out, s, a, F, tf, tmp, tt, mark);
    walk_layers(in, s, b, B, tb, tmp, tt, mark);
    for (int u : tf) {
      const size_t us = static_cast<size_t>(u);
      if (B[us] != 0) add_to(total, mul(F[us], B[us]));
    }
  }
  return total;
}

BigCount to_big(u128 v) {
  BigCount r = static_cast<uint64_t>(v >> 64);
  r <<= 64;
  r += static_cast<uint64_t>(v);
  return r;
}

}  // namespace

BigCount count_closed_paths(const Tms& t, int n) {
  if (n < 1) throw Error(Errc::InvalidArgument, "path length must be >= 1", n);
  try {
    return to_big(trace_power<u128>(t, n));
  } catch (const Overflowed&) {
    return trace_power<BigCount>(t, n);
  }
}

// ---- simple cycles

CycleEnumeration simple_cycles(const Tms& t, int n, long budget) {
  if (n < 1) throw Error(Errc::InvalidArgument, "cycle length must be >= 1", n);
  CycleEnumeration res;
  const int b = n / 2, a = n - b;
  auto in = t.in();
  std::vector<std::vector<int>> back_by_start(static_cast<size_t>(t.n));
  std::vector<std::vector<int>> back_paths;  // u_0 .. u_b with u_b = s
  std::vector<int> starts;
  std::vector<int> path;
  for (int s = 0; s < t.n && !res.budget_exhausted; ++s) {
    if (n == 1) {
      const auto& o = t.out[static_cast<size_t>(s)];
      if (std::binary_search(o.begin(), o.end(), s)) res.cycles.push_back({s});
      if (static_cast<long>(res.cycles.size()) >= budget) res.budget_exhausted = true;
      continue;
    }
    // backward simple paths of length b ending at s, through vertices > s
    for (int v : starts) back_by_start[static_cast<size_t>(v)].clear();
    starts.clear();
    back_paths.clear();
    {
      std::vector<int> rev{s};
      std::function<void()> rec = [&]() {
        if (static_cast<int>(rev.size()) == b + 1) {
          std::vector<int> p(rev.rbegin(), rev.rend());
          int u0 = p.front();
          if (back_by_start[static_cast<size_t>(u0)].empty()) starts.push_back(u0);
          back_by_start[static_cast<size_t>(u0)].push_back(static_cast<int>(back_paths.size()));
          back_paths.push_back(std::move(p));
          return;
        }
        for (int w : in[static_cast<size_t>(rev.back())]) {
          if (w <= s || std::find(rev.begin(), rev.end(), w) != rev.end()) continue;
          rev.push_back(w);
          rec();
          rev.pop_back();
        }
      };
      rec();
    }
    if (back_paths.empty()) continue;
    // forward simple paths of length a from s, then join
    std::vector<std::vector<int>> found;
    path.assign(1, s);
    std::function<void()> fwd = [&]() {
      if (static_cast<int>(path.size()) == a + 1) {
        int e = path.back();
        for (int id : back_by_start[static_cast<size_t>(e)]) {
          const auto& bp = back_paths[static_cast<size_t>(id)];
          bool ok = true;
          for (size_t i = 1; i + 1 < bp.size() && ok; ++i)
            if (std::find(path.begin(), path.end(), bp[i]) != path.end()) ok = false;
          if (!ok) continue;
          std::vector<int> c = path;
          for (size_t i = 1; i + 1 < bp.size(); ++i) c.push_back(bp[i]);
          found.push_back(std::move(c));
        }
        return;
      }
      for (int w : t.out[static_cast<size_t>(path.back())]) {
        if (w <= s || std::find(path.begin(), path.end(), w) != path.end()) continue;
        path.push_back(w);
        fwd();
        path.pop_back();
      }
    };
    fwd();
    std::sort(found.begin(), found.end());
    for (auto& c : found) {
      if (static_cast<long>(res.cycles.size()) >= budget) {
        res.budget_exhausted = true;
        break;
      }
      res.cycles.push_back(std::move(c));
    }
  }
  return res;
}

// ---- periodic orbits

namespace {

struct PointIndex {
  const SystemModel& m;
  double cell;
  std::unordered_map<uint64_t, std::vector<std::pair<Vec, int>>> buckets;

  PointIndex(const SystemModel& m_, double tol) : m(m_), cell(std::max(tol, 1e-12) * 4) {}
  std::vector<int64_t> key_of(const Vec& x) const {
    Vec y = m.wrap(x);
    std::vector<int64_t> k(static_cast<size_t>(y.size()));
    for (Eigen::Index i = 0; i < y.size(); ++i) k[static_cast<size_t>(i)] = static_cast<int64_t>(std::floor(y(i) / cell));
    return k;
  }
  static uint64_t hash(const std::vector<int64_t>& k) { return fnv1a(k.data(), k.size() * sizeof(int64_t)); }
  // id of a stored point within tol, or -1
  int find(const Vec& x, double tol) const {
    auto k = key_of(x);
    const int dim = static_cast<int>(k.size());
    long total = 1;
    for (int i = 0; i < dim; ++i) total *= 3;
    const auto& per = m.domain().period;
    for (long t = 0; t < total; ++t) {
      auto c = k;
      long r = t;
      for (int i = 0; i < dim; ++i) {
        c[static_cast<size_t>(i)] += r % 3 - 1;
        r /= 3;
        if (per[static_cast<size_t>(i)] > 0) {
          int64_t n = static_cast<int64_t>(std::floor(per[static_cast<size_t>(i)] / cell));
          if (n > 0) c[static_cast<size_t>(i)] = ((c[static_cast<size_t>(i)] % n) + n) % n;
        }
      }
      auto it = buckets.find(hash(c));
      if (it == buckets.end()) continue;
      for (auto& [p, id] : it->second)
        if (m.dist(p, x) < tol) return id;
    }
    return -1;
  }
  void insert(const Vec& x, int id) { buckets[hash(key_of(x))].emplace_back(m.wrap(x), id); }
};

}  // namespace

PeriodicReport enumerate_periodic_points(const SystemModel& m, const GpoGraph& g, int n, const ChartParams& p,
                                         const PeriodicOptions& o) {
  PeriodicReport rep;
  rep.n = n;
  Tms t = Tms::from_graph(g);
  CycleEnumeration ce = simple_cycles(t, n, o.budget);
  rep.cycles_found = static_cast<long>(ce.cycles.size());
  rep.upper_bound_only = ce.budget_exhausted;
  PointIndex index(m, o.dedup_tol);
  std::vector<DoubleChart> chain;
  for (const auto& cyc : ce.cycles) {
    chain.clear();
    for (int v : cyc) chain.push_back(g.vertices[static_cast<size_t>(v)].chart);
    ShadowResult sr;
    try {
      sr = shadow_periodic(m, chain, p, o.manifold);
    } catch (const Error& e) {
      ++rep.rejected;
      ++rep.reject_reasons[errc_name(e.code())];
      continue;
    }
    const Vec& y = sr.window.x(0);
    double closing = m.dist(sr.window.x(n), y);
    if (!(closing < o.dedup_tol)) {
      ++rep.rejected;
      ++rep.reject_reasons["NotClosed"];
      continue;
    }
    int period = n;
    for (int d = 1; d < n; ++d)
      if (n % d == 0 && m.dist(sr.window.x(d), y) < o.dedup_tol) {
        period = d;
        break;
      }
    if (index.find(y, o.dedup_tol) >= 0) {
      ++rep.duplicates;
      continue;
    }
    PeriodicOrbit orb;
    orb.period = period;
    orb.closing_error = closing;
    orb.cycle = cyc;
    for (int k = 0; k < period; ++k) orb.points.push_back(sr.window.x(k));
    const int id = static_cast<int>(rep.orbits.size());
    for (auto& q : orb.points) index.insert(q, id);
    rep.orbits.push_back(std::move(orb));
  }
  return rep;
}

long count_periodic_points(const SystemModel& m, const std::vector<const PeriodicReport*>& reports, int n,
                           double tol) {
  PointIndex index(m, tol);
  long count = 0;
  for (const PeriodicReport* r : reports)
    for (const auto& orb : r->orbits) {
      if (n % orb.period != 0) continue;
      for (const auto& q : orb.points) {
        if (index.find(q, tol) >= 0) continue;
        index.insert(q, 0);
        ++count;
      }
    }
  return count;
}

// ---- entropy

double spectral_radius(const Tms& t, const std::vector<int>& vertices, double tol, int* iterations) {
  // power iteration on A + I restricted to the vertex set; the shift removes periodicity
  const size_t k = vertices.size();
  if (k == 0) return 0.0;
  std::unordered_map<int, int> local;
  for (size_t i = 0; i < k; ++i) local[vertices[i]] = static_cast<int>(i);
  std::vector<std::vector<int>> adj(k);
  for (size_t i = 0; i < k; ++i)
    for (int w : t.out[static_cast<size_t>(vertices[i])]) {
      auto it = local.find(w);
      if (it != local.end()) adj[i].push_back(it->second);
    }
  std::vector<double> x(k, 1.0 / static_cast<double>(k)), y(k);
  double lam = 0.0;
  int it = 0;
  for (it = 1; it <= 200000; ++it) {
    for (size_t i = 0; i < k; ++i) y[i] = x[i];
    for (size_t i = 0; i < k; ++i)
      for (int w : adj[i]) y[static_cast<size_t>(w)] += x[i];
    double s = 0.0;
    for (double v : y) s += v;
    // Collatz-Wielandt bounds on the shifted matrix
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (size_t i = 0; i < k; ++i) {
      if (x[i] <= 0) continue;
      double r = y[i] / x[i];
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    double prev = lam;
    lam = s;  // x sums to 1
    for (size_t i = 0; i < k; ++i) x[i] = y[i] / s;
    if (hi - lo < tol || (it > 50 && std::abs(lam - prev) < 1e-3 * tol)) break;
  }
  if (iterations) *iterations = it;
  return lam - 1.0;
}

EntropyReport entropy_estimate(const Tms& t, double tol) {
  SccResult s = strongly_connected(t.out);
  std::vector<std::vector<int>> members(static_cast<size_t>(s.count));
  for (int v = 0; v < t.n; ++v) members[static_cast<size_t>(s.comp[static_cast<size_t>(v)])].push_back(v);
  EntropyReport r;
  bool any = false;
  size_t best_size = 0;
  for (int c = 0; c < s.count; ++c) {
    if (!s.nontrivial[static_cast<size_t>(c)]) continue;
    int its = 0;
    double rho = spectral_radius(t, members[static_cast<size_t>(c)], tol, &its);
    double h = std::log(std::max(rho, 1.0));
    r.iterations = std::max(r.iterations, its);
    r.component_sizes.push_back(static_cast<int>(members[static_cast<size_t>(c)].size()));
    r.component_entropy.push_back(h);
    if (!any || h > r.entropy) r.entropy = h;
    if (!any || members[static_cast<size_t>(c)].size() > best_size) {
      best_size = members[static_cast<size_t>(c)].size();
      r.largest_component = static_cast<int>(r.component_sizes.size()) - 1;
      r.largest_component_entropy = h;
    }
    any = true;
  }
  if (!any) throw Error(Errc::EmptyCore, "no strongly connected component with an edge");
  return r;
}

// ---- Markov cover

std::vector<CoverCell> build_cover(const std::vector<Coding>& codings) {
  std::map<int, std::set<long>> z;
  for (const auto& c : codings) {
    if (c.zero < 0 || c.zero >= static_cast<int>(c.symbols.size()))
      throw Error(Errc::InvalidArgument, "coding has no time-0 symbol", c.sample);
    z[c.symbols[static_cast<size_t>(c.zero)]].insert(c.sample);
  }
  std::vector<CoverCell> cells;
  for (auto& [sym, mem] : z) cells.push_back(CoverCell{sym, std::vector<long>(mem.begin(), mem.end())});
  return cells;
}

namespace {
bool meets(const std::vector<long>& a, const std::vector<long>& b) {
  size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return true;
    if (a[i] < b[j])
      ++i;
    else
      ++j;
  }
  return false;
}
}  // namespace

std::vector<int> local_finiteness(const std::vector<CoverCell>& cells) {
  std::map<long, std::vector<int>> by_sample;
  for (size_t i = 0; i < cells.size(); ++i)
    for (long s : cells[i].members) by_sample[s].push_back(static_cast<int>(i));
  std::vector<std::set<int>> nb(cells.size());
  for (auto& [s, cs] : by_sample)
    for (int a : cs)
      for (int b : cs) nb[static_cast<size_t>(a)].insert(b);
  std::vector<int> r;
  for (auto& s : nb) r.push_back(static_cast<int>(s.size()));
  return r;
}

std::vector<RefinedCell> refine_cover(const std::vector<CoverCell>& cells, const MembershipOracle& s_class,
                                      const MembershipOracle& u_class) {
  const int nc = static_cast<int>(cells.size());
  std::map<long, std::vector<int>> by_sample;
  for (int i = 0; i < nc; ++i)
    for (long s : cells[static_cast<size_t>(i)].members) by_sample[s].push_back(i);
  // for intersecting pairs (i, j): the s/u classes (inside Z_i) met by Z_i cap Z_j
  std::map<std::pair<int, int>, std::pair<std::set<long>, std::set<long>>> meet;
  for (auto& [s, cs] : by_sample)
    for (int i : cs)
      for (int j : cs)
        if (i != j) {
          auto& e = meet[{i, j}];
          e.first.insert(s_class(s, i));
          e.second.insert(u_class(s, i));
        }
  std::vector<std::set<int>> partners(static_cast<size_t>(nc));
  for (auto& [ij, e] : meet) partners[static_cast<size_t>(ij.first)].insert(ij.second);
  // signature: membership plus the T_ij^{alpha beta} type for every intersecting pair
  std::map<std::vector<long>, std::vector<long>> groups;
  std::map<std::vector<long>, std::vector<int>> cover_of;
  for (auto& [s, cs] : by_sample) {
    std::vector<long> sig;
    for (int i : cs) {
      sig.push_back(-1 - i);
      for (int j : partners[static_cast<size_t>(i)]) {
        const auto& e = meet[{i, j}];
        long a = e.first.count(s_class(s, i)) ? 1 : 0;
        long b = e.second.count(u_class(s, i)) ? 1 : 0;
        sig.push_back((static_cast<long>(j) << 2) | (a << 1) | b);
      }
    }
    groups[sig].push_back(s);
    cover_of[sig] = cs;
  }
  std::vector<RefinedCell> out;
  for (auto& [sig, mem] : groups) out.push_back(RefinedCell{mem, cover_of[sig]});
  std::sort(out.begin(), out.end(), [](const RefinedCell& a, const RefinedCell& b) { return a.members < b.members; });
  return out;
}

bool affiliated(const RefinedCell& r1, const RefinedCell& r2, const std::vector<CoverCell>& cells) {
  for (int i : r1.cover)
    for (int j : r2.cover)
      if (i == j || meets(cells[static_cast<size_t>(i)].members, cells[static_cast<size_t>(j)].members)) return true;
  return false;
}

std::vector<int> affiliation_counts(const std::vector<RefinedCell>& part, const std::vector<CoverCell>& cells) {
  std::vector<int> r(part.size(), 0);
  for (size_t a = 0; a < part.size(); ++a)
    for (size_t b = 0; b < part.size(); ++b)
      if (affiliated(part[a], part[b], cells)) ++r[a];
  return r;
}

// ---- suspension

Suspension::Suspension(Tms t, std::vector<double> r) : base(std::move(t)), roof(std::move(r)) {
  if (static_cast<int>(roof.size()) != base.n) throw Error(Errc::InvalidArgument, "one roof value per vertex");
  if (roof.empty()) throw Error(Errc::EmptyInput, "empty base");
  r_min = *std::min_element(roof.begin(), roof.end());
  r_max = *std::max_element(roof.begin(), roof.end());
  if (!(r_min > 0) || !std::isfinite(r_max)) throw Error(Errc::InvalidArgument, "roof must be positive and bounded");
}

FlowState suspension_step(const Suspension& s, const FlowState& x, double tau) {
  const long L = static_cast<long>(x.path.size());
  if (x.pos < 0 || x.pos >= L) throw Error(Errc::InvalidArgument, "position outside the path", x.pos);
  auto r = [&](long i) {
    int v = x.path[static_cast<size_t>(i)];
    if (v < 0 || v >= s.base.n) throw Error(Errc::InvalidArgument, "symbol outside the base", i);
    return s.roof[static_cast<size_t>(v)];
  };
  auto check_edge = [&](long i) {
    const auto& o = s.base.out[static_cast<size_t>(x.path[static_cast<size_t>(i)])];
    if (!std::binary_search(o.begin(), o.end(), x.path[static_cast<size_t>(i + 1)]))
      throw Error(Errc::InvalidArgument, "path uses a missing edge", i);
  };
  if (!(x.t >= 0 && x.t < r(x.pos))) throw Error(Errc::InvalidArgument, "t outside [0, r)", x.pos, x.t);
  FlowState y = x;
  // t + tau - r_n with r_n the n-th Birkhoff sum of the roof
  double u = x.t + tau;
  long pos = x.pos;
  while (u >= r(pos)) {
    u -= r(pos);
    if (pos + 1 >= L) throw Error(Errc::PathExhausted, "path too short for the displacement", pos + 1);
    check_edge(pos);
    ++pos;
  }
  while (u < 0) {
    if (pos - 1 < 0) throw Error(Errc::PathExhausted, "path too short for the displacement", pos - 1);
    check_edge(pos - 1);
    --pos;
    u += r(pos);
  }
  // roundoff can land exactly on the roof
  if (u >= r(pos)) u = std::nextafter(r(pos), 0.0);
  y.pos = pos;
  y.t = u;
  return y;
}

}  // namespace nuh
