#include "nuhsym/coarse.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace nuh {

uint64_t fnv1a(const void* data, size_t n, uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

bool CellIndex::operator<(const CellIndex& o) const {
  return std::tie(k, l, a, b, d, j) < std::tie(o.k, o.l, o.a, o.b, o.d, o.j);
}

std::string CellIndex::label() const {
  std::ostringstream os;
  os << "k=" << k[0] << "," << k[1] << "," << k[2] << " l=" << l[0] << "," << l[1] << "," << l[2] << " a=" << a[0]
     << "," << a[1] << "," << a[2] << " b=" << b << " d=" << d << " j=" << j;
  return os.str();
}

int scale_down(double x, bool* sat) {
  if (!(x > 0)) throw Error(Errc::InvalidArgument, "scale of a nonpositive quantity", 0, x);
  long n = static_cast<long>(std::ceil(-std::log(x))) - 1;
  // settle the half-open membership against roundoff
  while (std::exp(static_cast<double>(-n - 1)) > x) ++n;
  while (std::exp(static_cast<double>(-n)) <= x) --n;
  if (n < 0) {
    if (sat) *sat = true;
    return 0;
  }
  return static_cast<int>(n);
}

int scale_up(double x, bool* sat) {
  if (!(x > 0)) throw Error(Errc::InvalidArgument, "scale of a nonpositive quantity", 0, x);
  long n = static_cast<long>(std::floor(std::log(x)));
  while (std::exp(static_cast<double>(n)) > x) --n;
  while (std::exp(static_cast<double>(n + 1)) <= x) ++n;
  if (n < 0) {
    if (sat) *sat = true;
    return 0;
  }
  return static_cast<int>(n);
}

int64_t SpatialLattice::cell_id(const SystemModel& m, const Vec& x) const {
  const int dim = m.dim();
  const double s = 2.0 * radius / std::sqrt(static_cast<double>(dim));
  const auto& per = m.domain().period;
  Vec y = m.wrap(x);
  uint64_t h = 1469598103934665603ULL;
  for (int i = 0; i < dim; ++i) {
    int64_t c;
    if (per[static_cast<size_t>(i)] > 0) {
      const double P = per[static_cast<size_t>(i)];
      int64_t n = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(P / s - 1e-12)));
      c = std::min<int64_t>(n - 1, static_cast<int64_t>(std::floor(y(i) / (P / static_cast<double>(n)))));
    } else {
      c = static_cast<int64_t>(std::floor(y(i) / s));
    }
    h = fnv1a(&c, sizeof c, h);
  }
  return static_cast<int64_t>(h >> 1);
}

CellIndex quantize(const SystemModel& m, const QuantizeInput& in, const SpatialLattice& lat) {
  CellIndex c;
  bool sat = false;
  for (int i = 0; i < 3; ++i) {
    c.k[static_cast<size_t>(i)] = scale_down(in.dist[static_cast<size_t>(i)], &sat);
    c.l[static_cast<size_t>(i)] = scale_up(in.inv_C[static_cast<size_t>(i)], &sat);
    c.a[static_cast<size_t>(i)] = lat.cell_id(m, in.pos[static_cast<size_t>(i)]);
  }
  c.b = scale_down(in.Q, &sat);
  c.d = in.ds;
  c.j = scale_down(in.q, &sat);
  c.saturated = sat;
  return c;
}

// ---- graph containers

void GpoGraph::rebuild_adjacency() {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  out.assign(vertices.size(), {});
  in.assign(vertices.size(), {});
  for (auto [a, b] : edges) {
    out[static_cast<size_t>(a)].push_back(b);
    in[static_cast<size_t>(b)].push_back(a);
  }
  if (core.size() != vertices.size()) core.assign(vertices.size(), false);
  if (origin.size() != vertices.size()) {
    origin.resize(vertices.size());
    for (size_t i = 0; i < origin.size(); ++i) origin[i] = static_cast<int>(i);
  }
}

int GpoGraph::max_out_degree() const {
  size_t r = 0;
  for (auto& o : out) r = std::max(r, o.size());
  return static_cast<int>(r);
}

int GpoGraph::max_in_degree() const {
  size_t r = 0;
  for (auto& o : in) r = std::max(r, o.size());
  return static_cast<int>(r);
}

// ---- alphabet

double net_spacing(const ChartParams& p, int j) {
  if (p.policy == SizePolicy::Paper) return std::exp(-8.0 * (j + 2));
  return p.net_spacing;
}

AlphabetBuilder::AlphabetBuilder(const SystemModel& m, const ChartParams& p, const AlphabetOptions& o)
    : m_(m), p_(p), o_(o) {}

bool AlphabetBuilder::add(const OrbitWindow& w, long sample_id) {
  ++stats_.samples;
  for (int n = -w.nb; n <= w.nf; ++n)
    if (!(m_.singular_distance(w.x(n)) > 0)) {
      ++stats_.not_adapted;
      return false;
    }
  ChartSequence seq;
  try {
    seq = build_chart_sequence(m_, w, p_, o_.band, o_.series);
  } catch (const Error&) {
    ++stats_.rejected;
    return false;
  }
  const size_t c = static_cast<size_t>(o_.band);
  Vertex v;
  v.chart = seq.doubles[c];
  v.sample = sample_id;
  QuantizeInput qi;
  for (int i = 0; i < 3; ++i) {
    qi.dist[static_cast<size_t>(i)] = m_.singular_distance(w.x(i - 1));
    qi.inv_C[static_cast<size_t>(i)] = seq.data[c + static_cast<size_t>(i) - 1].inv_C_norm;
    qi.pos[static_cast<size_t>(i)] = w.x(i - 1);
  }
  qi.Q = v.chart.chart.Q(p_.eps);
  qi.ds = v.chart.chart.ds;
  qi.q = std::exp(seq.q.log_q[c]);
  if (!(qi.Q > 0) || !(qi.q > 0)) {
    ++stats_.rejected;
    return false;
  }
  v.cell = quantize(m_, qi, o_.lattice);
  const Vec& x0 = w.x(0);
  hash_.push_back(fnv1a(x0.data(), sizeof(double) * static_cast<size_t>(x0.size())));
  cand_.push_back(std::move(v));
  return true;
}

void AlphabetBuilder::merge(AlphabetBuilder&& o) {
  cand_.insert(cand_.end(), std::make_move_iterator(o.cand_.begin()), std::make_move_iterator(o.cand_.end()));
  hash_.insert(hash_.end(), o.hash_.begin(), o.hash_.end());
  stats_.samples += o.stats_.samples;
  stats_.rejected += o.stats_.rejected;
  stats_.not_adapted += o.stats_.not_adapted;
  o.cand_.clear();
  o.hash_.clear();
  o.stats_ = AlphabetStats{};
}

std::vector<Vertex> AlphabetBuilder::finish() {
  std::vector<size_t> order(cand_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const CellIndex &ca = cand_[a].cell, &cb = cand_[b].cell;
    if (!(ca == cb)) return ca < cb;
    if (hash_[a] != hash_[b]) return hash_[a] < hash_[b];
    return cand_[a].sample < cand_[b].sample;
  });
  std::vector<Vertex> out;
  size_t cell_start = 0;
  for (size_t i = 0; i < order.size(); ++i) {
    const Vertex& v = cand_[order[i]];
    if (i == 0 || !(v.cell == cand_[order[i - 1]].cell)) {
      cell_start = out.size();
      ++stats_.cells;
    }
    const double spacing = net_spacing(p_, v.cell.j);
    const double lq = level_log(v.chart.chart.q_level, p_.eps);
    bool covered = false;
    for (size_t r = cell_start; r < out.size() && !covered; ++r) {
      const PesinChart& a = out[r].chart.chart;
      const PesinChart& b = v.chart.chart;
      if (std::abs(level_log(a.q_level, p_.eps) - lq) > p_.eps / 3.0 * (1 + 1e-9)) continue;
      double d = m_.dist(a.x(0), b.x(0));
      if (d > spacing) continue;
      if (d + opnorm(a.C[1] - b.C[1]) <= spacing) covered = true;
    }
    if (covered) {
      ++stats_.dropped_by_net;
      continue;
    }
    out.push_back(v);
  }
  cand_.clear();
  hash_.clear();
  return out;
}

std::vector<Vertex> build_alphabet(const SystemModel& m, const std::vector<OrbitWindow>& samples,
                                   const ChartParams& p, const AlphabetOptions& o, AlphabetStats* stats) {
  if (samples.empty()) throw Error(Errc::EmptyInput, "no samples");
  AlphabetBuilder b(m, p, o);
  for (size_t i = 0; i < samples.size(); ++i) b.add(samples[i], static_cast<long>(i));
  auto r = b.finish();
  if (stats) *stats = b.stats();
  if (r.empty()) throw Error(Errc::EmptyInput, "every sample was rejected");
  return r;
}

// ---- edges

CenterGrid::CenterGrid(const SystemModel& m, double h) : m_(m), h_(h) {
  for (double P : m.domain().period) {
    if (P > 0) {
      double c = std::floor(P / h);
      n_.push_back(c > 1e15 ? 0 : std::max<int64_t>(1, static_cast<int64_t>(c)));
    } else {
      n_.push_back(0);
    }
  }
}

std::vector<int64_t> CenterGrid::cell(const Vec& x) const {
  Vec y = m_.wrap(x);
  std::vector<int64_t> c(n_.size());
  for (size_t i = 0; i < n_.size(); ++i) {
    const double yi = y(static_cast<Eigen::Index>(i));
    if (n_[i] > 0) {
      double P = m_.domain().period[i];
      c[i] = std::min<int64_t>(n_[i] - 1, static_cast<int64_t>(std::floor(yi / (P / static_cast<double>(n_[i])))));
    } else {
      c[i] = static_cast<int64_t>(std::floor(yi / h_));
    }
  }
  return c;
}

uint64_t CenterGrid::key(const std::vector<int64_t>& c) const { return fnv1a(c.data(), c.size() * sizeof(int64_t)); }

void CenterGrid::insert(const Vec& x, int id) { buckets_[key(cell(x))].push_back(id); }

std::vector<int> CenterGrid::near(const Vec& x) const {
  const std::vector<int64_t> c0 = cell(x);
  const int dim = static_cast<int>(c0.size());
  long total = 1;
  for (int k = 0; k < dim; ++k) total *= 3;
  std::vector<int> cand;
  std::vector<int64_t> c(c0.size());
  for (long t = 0; t < total; ++t) {
    long r = t;
    for (int k = 0; k < dim; ++k) {
      const size_t ks = static_cast<size_t>(k);
      c[ks] = c0[ks] + r % 3 - 1;
      r /= 3;
      if (n_[ks] > 0) c[ks] = ((c[ks] % n_[ks]) + n_[ks]) % n_[ks];
    }
    auto it = buckets_.find(key(c));
    if (it != buckets_.end()) cand.insert(cand.end(), it->second.begin(), it->second.end());
  }
  std::sort(cand.begin(), cand.end());
  cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
  return cand;
}

GpoGraph build_graph(const SystemModel& m, const std::vector<Vertex>& alphabet, const ChartParams& p) {
  GpoGraph g;
  g.eps = p.eps;
  g.vertices = alphabet;
  if (alphabet.empty()) throw Error(Errc::EmptyInput, "empty alphabet");
  long min_level = alphabet[0].chart.eta_level();
  for (auto& v : alphabet) min_level = std::min(min_level, v.chart.eta_level());
  const double eta_max = level_value(min_level, p.eps);
  CenterGrid grid(m, std::max(overlap_bound(eta_max, eta_max, p), 1e-300));
  for (size_t i = 0; i < alphabet.size(); ++i) grid.insert(alphabet[i].chart.chart.x(0), static_cast<int>(i));
  for (size_t i = 0; i < alphabet.size(); ++i) {
    const DoubleChart& v = alphabet[i].chart;
    for (int j : grid.near(v.chart.x(1)))
      if (edge_exists(m, v, alphabet[static_cast<size_t>(j)].chart, p)) g.edges.emplace_back(static_cast<int>(i), j);
  }
  g.rebuild_adjacency();
  SccResult s = strongly_connected(g.out);
  for (size_t v = 0; v < g.vertices.size(); ++v) g.core[v] = s.nontrivial[static_cast<size_t>(s.comp[v])];
  return g;
}

GpoGraph build_graph_bruteforce(const SystemModel& m, const std::vector<Vertex>& alphabet, const ChartParams& p) {
  GpoGraph g;
  g.eps = p.eps;
  g.vertices = alphabet;
  for (size_t i = 0; i < alphabet.size(); ++i)
    for (size_t j = 0; j < alphabet.size(); ++j)
      if (edge_exists(m, alphabet[i].chart, alphabet[j].chart, p))
        g.edges.emplace_back(static_cast<int>(i), static_cast<int>(j));
  g.rebuild_adjacency();
  SccResult s = strongly_connected(g.out);
  for (size_t v = 0; v < g.vertices.size(); ++v) g.core[v] = s.nontrivial[static_cast<size_t>(s.comp[v])];
  return g;
}

SccResult strongly_connected(const std::vector<std::vector<int>>& out) {
  const int n = static_cast<int>(out.size());
  SccResult r;
  r.comp.assign(static_cast<size_t>(n), -1);
  std::vector<int> idx(static_cast<size_t>(n), -1), low(static_cast<size_t>(n), 0), st;
  std::vector<bool> on(static_cast<size_t>(n), false);
  int counter = 0;
  // iterative Tarjan: (vertex, next edge position)
  std::vector<std::pair<int, size_t>> call;
  for (int s = 0; s < n; ++s) {
    if (idx[static_cast<size_t>(s)] >= 0) continue;
    call.emplace_back(s, 0);
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      const size_t vs = static_cast<size_t>(v);
      if (pos == 0 && idx[vs] < 0) {
        idx[vs] = low[vs] = counter++;
        st.push_back(v);
        on[vs] = true;
      }
      if (pos < out[vs].size()) {
        int w = out[vs][pos++];
        const size_t ws = static_cast<size_t>(w);
        if (idx[ws] < 0) {
          call.emplace_back(w, 0);
        } else if (on[ws]) {
          low[vs] = std::min(low[vs], idx[ws]);
        }
        continue;
      }
      if (low[vs] == idx[vs]) {
        int w;
        do {
          w = st.back();
          st.pop_back();
          on[static_cast<size_t>(w)] = false;
          r.comp[static_cast<size_t>(w)] = r.count;
        } while (w != v);
        ++r.count;
      }
      int done = v;
      call.pop_back();
      if (!call.empty()) {
        size_t ps = static_cast<size_t>(call.back().first);
        low[ps] = std::min(low[ps], low[static_cast<size_t>(done)]);
      }
    }
  }
  r.nontrivial.assign(static_cast<size_t>(r.count), false);
  for (int v = 0; v < n; ++v)
    for (int w : out[static_cast<size_t>(v)])
      if (r.comp[static_cast<size_t>(v)] == r.comp[static_cast<size_t>(w)])
        r.nontrivial[static_cast<size_t>(r.comp[static_cast<size_t>(v)])] = true;
  return r;
}

GpoGraph prune_relevant(const GpoGraph& g) {
  const size_t n = g.vertices.size();
  SccResult s = strongly_connected(g.out);
  std::vector<bool> fwd(n, false), bwd(n, false);
  std::vector<int> q;
  for (size_t v = 0; v < n; ++v)
    if (s.nontrivial[static_cast<size_t>(s.comp[v])]) {
      fwd[v] = bwd[v] = true;
      q.push_back(static_cast<int>(v));
    }
  std::vector<int> q2 = q;
  while (!q.empty()) {
    int v = q.back();
    q.pop_back();
    for (int w : g.out[static_cast<size_t>(v)])
      if (!fwd[static_cast<size_t>(w)]) {
        fwd[static_cast<size_t>(w)] = true;
        q.push_back(w);
      }
  }
  while (!q2.empty()) {
    int v = q2.back();
    q2.pop_back();
    for (int w : g.in[static_cast<size_t>(v)])
      if (!bwd[static_cast<size_t>(w)]) {
        bwd[static_cast<size_t>(w)] = true;
        q2.push_back(w);
      }
  }
  GpoGraph r;
  r.eps = g.eps;
  std::vector<int> map(n, -1);
  for (size_t v = 0; v < n; ++v)
    if (fwd[v] && bwd[v]) {
      map[v] = static_cast<int>(r.vertices.size());
      r.vertices.push_back(g.vertices[v]);
      r.origin.push_back(g.origin.empty() ? static_cast<int>(v) : g.origin[v]);
      r.core.push_back(s.nontrivial[static_cast<size_t>(s.comp[v])]);
    }
  for (auto [a, b] : g.edges)
    if (map[static_cast<size_t>(a)] >= 0 && map[static_cast<size_t>(b)] >= 0)
      r.edges.emplace_back(map[static_cast<size_t>(a)], map[static_cast<size_t>(b)]);
  r.rebuild_adjacency();
  return r;
}

double sufficiency_fraction(const SystemModel& m, const GpoGraph& g, const ChartSequence& seq, const ChartParams& p) {
  if (seq.doubles.empty()) return 1.0;
  long hit = 0;
  for (const auto& c : seq.doubles) {
    const double ec = level_value(c.eta_level(), p.eps);
    for (const auto& v : g.vertices) {
      const double ev = level_value(v.chart.eta_level(), p.eps);
      if (overlaps(m, v.chart.chart, ev, c.chart, ec, p)) {
        ++hit;
        break;
      }
    }
  }
  return static_cast<double>(hit) / static_cast<double>(seq.doubles.size());
}

}  // namespace nuh
