#include "nuhsym/gtransform.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nuh {

// ---- grids

AdmissibleGraph::AdmissibleGraph(GraphKind kind_, int d_, int c_, double p_, double eta_, double delta_, int nodes_)
    : kind(kind_), d(d_), c(c_), p(p_), eta(eta_), delta(delta_), nodes(nodes_) {
  if (d < 0 || c < 0 || nodes < 1) throw Error(Errc::InvalidArgument, "bad graph shape");
  size_t n = 1;
  for (int i = 0; i < d; ++i) n *= static_cast<size_t>(nodes);
  values.assign(n, Vec::Zero(c));
}

Vec AdmissibleGraph::node(size_t idx) const {
  Vec v(d);
  const double h = spacing();
  for (int i = 0; i < d; ++i) {
    v(i) = -p + h * static_cast<double>(idx % static_cast<size_t>(nodes));
    idx /= static_cast<size_t>(nodes);
  }
  return v;
}

Vec AdmissibleGraph::eval(const Vec& v) const {
  if (d == 0 || nodes == 1) return values[0];
  const double h = spacing();
  std::vector<size_t> base(static_cast<size_t>(d));
  std::vector<double> frac(static_cast<size_t>(d));
  for (int i = 0; i < d; ++i) {
    double t = (v(i) + p) / h;
    t = std::clamp(t, 0.0, static_cast<double>(nodes - 1));
    size_t k = std::min(static_cast<size_t>(t), static_cast<size_t>(nodes - 2));
    base[static_cast<size_t>(i)] = k;
    frac[static_cast<size_t>(i)] = t - static_cast<double>(k);
  }
  Vec out = Vec::Zero(c);
  const unsigned corners = 1u << d;
  for (unsigned mask = 0; mask < corners; ++mask) {
    double wgt = 1.0;
    size_t idx = 0, stride = 1;
    for (int i = 0; i < d; ++i) {
      bool up = (mask >> i) & 1u;
      double f = frac[static_cast<size_t>(i)];
      wgt *= up ? f : 1.0 - f;
      idx += (base[static_cast<size_t>(i)] + (up ? 1 : 0)) * stride;
      stride *= static_cast<size_t>(nodes);
    }
    if (wgt != 0.0) out += wgt * values[idx];
  }
  return out;
}

Mat AdmissibleGraph::node_derivative(size_t idx) const {
  Mat D = Mat::Zero(c, d);
  if (nodes == 1) return D;
  const double h = spacing();
  size_t stride = 1, rest = idx;
  for (int i = 0; i < d; ++i) {
    size_t k = rest % static_cast<size_t>(nodes);
    rest /= static_cast<size_t>(nodes);
    if (k == 0)
      D.col(i) = (values[idx + stride] - values[idx]) / h;
    else if (k == static_cast<size_t>(nodes - 1))
      D.col(i) = (values[idx] - values[idx - stride]) / h;
    else
      D.col(i) = (values[idx + stride] - values[idx - stride]) / (2 * h);
    stride *= static_cast<size_t>(nodes);
  }
  return D;
}

Mat AdmissibleGraph::d0() const {
  Mat D = Mat::Zero(c, d);
  if (nodes == 1) return D;
  const double h = spacing();
  for (int i = 0; i < d; ++i) {
    Vec e = Vec::Zero(d);
    e(i) = h;
    D.col(i) = (eval(e) - eval(-e)) / (2 * h);
  }
  return D;
}

void AdmissibleGraph::fill(const std::function<Vec(const Vec&)>& f) {
  for (size_t i = 0; i < values.size(); ++i) values[i] = f(node(i));
}

AdmissibleGraph AdmissibleGraph::constant(GraphKind kind, int d, int c, double p, double eta, double delta, int nodes,
                                          const Vec& value) {
  AdmissibleGraph g(kind, d, c, p, eta, delta, nodes);
  for (auto& v : g.values) v = value;
  return g;
}

double c0_distance(const AdmissibleGraph& a, const AdmissibleGraph& b) {
  if (a.values.size() != b.values.size()) throw Error(Errc::InvalidArgument, "graphs on different grids");
  double r = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) r = std::max(r, (a.values[i] - b.values[i]).norm());
  return r;
}

double c1_distance(const AdmissibleGraph& a, const AdmissibleGraph& b) {
  double r = c0_distance(a, b);
  double s = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i)
    s = std::max(s, opnorm(a.node_derivative(i) - b.node_derivative(i)));
  return r + s;
}

// ---- admissibility

double AdmissibilityReport::worst_ratio() const {
  auto ratio = [](double v, double b) { return b > 0 ? v / b : (v > 0 ? std::numeric_limits<double>::infinity() : 0.0); };
  return std::max({ratio(G0, am1_bound), ratio(dG0, am2_bound), ratio(am3, 0.5)});
}

namespace {
double holder_lower_bound(const std::vector<Vec>& pts, const std::vector<Mat>& vals, double expo, double min_sep) {
  double r = 0.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j) {
      double dd = (pts[i] - pts[j]).norm();
      if (dd < min_sep * (1 - 1e-9)) continue;
      double num = opnorm(vals[i] - vals[j]);
      if (num > 0) r = std::max(r, num / std::pow(dd, expo));
    }
  return r;
}
}  // namespace

AdmissibilityReport validate_admissible(const AdmissibleGraph& g, double tol, double am1_factor) {
  AdmissibilityReport r;
  r.am1_bound = am1_factor * g.eta;
  r.am2_bound = 0.5 * std::pow(g.eta, g.delta);
  if (g.c == 0) return r;
  r.G0 = g.eval(Vec::Zero(g.d)).norm();
  if (g.d > 0) {
    r.dG0 = opnorm(g.d0());
    std::vector<Vec> pts;
    std::vector<Mat> ds;
    for (size_t i = 0; i < g.node_count(); ++i) {
      pts.push_back(g.node(i));
      ds.push_back(g.node_derivative(i));
      r.dG_C0 = std::max(r.dG_C0, opnorm(ds.back()));
    }
    r.hol = holder_lower_bound(pts, ds, g.delta, g.spacing());
  }
  r.am3 = r.dG_C0 + r.hol;
  r.am1 = r.G0 <= r.am1_bound + tol;
  r.am2 = r.dG0 <= r.am2_bound + tol;
  r.am3_ok = r.am3 <= 0.5 + tol;
  return r;
}

// ---- contexts

namespace {
Mat dH_numeric(const GraphTransformCtx& ctx, const Vec& z) {
  if (ctx.dH) return ctx.dH(z);
  const int n = ctx.d + ctx.c;
  Mat J(n, n);
  const double h = 1e-6 * std::max(ctx.p, 1e-8);
  for (int i = 0; i < n; ++i) {
    Vec e = Vec::Zero(n);
    e(i) = h;
    J.col(i) = (ctx.H(z + e) - ctx.H(z - e)) / (2 * h);
  }
  return J;
}
}  // namespace

CtxReport check_ctx(const GraphTransformCtx& ctx, int samples) {
  CtxReport r;
  const double e = std::exp(ctx.eps);
  r.gt1 = ctx.p_new <= e * ctx.p * (1 + 1e-12) && ctx.eta_new <= e * ctx.eta * (1 + 1e-12) &&
          ctx.eta <= e * ctx.eta_new * (1 + 1e-12);
  r.D1inv_norm = ctx.d > 0 ? opnorm(ctx.D1.inverse()) : 0.0;
  r.D2_norm = ctx.c > 0 ? opnorm(ctx.D2) : 0.0;
  const double ec = std::exp(-ctx.chi);
  r.gt2 = r.D1inv_norm < ec && r.D2_norm < ec;
  const int n = ctx.d + ctx.c;
  r.H0 = ctx.H(Vec::Zero(n)).norm();
  const double R = 2.0 * ctx.p;
  const int N = std::max(samples, 3);
  long total = 1;
  for (int i = 0; i < n; ++i) total *= N;
  std::vector<Vec> pts;
  std::vector<Mat> ds;
  const double h = 2.0 * R / (N - 1);
  for (long idx = 0; idx < total; ++idx) {
    Vec z(n);
    long t = idx;
    for (int i = 0; i < n; ++i) {
      z(i) = -R + h * static_cast<double>(t % N);
      t /= N;
    }
    if (z.norm() > R) continue;
    Mat J = dH_numeric(ctx, z);
    double nj = opnorm(J);
    r.dH_2p = std::max(r.dH_2p, nj);
    if (z.norm() <= ctx.eta) r.dH_eta = std::max(r.dH_eta, nj);
    pts.push_back(z);
    ds.push_back(J);
  }
  // the eta-ball is usually inside one grid cell; sample its boundary too
  for (int i = 0; i < n; ++i)
    for (int sgn = -1; sgn <= 1; sgn += 2) {
      Vec z = Vec::Zero(n);
      z(i) = sgn * ctx.eta;
      r.dH_eta = std::max(r.dH_eta, opnorm(dH_numeric(ctx, z)));
    }
  r.dH_eta = std::max(r.dH_eta, opnorm(dH_numeric(ctx, Vec::Zero(n))));
  const double del = 1.0 / 3.0;
  r.hol = holder_lower_bound(pts, ds, del, h);
  r.gt3 = r.H0 < ctx.eps * ctx.eta && r.dH_eta < ctx.eps * std::pow(ctx.eta, del) &&
          r.dH_2p < ctx.eps * std::pow(2 * ctx.p, del) && r.hol < ctx.eps;
  return r;
}

InvertResult invert_psi(const GraphTransformCtx& ctx, const AdmissibleGraph& g, const Vec& target, double tol) {
  InvertResult r;
  const int n = ctx.d + ctx.c;
  auto D1lu = ctx.D1.partialPivLu();
  Vec v = D1lu.solve(target);
  Vec z(n);
  for (int it = 1; it <= 200; ++it) {
    z.head(ctx.d) = v;
    z.tail(ctx.c) = g.eval(v);
    Vec h = ctx.H(z);
    Vec vn = D1lu.solve(target - h.head(ctx.d));
    double step = (vn - v).norm();
    v = vn;
    if (!std::isfinite(step)) break;
    if (step < tol) {
      r.iterations = it;
      r.v = v;
      // the graph lives on the cube [-p, p]^d
      if (v.size() > 0 && v.cwiseAbs().maxCoeff() > g.p * (1 + 1e-9))
        throw Error(Errc::OutOfImage, "preimage outside the graph domain", 0, v.cwiseAbs().maxCoeff() / g.p);
      return r;
    }
  }
  throw Error(Errc::NonConvergent, "Psi inversion did not converge");
}

AdmissibleGraph apply_graph_transform(const GraphTransformCtx& ctx, const AdmissibleGraph& g, double tol,
                                      bool validate) {
  if (g.d != ctx.d || g.c != ctx.c) throw Error(Errc::InvalidArgument, "graph and context dimensions differ");
  AdmissibleGraph out(g.kind, ctx.d, ctx.c, ctx.p_new, ctx.eta_new, g.delta, ctx.nodes);
  if (ctx.c == 0) return out;
  const int n = ctx.d + ctx.c;
  Vec z(n);
  for (size_t i = 0; i < out.node_count(); ++i) {
    Vec w = out.node(i);
    Vec v = invert_psi(ctx, g, w, tol).v;
    Vec y = g.eval(v);
    z.head(ctx.d) = v;
    z.tail(ctx.c) = y;
    out.values[i] = ctx.D2 * y + ctx.H(z).tail(ctx.c);
  }
  if (validate) {
    AdmissibilityReport rep = validate_admissible(out, 0.0, ctx.am1_factor);
    if (rep.G0 > 1.1 * rep.am1_bound || rep.dG0 > 1.1 * rep.am2_bound || rep.am3 > 1.1 * 0.5)
      throw Error(Errc::AdmissibilityLost, "transformed graph is not admissible", 0, rep.worst_ratio());
  }
  return out;
}

Intersection intersect_graphs(const AdmissibleGraph& u, const AdmissibleGraph& s, double tol) {
  if (u.d != s.c || u.c != s.d) throw Error(Errc::InvalidArgument, "graph dimensions do not match");
  Intersection r;
  Vec v1 = Vec::Zero(u.d);
  for (int it = 1; it <= 1000; ++it) {
    Vec v2 = u.eval(v1);
    Vec n1 = s.eval(v2);
    double step = (n1 - v1).norm();
    v1 = n1;
    if (step < tol || it == 1000) {
      if (step >= tol) break;
      r.iterations = it;
      r.v1 = v1;
      r.v2 = u.eval(v1);
      r.chart.resize(u.d + s.d);
      r.chart.head(s.d) = r.v2;
      r.chart.tail(u.d) = r.v1;
      return r;
    }
  }
  throw Error(Errc::NonConvergent, "graph intersection did not converge");
}

// ---- chains of charts

namespace {
// permutation between (domain, codomain) ordering and chart (s, u) ordering
Vec to_chart(const Vec& z, GraphKind k, int ds, int du) {
  if (k == GraphKind::S) return z;
  Vec c(ds + du);
  c.head(ds) = z.tail(ds);
  c.tail(du) = z.head(du);
  return c;
}
Vec from_chart(const Vec& c, GraphKind k, int ds, int du) {
  if (k == GraphKind::S) return c;
  Vec z(ds + du);
  z.head(du) = c.tail(du);
  z.tail(ds) = c.head(ds);
  return z;
}
Mat perm_jac(const Mat& J, GraphKind k, int ds, int du) {
  if (k == GraphKind::S) return J;
  const int n = ds + du;
  Mat P = Mat::Zero(n, n);  // z = P c
  for (int i = 0; i < du; ++i) P(i, ds + i) = 1.0;
  for (int i = 0; i < ds; ++i) P(du + i, i) = 1.0;
  return P * J * P.transpose();
}
}  // namespace

GraphTransformCtx edge_ctx(const SystemModel& m, const DoubleChart& v, const DoubleChart& w, GraphKind kind,
                           const ChartParams& par, int nodes) {
  const int ds = v.chart.ds, du = v.chart.du;
  GraphTransformCtx ctx;
  ctx.chi = par.chi;
  ctx.eps = par.eps;
  ctx.am1_factor = par.am1_factor;
  ctx.nodes = nodes;
  const double ev = level_value(v.eta_level(), par.eps), ew = level_value(w.eta_level(), par.eps);
  const SystemModel* mp = &m;
  const PesinChart* a = &v.chart;
  const PesinChart* b = &w.chart;
  Mat J0;
  if (kind == GraphKind::U) {
    ctx.d = du;
    ctx.c = ds;
    ctx.p = v.pu_value(par.eps);
    ctx.p_new = w.pu_value(par.eps);
    ctx.eta = ev;
    ctx.eta_new = ew;
    J0 = perm_jac(chart_forward_jac(m, *a, *b, Vec::Zero(ds + du)), kind, ds, du);
  } else {
    ctx.d = ds;
    ctx.c = du;
    ctx.p = w.ps_value(par.eps);
    ctx.p_new = v.ps_value(par.eps);
    ctx.eta = ew;
    ctx.eta_new = ev;
    J0 = chart_backward_jac(m, *a, *b, Vec::Zero(ds + du));
  }
  ctx.D1 = J0.topLeftCorner(ctx.d, ctx.d);
  ctx.D2 = J0.bottomRightCorner(ctx.c, ctx.c);
  Mat Dblk = Mat::Zero(ds + du, ds + du);
  Dblk.topLeftCorner(ctx.d, ctx.d) = ctx.D1;
  Dblk.bottomRightCorner(ctx.c, ctx.c) = ctx.D2;
  if (kind == GraphKind::U) {
    ctx.H = [mp, a, b, Dblk, ds, du](const Vec& z) {
      Vec c = chart_forward(*mp, *a, *b, to_chart(z, GraphKind::U, ds, du));
      return Vec(from_chart(c, GraphKind::U, ds, du) - Dblk * z);
    };
    ctx.dH = [mp, a, b, Dblk, ds, du](const Vec& z) {
      return Mat(perm_jac(chart_forward_jac(*mp, *a, *b, to_chart(z, GraphKind::U, ds, du)), GraphKind::U, ds, du) -
                 Dblk);
    };
  } else {
    ctx.H = [mp, a, b, Dblk](const Vec& z) { return Vec(chart_backward(*mp, *a, *b, z) - Dblk * z); };
    ctx.dH = [mp, a, b, Dblk](const Vec& z) { return Mat(chart_backward_jac(*mp, *a, *b, z) - Dblk); };
  }
  return ctx;
}

namespace {

AdmissibleGraph seed_graph(GraphKind kind, const DoubleChart& at, const ChartParams& par, int nodes, double offset) {
  const int ds = at.chart.ds, du = at.chart.du;
  const int d = kind == GraphKind::U ? du : ds, c = kind == GraphKind::U ? ds : du;
  const double p = kind == GraphKind::U ? at.pu_value(par.eps) : at.ps_value(par.eps);
  const double eta = level_value(at.eta_level(), par.eps);
  Vec val = Vec::Zero(c);
  if (c > 0) val(0) = offset * par.am1_factor * eta;
  return AdmissibleGraph::constant(kind, d, c, p, eta, par.beta / 3.0, d == 0 ? 1 : nodes, val);
}

AdmissibleGraph step_graph(const SystemModel& m, const DoubleChart& v, const DoubleChart& w, GraphKind kind,
                           const AdmissibleGraph& g, const ChartParams& par, const ManifoldOptions& o) {
  GraphTransformCtx ctx = edge_ctx(m, v, w, kind, par, g.d == 0 ? 1 : o.nodes);
  return apply_graph_transform(ctx, g, 1e-14, o.validate);
}

}  // namespace

ManifoldResult local_manifold(const SystemModel& m, const std::vector<DoubleChart>& chain, GraphKind side,
                              const ChartParams& par, const ManifoldOptions& o) {
  if (chain.empty()) throw Error(Errc::EmptyInput, "empty chart chain");
  const size_t L = chain.size();
  ManifoldResult res;
  if (!o.periodic) {
    const DoubleChart& start = side == GraphKind::U ? chain.front() : chain.back();
    AdmissibleGraph g0 = seed_graph(side, start, par, o.nodes, 0.0);
    AdmissibleGraph g1 = seed_graph(side, start, par, o.nodes, 1.0);
    for (size_t k = 0; k + 1 < L; ++k) {
      if (side == GraphKind::U) {
        g0 = step_graph(m, chain[k], chain[k + 1], side, g0, par, o);
        g1 = step_graph(m, chain[k], chain[k + 1], side, g1, par, o);
      } else {
        size_t j = L - 2 - k;
        g0 = step_graph(m, chain[j], chain[j + 1], side, g0, par, o);
        g1 = step_graph(m, chain[j], chain[j + 1], side, g1, par, o);
      }
      ++res.transforms;
    }
    res.certificate = c0_distance(g0, g1);
    res.graph = std::move(g0);
    return res;
  }
  AdmissibleGraph g = seed_graph(side, chain.front(), par, o.nodes, 0.0);
  res.certificate = std::numeric_limits<double>::infinity();
  while (res.transforms < o.n_iters) {
    AdmissibleGraph prev = g;
    for (size_t k = 0; k < L; ++k) {
      if (side == GraphKind::U) {
        g = step_graph(m, chain[k], chain[(k + 1) % L], side, g, par, o);
      } else {
        size_t j = L - 1 - k;
        g = step_graph(m, chain[j], chain[(j + 1) % L], side, g, par, o);
      }
      ++res.transforms;
    }
    res.certificate = c0_distance(prev, g);
    if (res.certificate < o.tol) break;
  }
  res.graph = std::move(g);
  return res;
}

namespace {

double certify_point(const SystemModel& m, const PesinChart& c, const Vec& x, double eps, long index) {
  Vec v;
  try {
    v = chart_psi_inv(m, c, x);
  } catch (const Error&) {
    throw Error(Errc::ShadowEscape, "orbit point left its chart", index);
  }
  double r = v.norm() / (20.0 * c.Q(eps));
  if (!(r <= 1.0)) throw Error(Errc::ShadowEscape, "orbit point outside Psi(B[20Q])", index, r);
  return r;
}

}  // namespace

ShadowResult shadow(const SystemModel& m, const std::vector<DoubleChart>& gpo, const ChartParams& par,
                    const ManifoldOptions& o) {
  if (gpo.empty()) throw Error(Errc::EmptyInput, "empty gpo");
  const int L = static_cast<int>(gpo.size());
  const int M = L / 2;
  ManifoldOptions oo = o;
  oo.periodic = false;
  std::vector<DoubleChart> back(gpo.begin(), gpo.begin() + M + 1), fwd(gpo.begin() + M, gpo.end());
  ManifoldResult u = local_manifold(m, back, GraphKind::U, par, oo);
  ManifoldResult s = local_manifold(m, fwd, GraphKind::S, par, oo);
  Intersection is = intersect_graphs(u.graph, s.graph, 1e-15);
  ShadowResult r;
  r.middle = M;
  r.chart_point = is.chart;
  r.u_certificate = u.certificate;
  r.s_certificate = s.certificate;
  Vec y = chart_psi(m, gpo[static_cast<size_t>(M)].chart, is.chart);
  std::vector<BranchId> br;
  for (int j = 0; j < M; ++j) br.push_back(gpo[static_cast<size_t>(M - j)].chart.back);
  try {
    r.window = extend_window(m, y, L - 1 - M, M, br);
  } catch (const Error& e) {
    throw Error(Errc::ShadowEscape, std::string("orbit reconstruction failed: ") + e.what(), e.index());
  }
  for (int n = -M; n <= L - 1 - M; ++n)
    r.max_chart_ratio = std::max(r.max_chart_ratio, certify_point(m, gpo[static_cast<size_t>(M + n)].chart,
                                                                  r.window.x(n), par.eps, n));
  return r;
}

ShadowResult shadow_periodic(const SystemModel& m, const std::vector<DoubleChart>& cycle, const ChartParams& par,
                             const ManifoldOptions& o) {
  if (cycle.empty()) throw Error(Errc::EmptyInput, "empty cycle");
  const int n = static_cast<int>(cycle.size());
  ManifoldOptions oo = o;
  oo.periodic = true;
  ManifoldResult u = local_manifold(m, cycle, GraphKind::U, par, oo);
  ManifoldResult s = local_manifold(m, cycle, GraphKind::S, par, oo);
  if (!(u.certificate < o.tol) || !(s.certificate < o.tol))
    throw Error(Errc::NonConvergent, "periodic manifolds did not converge", 0, std::max(u.certificate, s.certificate));
  Intersection is = intersect_graphs(u.graph, s.graph, 1e-15);
  ShadowResult r;
  r.middle = 0;
  r.chart_point = is.chart;
  r.u_certificate = u.certificate;
  r.s_certificate = s.certificate;
  Vec y = chart_psi(m, cycle[0].chart, is.chart);
  std::vector<BranchId> br;
  for (int j = 0; j < n; ++j) br.push_back(cycle[static_cast<size_t>((n - j) % n)].chart.back);
  try {
    r.window = extend_window(m, y, n, n, br);
  } catch (const Error& e) {
    throw Error(Errc::ShadowEscape, std::string("orbit reconstruction failed: ") + e.what(), e.index());
  }
  for (int k = -n; k <= n; ++k)
    r.max_chart_ratio = std::max(
        r.max_chart_ratio,
        certify_point(m, cycle[static_cast<size_t>(((k % n) + n) % n)].chart, r.window.x(k), par.eps, k));
  return r;
}

std::string graph_csv(const AdmissibleGraph& g) {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << "node";
  for (int i = 0; i < g.d; ++i) os << ",v" << i;
  for (int i = 0; i < g.c; ++i) os << ",G" << i;
  os << "\n";
  for (size_t k = 0; k < g.node_count(); ++k) {
    os << k;
    Vec v = g.node(k);
    for (int i = 0; i < g.d; ++i) os << "," << v(i);
    for (int i = 0; i < g.c; ++i) os << "," << g.values[k](i);
    os << "\n";
  }
  return os.str();
}

}  // namespace nuh
