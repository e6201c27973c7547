#include "nuhsym/charts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nuh {

ChartParams ChartParams::paper(double eps, double beta, double a, double chi) {
  ChartParams p;
  p.eps = eps;
  p.beta = beta;
  p.a = a;
  p.chi = chi;
  p.policy = SizePolicy::Paper;
  p.overlap_kappa = 1.0;
  p.overlap_power = 4.0;
  p.am1_factor = 1e-3;
  return p;
}

double level_value(long n, double eps) { return std::exp(level_log(n, eps)); }

long level_floor_log(double logx, double eps) {
  if (logx >= 0.0) return 0;
  long n = static_cast<long>(std::ceil(-3.0 * logx / eps));
  while (n > 0 && level_log(n - 1, eps) <= logx) --n;
  while (level_log(n, eps) > logx) ++n;
  return n;
}

long level_round_log(double logx, double eps) { return std::lround(-3.0 * logx / eps); }

long delta_epsilon_n(double eps) {
  if (!(eps > 0 && eps < 1)) throw Error(Errc::InvalidArgument, "eps must lie in (0,1)", 0, eps);
  // e^{-eps n} < eps <= e^{-eps (n-1)}  <=>  n - 1 <= -ln(eps)/eps < n
  const double le = std::log(eps);
  long n = static_cast<long>(std::floor(-le / eps)) + 1;
  while (!(-eps * n < le)) ++n;
  while (n > 1 && -eps * (n - 1) < le) --n;
  return n;
}

double delta_epsilon(double eps) { return std::exp(-eps * static_cast<double>(delta_epsilon_n(eps))); }

double i_epsilon_floor(double x, double eps) {
  if (!(x > 0 && x <= 1)) throw Error(Errc::InvalidArgument, "I_eps floor needs 0 < x <= 1", 0, x);
  return level_value(level_floor_log(std::log(x), eps), eps);
}

QValue compute_Q(double inv_C_norm, double rho, const ChartParams& p) {
  if (!(inv_C_norm >= std::sqrt(2.0) - 1e-9))
    throw Error(Errc::InvalidArgument, "|C^-1| below sqrt 2", 0, inv_C_norm);
  if (!(rho > 0)) throw Error(Errc::InvalidArgument, "rho must be positive", 0, rho);
  rho = std::min(rho, 1.0);
  double lq;
  if (p.policy == SizePolicy::Paper) {
    lq = 6.0 / p.beta * std::log(p.eps) +
         std::min(-48.0 / p.beta * std::log(inv_C_norm), 96.0 * p.a / p.beta * std::log(rho));
  } else {
    lq = std::log(p.c) + std::min(-p.e1 * std::log(inv_C_norm), p.e2 * std::log(rho));
  }
  lq = std::min(lq, 0.0);
  QValue q;
  q.level = level_floor_log(lq, p.eps);
  q.log_value = level_log(q.level, p.eps);
  q.underflow = q.log_value < std::log(1e-300);
  q.value = q.underflow ? 0.0 : std::exp(q.log_value);
  return q;
}

namespace {
std::vector<double> exp_all(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (size_t i = 0; i < v.size(); ++i) r[i] = std::exp(v[i]);
  return r;
}
}  // namespace

std::vector<double> QSeries::qs() const { return exp_all(log_qs); }
std::vector<double> QSeries::qu() const { return exp_all(log_qu); }
std::vector<double> QSeries::q() const { return exp_all(log_q); }

QSeries q_series_log(const std::vector<double>& logQ, double eps) {
  QSeries r;
  const size_t n = logQ.size();
  const double ld = -eps * static_cast<double>(delta_epsilon_n(eps));
  r.log_qs.resize(n);
  r.log_qu.resize(n);
  r.log_q.resize(n);
  if (n == 0) return r;
  r.log_qs[n - 1] = ld + logQ[n - 1];
  for (size_t i = n - 1; i-- > 0;) r.log_qs[i] = std::min(eps + r.log_qs[i + 1], ld + logQ[i]);
  r.log_qu[0] = ld + logQ[0];
  for (size_t i = 1; i < n; ++i) r.log_qu[i] = std::min(eps + r.log_qu[i - 1], ld + logQ[i]);
  for (size_t i = 0; i < n; ++i) r.log_q[i] = std::min(r.log_qs[i], r.log_qu[i]);
  return r;
}

QSeries q_series(const std::vector<double>& Q, double eps) {
  std::vector<double> l(Q.size());
  for (size_t i = 0; i < Q.size(); ++i) {
    if (!(Q[i] > 0)) throw Error(Errc::InvalidArgument, "Q must be positive", static_cast<long>(i), Q[i]);
    l[i] = std::log(Q[i]);
  }
  return q_series_log(l, eps);
}

// ---- chart maps

namespace {

// displacement with an unambiguous shortest representative
Vec safe_disp(const SystemModel& m, const Vec& a, const Vec& b) {
  Vec d = m.disp(a, b);
  const auto& per = m.domain().period;
  for (size_t i = 0; i < per.size(); ++i)
    if (per[i] > 0 && std::abs(d(static_cast<Eigen::Index>(i))) > 0.25 * per[i])
      throw Error(Errc::DomainEscape, "chart image too far from the centre", static_cast<long>(i),
                  d(static_cast<Eigen::Index>(i)));
  return d;
}

Vec solveC(const Mat& C, const Vec& v) { return C.partialPivLu().solve(v); }

}  // namespace

Vec chart_psi(const SystemModel& m, const PesinChart& c, const Vec& v) { return m.wrap(c.x(0) + c.C[1] * v); }

Vec chart_psi_inv(const SystemModel& m, const PesinChart& c, const Vec& y) {
  return solveC(c.C[1], safe_disp(m, c.x(0), y));
}

Vec chart_forward(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& v) {
  Vec x = src.x(0) + src.C[1] * v;
  if (!m.same_sheet(x, src.x(0))) throw Error(Errc::DomainEscape, "chart domain crosses the singular set");
  if (m.singular_distance(x) <= 0) throw Error(Errc::DomainEscape, "chart point on the singular set");
  return solveC(dst.C[1], safe_disp(m, dst.x(0), m.step(m.wrap(x))));
}

Vec chart_backward(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& w) {
  Vec y = m.wrap(dst.x(0) + dst.C[1] * w);
  Vec x;
  try {
    x = m.inverse_branch(y, src.own);
  } catch (const Error& e) {
    throw Error(Errc::DomainEscape, std::string("inverse branch invalid in the chart: ") + e.what());
  }
  if (!m.same_sheet(x, src.x(0))) throw Error(Errc::DomainEscape, "inverse image changes sheet");
  return solveC(src.C[1], safe_disp(m, src.x(0), x));
}

Mat chart_forward_jac(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& v) {
  Vec x = m.wrap(src.x(0) + src.C[1] * v);
  return dst.C[1].partialPivLu().solve(m.derivative(x) * src.C[1]);
}

Mat chart_backward_jac(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& w) {
  Vec y = m.wrap(dst.x(0) + dst.C[1] * w);
  Vec x = m.inverse_branch(y, src.own);
  // d(g) = df(x)^{-1}
  Mat J = m.derivative(x);
  return src.C[1].partialPivLu().solve(J.partialPivLu().solve(dst.C[1]));
}

FDecomposition decompose_F(const SystemModel& m, const PesinChart& src, const PesinChart& dst,
                           const GridSpec& grid, const ChartParams& p) {
  const int dim = m.dim();
  FDecomposition r;
  r.radius = grid.radius;
  r.D = chart_forward_jac(m, src, dst, Vec::Zero(dim));
  const int ds = src.ds;
  r.Ds = r.D.topLeftCorner(ds, ds);
  r.Du = r.D.bottomRightCorner(dim - ds, dim - ds);
  const int N = std::max(grid.nodes, 2);
  const double h = 2.0 * grid.radius / (N - 1);
  std::vector<Vec> pts;
  std::vector<Mat> dH;
  long total = 1;
  for (int i = 0; i < dim; ++i) total *= N;
  for (long idx = 0; idx < total; ++idx) {
    Vec v(dim);
    long t = idx;
    for (int i = 0; i < dim; ++i) {
      v(i) = -grid.radius + h * static_cast<double>(t % N);
      t /= N;
    }
    if (v.norm() > grid.radius * (1 + 1e-12)) continue;
    Vec F = chart_forward(m, src, dst, v);
    Vec H = F - r.D * v;
    Mat dh = chart_forward_jac(m, src, dst, v) - r.D;
    r.H_C0 = std::max(r.H_C0, H.norm());
    r.dH_C0 = std::max(r.dH_C0, opnorm(dh));
    pts.push_back(v);
    dH.push_back(dh);
  }
  const double ex = p.beta / 2.0;
  for (size_t i = 0; i < pts.size(); ++i)
    for (size_t j = i + 1; j < pts.size(); ++j) {
      double d = (pts[i] - pts[j]).norm();
      if (d < h * (1 - 1e-9)) continue;
      r.hol = std::max(r.hol, opnorm(dH[i] - dH[j]) / std::pow(d, ex));
    }
  r.below_eps = r.H_C0 < p.eps && r.dH_C0 < p.eps && r.hol < p.eps;
  return r;
}

// ---- overlaps and edges

double overlap_bound(double eta1, double eta2, const ChartParams& p) {
  return p.overlap_kappa * std::pow(eta1 * eta2, p.overlap_power);
}

bool overlaps_raw(const SystemModel& m, const Vec& x1, const Mat& C1, double eta1, const Vec& x2,
                  const Mat& C2, double eta2, const ChartParams& p) {
  const double lr = std::log(eta1 / eta2);
  if (std::abs(lr) > p.eps * (1 + 1e-9)) return false;
  if (C1.rows() != C2.rows() || C1.cols() != C2.cols()) return false;
  double d = m.dist(x1, x2);
  double bound = overlap_bound(eta1, eta2, p);
  if (d >= bound) return false;
  return d + opnorm(C1 - C2) < bound;
}

bool overlaps(const SystemModel& m, const PesinChart& c1, double eta1, const PesinChart& c2, double eta2,
              const ChartParams& p) {
  if (c1.ds != c2.ds || c1.du != c2.du) return false;
  return overlaps_raw(m, c1.x(0), c1.C[1], eta1, c2.x(0), c2.C[1], eta2, p);
}

bool gpo1(const SystemModel& m, const DoubleChart& v, const DoubleChart& w, const ChartParams& p) {
  const PesinChart& x = v.chart;
  const PesinChart& y = w.chart;
  if (x.ds != y.ds || x.du != y.du) return false;
  // f^-1(y) must be taken along the branch that reaches x
  if (y.back != x.own) return false;
  const double eq = level_value(w.eta_level(), p.eps);
  const double ep = level_value(v.eta_level(), p.eps);
  return overlaps_raw(m, x.x(1), x.C[2], eq, y.x(0), y.C[1], eq, p) &&
         overlaps_raw(m, y.x(-1), y.C[0], ep, x.x(0), x.C[1], ep, p);
}

bool gpo2(const DoubleChart& v, const DoubleChart& w, const ChartParams& p) {
  const long nd = delta_level(p.eps);
  // levels grow as values shrink: min of values = max of levels; e^eps is 3 levels
  return v.ps == std::max(w.ps - 3, nd + v.chart.q_level) && w.pu == std::max(v.pu - 3, nd + w.chart.q_level);
}

bool edge_exists(const SystemModel& m, const DoubleChart& v, const DoubleChart& w, const ChartParams& p) {
  return gpo2(v, w, p) && gpo1(m, v, w, p);
}

// ---- windows and chart sequences

OrbitWindow sub_window(const SystemModel& m, const OrbitWindow& w, int k, int r) {
  if (k - r < -w.nb || k + r > w.nf) throw Error(Errc::InvalidArgument, "sub-window leaves the window", k);
  OrbitWindow s;
  s.nb = r;
  s.nf = r;
  s.tol = w.tol;
  for (int n = k - r; n <= k + r; ++n) s.pts.push_back(w.x(n));
  for (int n = k - r; n < k; ++n) s.br.push_back(n < 0 ? w.branch(n) : m.branch_of(w.x(n)));
  return s;
}

ChartSequence build_chart_sequence(const SystemModel& m, const OrbitWindow& w, const ChartParams& p, int band,
                                   const SeriesOptions& o) {
  if (band < 0 || band + 2 > w.nb || band + 2 > w.nf) throw Error(Errc::InvalidArgument, "band too wide for window");
  CocycleFrames fr(m, w, p.chi);
  ChartSequence s;
  s.band = band;
  std::vector<LyapunovData> all;
  for (int k = -band - 1; k <= band + 1; ++k) all.push_back(fr.data_at(k, o));
  std::vector<double> logQ;
  for (int k = -band; k <= band; ++k) {
    PesinChart c;
    c.window = sub_window(m, w, k, 1);
    const size_t i = static_cast<size_t>(k + band + 1);
    c.C = {all[i - 1].C, all[i].C, all[i + 1].C};
    c.inv_C_norm = all[i].inv_C_norm;
    c.rho = rho(m, c.window);
    c.ds = fr.ds();
    c.du = fr.du();
    c.back = c.window.branch(-1);
    c.own = m.branch_of(c.x(0));
    QValue q = compute_Q(c.inv_C_norm, c.rho, p);
    c.q_level = q.level;
    logQ.push_back(q.log_value);
    s.charts.push_back(std::move(c));
    s.data.push_back(all[i]);
  }
  s.q = q_series_log(logQ, p.eps);
  for (size_t i = 0; i < s.charts.size(); ++i) {
    DoubleChart d;
    d.chart = s.charts[i];
    d.ps = level_round_log(s.q.log_qs[i], p.eps);
    d.pu = level_round_log(s.q.log_qu[i], p.eps);
    s.doubles.push_back(std::move(d));
  }
  return s;
}

NuhSharpReport check_nuh_sharp(const SystemModel& m, const OrbitWindow& w, const ChartParams& p, int band) {
  NuhSharpReport r;
  std::vector<double> partial;
  double sum = 0.0;
  for (int n = -w.nb; n <= w.nf; ++n) {
    double d = m.singular_distance(w.x(n));
    if (!(d > 0)) {
      r.hits_singular = true;
      r.adapted = false;
      r.log_dist_average = -std::numeric_limits<double>::infinity();
      r.partial_sum_slope = -std::numeric_limits<double>::infinity();
      return r;
    }
    sum += std::log(d);
    partial.push_back(sum);
  }
  const double N = static_cast<double>(partial.size());
  r.log_dist_average = sum / N;
  {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (size_t i = 0; i < partial.size(); ++i) {
      double x = static_cast<double>(i);
      sx += x;
      sy += partial[i];
      sxx += x * x;
      sxy += x * partial[i];
    }
    double den = N * sxx - sx * sx;
    r.partial_sum_slope = den > 0 ? (N * sxy - sx * sy) / den : 0.0;
  }
  band = std::min({band, w.nb - 2, w.nf - 2});
  if (band >= 0) {
    try {
      ChartSequence cs = build_chart_sequence(m, w, p, band);
      auto q = cs.q.q();
      for (int k = -band; k <= band; ++k) {
        double v = q[static_cast<size_t>(k + band)];
        if (k >= 0) r.max_q_forward = std::max(r.max_q_forward, v);
        if (k <= 0) r.max_q_backward = std::max(r.max_q_backward, v);
      }
    } catch (const Error&) {
      // hyperbolicity data unavailable: recurrence proxy stays 0
    }
  }
  return r;
}

}  // namespace nuh
