#include <doctest.h>

#include <cmath>
#include <random>

#include "nuhsym/charts.hpp"
#include "oracle_values.hpp"

using namespace nuh;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// pipeline parameters (practical policy)
ChartParams practical() {
  ChartParams p;
  p.eps = 0.1;
  p.chi = 0.5;
  p.c = 2;
  p.overlap_kappa = 0.17;
  p.overlap_power = 0.5;
  p.am1_factor = 0.5;
  return p;
}

ChartSequence cat_sequence(const Vec& seed, const ChartParams& p, int band, uint64_t rs = 1) {
  static auto cat = make_cat_map();
  std::mt19937_64 rng(rs);
  return build_chart_sequence(*cat, random_window(*cat, seed, 48, 48, rng), p, band);
}

}  // namespace

TEST_CASE("delta_epsilon") {
  CHECK(delta_epsilon_n(0.1) == oracle::kDeltaN01);
  CHECK(delta_epsilon(0.1) == doctest::Approx(oracle::kDelta01).epsilon(1e-14));
  CHECK(delta_epsilon_n(oracle::kBoundaryEps) == oracle::kBoundaryN);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(1e-3, 0.999);
  for (int i = 0; i < 100; ++i) {
    double e = U(rng);
    long n = delta_epsilon_n(e);
    CHECK(delta_epsilon(e) < e);
    // the defining inequality
    CHECK(-e * n < std::log(e));
    CHECK(std::log(e) <= -e * (n - 1));
  }
  CHECK_THROWS_AS(delta_epsilon(1.0), Error);
}

TEST_CASE("i_epsilon_floor") {
  CHECK(level_floor_log(std::log(0.5), 0.3) == oracle::kIFloorLevel);
  CHECK(i_epsilon_floor(0.5, 0.3) == doctest::Approx(oracle::kIFloorValue).epsilon(1e-14));
  CHECK(i_epsilon_floor(1.0, 0.3) == 1.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> U(0, 1), E(0.001, 0.9);
  for (int i = 0; i < 1000; ++i) {
    double x = U(rng), e = E(rng);
    if (x == 0) continue;
    double f = i_epsilon_floor(x, e);
    CHECK(f <= x);
    CHECK(f > x * std::exp(-e / 3));
  }
}

TEST_CASE("compute_Q: paper and practical policies") {
  ChartParams pp = ChartParams::paper(0.01, 1.0, 1.0, 0.5);
  QValue q = compute_Q(oracle::kCatS, 1.0, pp);
  CHECK(q.level == oracle::kPaperQLevel);
  CHECK(!q.underflow);
  CHECK(q.value <= oracle::kPaperQTilde);
  CHECK(q.value > oracle::kPaperQTilde * std::exp(-0.01 / 3));

  ChartParams pr;
  pr.eps = 0.01;
  QValue r = compute_Q(oracle::kCatS, 1.0, pr);
  CHECK(r.level == oracle::kPracticalQLevel);
  CHECK(r.value <= oracle::kPracticalQTilde);
  CHECK(r.value > oracle::kPracticalQTilde * std::exp(-0.01 / 3));

  // a chart so degenerate that Q underflows still carries its logarithm
  QValue u = compute_Q(1e9, 1.0, pp);
  CHECK(u.underflow);
  CHECK(u.value == 0.0);
  CHECK(std::isfinite(u.log_value));
}

TEST_CASE("compute_Q: monotone in rho and |C^-1|") {
  ChartParams pr = practical();
  long last = -1;
  for (double rho = 1.0; rho > 1e-6; rho *= 0.7) {
    QValue q = compute_Q(2.0, rho, pr);
    CHECK(q.level >= last);
    last = q.level;
  }
  CHECK(compute_Q(2.0, 1e-6, pr).value < 1e-10);
  last = -1;
  for (double c = std::sqrt(2.0); c < 1e4; c *= 1.3) {
    QValue q = compute_Q(c, 0.5, pr);
    CHECK(q.level >= last);
    last = q.level;
  }
}

TEST_CASE("q_series: constant and alternating Q") {
  QSeries c = q_series(std::vector<double>(9, 0.2), 0.1);
  for (size_t i = 0; i < 9; ++i) {
    CHECK(c.qs()[i] == doctest::Approx(oracle::kQConst).epsilon(1e-13));
    CHECK(c.qu()[i] == doctest::Approx(oracle::kQConst).epsilon(1e-13));
    CHECK(c.q()[i] == doctest::Approx(oracle::kQConst).epsilon(1e-13));
  }
  std::vector<double> alt;
  for (int i = 0; i < 10; ++i) alt.push_back(i % 2 ? 0.1 : 0.2);
  QSeries a = q_series(alt, 0.1);
  // interior 0.2-indices (the right end is closed off with delta Q itself)
  for (size_t i = 0; i + 1 < alt.size(); i += 2) CHECK(a.qs()[i] == doctest::Approx(oracle::kQAlternating).epsilon(1e-13));
}

TEST_CASE("property: q_series greedy equalities and ratio bound") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-8, 0);
  for (int t = 0; t < 200; ++t) {
    const double eps = 0.05 + 0.1 * (t % 5);
    std::vector<double> lQ(40);
    for (double& x : lQ) x = U(rng);
    QSeries s = q_series_log(lQ, eps);
    const double ld = std::log(delta_epsilon(eps));
    for (size_t i = 0; i + 1 < lQ.size(); ++i) {
      CHECK(s.log_qs[i] == std::min(eps + s.log_qs[i + 1], ld + lQ[i]));
      CHECK(s.log_qu[i + 1] == std::min(eps + s.log_qu[i], ld + lQ[i + 1]));
      double r = s.log_q[i + 1] - s.log_q[i];
      CHECK(std::abs(r) <= eps * (1 + 1e-12));
    }
    for (size_t i = 0; i < lQ.size(); ++i) {
      CHECK(s.log_q[i] == std::min(s.log_qs[i], s.log_qu[i]));
      CHECK(s.log_q[i] < std::log(eps) + lQ[i]);
    }
  }
}

TEST_CASE("chart_forward: cat map") {
  auto cat = make_cat_map();
  ChartParams p = practical();
  ChartSequence cs = cat_sequence(v2(0.3141, 0.2718), p, 2);
  const PesinChart& a = cs.charts[2];
  const PesinChart& b = cs.charts[3];
  Vec F = chart_forward(*cat, a, b, v2(0.01, 0));
  CHECK(std::abs(F(0) - oracle::kCatChartForward) < 1e-9);
  CHECK(std::abs(F(1)) < 1e-9);
  CHECK(chart_forward(*cat, a, b, Vec::Zero(2)).norm() < 1e-13);
  // backward map inverts the forward one
  Vec w = v2(0.003, -0.002);
  CHECK((chart_forward(*cat, a, b, chart_backward(*cat, a, b, w)) - w).norm() < 1e-12);
  try {
    chart_forward(*cat, a, b, v2(0, 0.3));
    FAIL("expected DomainEscape");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DomainEscape);
  }
}

TEST_CASE("chart_forward: perturbed cat fixes 0") {
  auto cat = make_cat_map();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  std::mt19937_64 rng(4);
  ChartSequence cs = build_chart_sequence(pc, random_window(pc, v2(0.6, 0.1), 48, 48, rng), practical(), 2);
  CHECK(chart_forward(pc, cs.charts[2], cs.charts[3], Vec::Zero(2)).norm() < 1e-13);
  // d F_0 is the reduced derivative
  Mat J = chart_forward_jac(pc, cs.charts[2], cs.charts[3], Vec::Zero(2));
  CHECK(std::abs(J(0, 1)) < 1e-6);
  CHECK(std::abs(J(1, 0)) < 1e-6);
}

TEST_CASE("decompose_F: linear, perturbed and cubic") {
  auto cat = make_cat_map();
  ChartParams p = practical();
  ChartSequence cs = cat_sequence(v2(0.77, 0.15), p, 2);
  FDecomposition lin = decompose_F(*cat, cs.charts[2], cs.charts[3], GridSpec{0.01, 41}, p);
  // zero up to roundoff of the chart solves
  CHECK(lin.H_C0 < 1e-13);
  CHECK(lin.dH_C0 < 1e-12);
  CHECK(lin.hol < 1e-10);
  CHECK(lin.below_eps);

  // perturbed cat on B[20Q]: paper-sized charts, and practical charts cut to a radius that stays on one
  // sheet of the torus (20Q itself exceeds the torus there)
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  std::mt19937_64 rng(5);
  OrbitWindow pw = random_window(pc, v2(0.25, 0.65), 48, 48, rng);
  ChartParams pe = ChartParams::paper(0.05, 1.0, 1.0, 0.48);
  ChartSequence ps = build_chart_sequence(pc, pw, pe, 2);
  const double R = 20 * ps.charts[2].Q(pe.eps);
  FDecomposition fp = decompose_F(pc, ps.charts[2], ps.charts[3], GridSpec{R, 41}, pe);
  CHECK(R > 0);
  CHECK(fp.H_C0 < 0.05);
  CHECK(fp.dH_C0 < 0.05);
  CHECK(fp.below_eps);
  ChartParams pq;
  pq.eps = 0.05;
  pq.chi = 0.48;
  ChartSequence pqs = build_chart_sequence(pc, pw, pq, 2);
  const double R2 = std::min(20 * pqs.charts[2].Q(pq.eps), 0.05);
  FDecomposition fq = decompose_F(pc, pqs.charts[2], pqs.charts[3], GridSpec{R2, 41}, pq);
  CHECK(fq.H_C0 < 0.05);
  CHECK(fq.dH_C0 < 0.05);

  // v -> diag(2, 1/2) v + 0.01 v^3 at its fixed point; charts are C = I / S there
  Vec dg = v2(2.0, 0.5);
  DiagonalCubic dc(dg, 0.01);
  OrbitWindow w0 = extend_window(dc, Vec::Zero(2), 80, 80, std::vector<BranchId>(80));
  ChartParams pc3 = p;
  pc3.chi = 0.3;
  ChartSequence c3 = build_chart_sequence(dc, w0, pc3, 1);
  CHECK(c3.charts[1].inv_C_norm == doctest::Approx(oracle::kCubicS).epsilon(1e-9));
  FDecomposition fc = decompose_F(dc, c3.charts[1], c3.charts[2], GridSpec{0.1, 41}, pc3);
  CHECK(fc.dH_C0 == doctest::Approx(oracle::kCubicDH).epsilon(1e-6));
  CHECK(fc.H_C0 == doctest::Approx(oracle::kCubicH).epsilon(1e-6));
}

TEST_CASE("overlaps") {
  auto cat = make_cat_map();
  ChartParams pp = ChartParams::paper(0.1, 1.0, 1.0, 0.5);
  ChartSequence cs = cat_sequence(v2(0.31, 0.72), practical(), 2);
  const PesinChart& c = cs.charts[2];
  CHECK(overlaps(*cat, c, 0.01, c, 0.01, pp));
  // eta ratio outside e^{+-eps}
  CHECK(!overlaps(*cat, c, 0.01, c, 0.01 * std::exp(0.2), pp));

  Mat C = c.C[1];
  Vec x = c.x(0);
  CHECK(!overlaps_raw(*cat, x, C, 0.01, cat->wrap(x + v2(0.1, 0)), C, 0.01, pp));

  // bound (eta1 eta2)^4: 1e-16 at eta = 1e-2, 1e-32 at eta = 1e-4
  Mat C1 = 1e-3 * Mat::Identity(2, 2), C2 = C1;
  C2(0, 0) += 1e-18;
  CHECK(opnorm(C1 - C2) > 0);
  CHECK(overlaps_raw(*cat, x, C1, 1e-2, x, C2, 1e-2, pp));
  CHECK(!overlaps_raw(*cat, x, C1, 1e-4, x, C2, 1e-4, pp));
  // different stable dimension never overlaps
  PesinChart d = c;
  d.ds = 0;
  d.du = 2;
  CHECK(!overlaps(*cat, c, 0.01, d, 0.01, pp));
}

TEST_CASE("edge_exists along one orbit") {
  auto cat = make_cat_map();
  ChartParams p = practical();
  ChartSequence cs = cat_sequence(v2(0.123, 0.456), p, 6);
  for (size_t i = 0; i + 1 < cs.doubles.size(); ++i) CHECK(edge_exists(*cat, cs.doubles[i], cs.doubles[i + 1], p));

  DoubleChart v = cs.doubles[3], w = cs.doubles[4];
  DoubleChart bad = v;
  bad.ps += 1;
  CHECK(!edge_exists(*cat, bad, w, p));
  bad = v;
  bad.ps -= 1;
  CHECK(!edge_exists(*cat, bad, w, p));

  ChartSequence far = cat_sequence(v2(0.623, 0.956), p, 6, 9);
  CHECK(!edge_exists(*cat, v, far.doubles[4], p));
}

TEST_CASE("property: edges keep eta within e^{+-eps}") {
  auto cat = make_cat_map();
  ChartParams p = practical();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 30; ++t) {
    ChartSequence cs = cat_sequence(v2(U(rng), U(rng)), p, 6, 100 + t);
    for (size_t i = 0; i + 1 < cs.doubles.size(); ++i) {
      const DoubleChart &v = cs.doubles[i], &w = cs.doubles[i + 1];
      if (!edge_exists(*cat, v, w, p)) continue;
      double r = level_log(v.eta_level(), p.eps) - level_log(w.eta_level(), p.eps);
      CHECK(std::abs(r) <= p.eps * (1 + 1e-12));
      // double chart sizes never exceed delta_eps Q
      CHECK(v.ps >= delta_level(p.eps) + v.chart.q_level);
      CHECK(v.pu >= delta_level(p.eps) + v.chart.q_level);
    }
  }
}

TEST_CASE("property: paper charts satisfy the Q estimates") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0, 1);
  auto cat = make_cat_map();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  VianaMap vi(16, 1.9, 0.01);
  for (int t = 0; t < 60; ++t) {
    const SystemModel* m = t % 3 == 0 ? static_cast<const SystemModel*>(cat.get())
                           : t % 3 == 1 ? static_cast<const SystemModel*>(&pc)
                                        : static_cast<const SystemModel*>(&vi);
    Vec seed = t % 3 == 2 ? v2(U(rng), 3 * U(rng) - 1.5) : v2(U(rng), U(rng));
    OrbitWindow w = random_window(*m, seed, 150, 250, rng);
    double chi = t % 3 == 2 ? default_chi(lyapunov_exponents(*m, w)) : 0.48;
    ChartParams p = ChartParams::paper(0.05, m->beta, m->a, chi);
    ChartSequence cs = build_chart_sequence(*m, w, p, 2);
    for (const PesinChart& c : cs.charts) {
      const double lQ = level_log(c.q_level, p.eps), b = p.beta;
      CHECK(lQ <= 6 / b * std::log(p.eps) + 1e-12);
      CHECK(std::log(c.inv_C_norm) + b / 48 * lQ <= std::log(p.eps) / 8 + 1e-12);
      CHECK(-p.a * std::log(c.rho) + b / 96 * lQ < std::log(p.eps) / 16);
    }
  }
}

TEST_CASE("property: Lipschitz constants of the charts") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> U(0, 1), X(-1, 1);
  auto cat = make_cat_map();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  for (int t = 0; t < 20; ++t) {
    OrbitWindow w = random_window(pc, v2(U(rng), U(rng)), 48, 48, rng);
    ChartSequence cs = build_chart_sequence(pc, w, practical(), 1);
    const PesinChart& c = cs.charts[1];
    const double r = 0.05;
    for (int k = 0; k < 50; ++k) {
      Vec a = r * v2(X(rng), X(rng)), b = r * v2(X(rng), X(rng));
      Vec pa = chart_psi(pc, c, a), pb = chart_psi(pc, c, b);
      double d = pc.dist(pa, pb);
      CHECK(d <= 2 * (a - b).norm());
      Vec ia = chart_psi_inv(pc, c, pa), ib = chart_psi_inv(pc, c, pb);
      CHECK((ia - ib).norm() <= 2 * c.inv_C_norm * d + 1e-15);
    }
  }
}

TEST_CASE("check_nuh_sharp") {
  auto cat = make_cat_map();
  std::mt19937_64 rng(9);
  OrbitWindow w = random_window(*cat, v2(0.4, 0.1), 64, 64, rng);
  NuhSharpReport r = check_nuh_sharp(*cat, w, practical());
  CHECK(r.log_dist_average == 0.0);
  CHECK(r.partial_sum_slope == 0.0);
  CHECK(r.adapted);
  CHECK(r.max_q_forward > 0);

  VianaMap vi(16, 1.9, 0.01);
  OrbitWindow wv = random_window(vi, v2(0.21, 0.4), 10000, 64, rng);
  NuhSharpReport rv = check_nuh_sharp(vi, wv, practical());
  double s = 0;
  for (int n = -wv.nb; n <= wv.nf; ++n) s += std::log(std::abs(wv.x(n)(1)));
  CHECK(rv.log_dist_average == doctest::Approx(s / wv.size()).epsilon(1e-9));
  CHECK(rv.log_dist_average < 0);
  CHECK(std::isfinite(rv.partial_sum_slope));

  OrbitWindow hit;
  hit.nb = hit.nf = 1;
  hit.pts = {v2(0.1, 0.3), v2(0.2, 0.0), v2(0.3, 0.1)};
  hit.br = {BranchId{0, 1}};
  NuhSharpReport rh = check_nuh_sharp(vi, hit, practical());
  CHECK(rh.hits_singular);
  CHECK(!rh.adapted);
}
