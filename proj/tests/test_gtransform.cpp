#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "nuhsym/gtransform.hpp"
#include "oracle_values.hpp"

using namespace nuh;

namespace {

Vec v1(double a) {
  Vec v(1);
  v << a;
  return v;
}
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

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

// 1+1 dimensional context z -> diag(d1, d2) z + H(z)
GraphTransformCtx linear_ctx(double d1, double d2, double p, double eta) {
  GraphTransformCtx c;
  c.d = c.c = 1;
  c.D1 = Mat::Constant(1, 1, d1);
  c.D2 = Mat::Constant(1, 1, d2);
  c.H = [](const Vec& z) { return Vec(Vec::Zero(z.size())); };
  c.p = c.p_new = p;
  c.eta = c.eta_new = eta;
  return c;
}

// small smooth nonlinearity inside the GT regime for eps = 0.05, chi = 0.6
GraphTransformCtx nonlinear_ctx() {
  GraphTransformCtx c = linear_ctx(2.0, 0.5, 0.1, 0.1);
  c.chi = 0.6;
  c.eps = 0.05;
  c.H = [](const Vec& z) { return v2(1e-6 + 0.02 * z(0) * z(1), 2e-6 + 0.02 * z(0) * z(0)); };
  c.dH = [](const Vec& z) {
    Mat J(2, 2);
    J << 0.02 * z(1), 0.02 * z(0), 0.04 * z(0), 0.0;
    return J;
  };
  return c;
}

AdmissibleGraph line(GraphKind k, double p, double eta, double a, double b, int nodes = 33) {
  AdmissibleGraph g(k, 1, 1, p, eta, 1.0 / 3.0, nodes);
  g.fill([&](const Vec& v) { return v1(a + b * v(0)); });
  return g;
}

// random admissible 1d graph: small constant, small slope and a smooth bump
AdmissibleGraph random_graph(GraphKind k, double p, double eta, std::mt19937_64& rng, int nodes = 33) {
  std::uniform_real_distribution<double> U(-1, 1);
  double a = 5e-5 * U(rng) * eta / 0.1, b = 0.1 * U(rng), w = 0.5 * U(rng);
  AdmissibleGraph g(k, 1, 1, p, eta, 1.0 / 3.0, nodes);
  g.fill([&](const Vec& v) { return v1(a + b * v(0) + 0.02 * w * std::sin(5 * v(0))); });
  return g;
}

ModelPtr cat_ptr() { return make_cat_map(); }

ChartSequence sequence(const SystemModel& m, const Vec& seed, int band, uint64_t rs) {
  std::mt19937_64 rng(rs);
  return build_chart_sequence(m, random_window(m, seed, 48, 48, rng), practical(), band);
}

}  // namespace

TEST_CASE("validate_admissible: zero, steep and AM2 examples") {
  const double eta = 0.1;
  AdmissibleGraph z(GraphKind::U, 1, 1, eta, eta, 1.0 / 3.0, 33);
  AdmissibilityReport r = validate_admissible(z, 0.0);
  CHECK(r.ok());
  CHECK(r.G0 == 0.0);
  CHECK(r.dG0 == 0.0);
  CHECK(r.am3 == 0.0);

  AdmissibleGraph steep = line(GraphKind::U, eta, eta, 1e-3 * eta, 0.6);
  AdmissibilityReport s = validate_admissible(steep, 1e-15);
  CHECK(s.am1);
  CHECK(!s.am3_ok);
  CHECK(s.dG_C0 == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(!s.ok());

  const double slope = 0.25 * std::pow(eta, 1.0 / 3.0);
  AdmissibleGraph lin = line(GraphKind::U, eta, eta, 0.0, slope);
  AdmissibilityReport a = validate_admissible(lin, 1e-15);
  CHECK(a.am2);
  CHECK(a.dG0 == doctest::Approx(slope).epsilon(1e-12));
  CHECK(a.am2_bound == doctest::Approx(2 * slope).epsilon(1e-14));
}

TEST_CASE("invert_psi: linear and quadratic examples") {
  GraphTransformCtx c = linear_ctx(2.0, 0.5, 1.0, 1.0);
  AdmissibleGraph g(GraphKind::U, 1, 1, 1.0, 1.0, 1.0 / 3.0, 9);
  InvertResult r = invert_psi(c, g, v1(1.0), 1e-14);
  CHECK(r.v(0) == doctest::Approx(0.5).epsilon(1e-15));

  c.H = [](const Vec& z) { return v2(0.01 * z(0) * z(0), 0.0); };
  InvertResult q = invert_psi(c, g, v1(1.0), 1e-15);
  CHECK(std::abs(q.v(0) - oracle::kQuadraticRoot) < 1e-12);
  CHECK(2 * q.v(0) + 0.01 * q.v(0) * q.v(0) == doctest::Approx(1.0).epsilon(1e-14));

  // outside the graph domain
  try {
    invert_psi(linear_ctx(2.0, 0.5, 1.0, 1.0), g, v1(10.0), 1e-14);
    FAIL("expected OutOfImage");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::OutOfImage);
  }
}

TEST_CASE("invert_psi: iteration count at eps = 0.05") {
  const double eps = 0.05;
  GraphTransformCtx c = linear_ctx(2.0, 0.5, 0.1, 0.1);
  c.eps = eps;
  // h1 has Lipschitz constant eps^2, so T contracts by eps^2 / 2 < 2 eps^2
  c.H = [eps](const Vec& z) { return v2(eps * eps * std::sin(z(0) + z(1)) / std::sqrt(2.0), 0.0); };
  std::mt19937_64 rng(3);
  AdmissibleGraph g = random_graph(GraphKind::U, 0.1, 0.1, rng);
  const double tol = 1e-12;
  const long bound = static_cast<long>(std::ceil(std::log(tol) / std::log(2 * eps * eps)));
  CHECK(bound == oracle::kInvertIterBound);
  std::uniform_real_distribution<double> U(-0.14, 0.14);
  for (int i = 0; i < 50; ++i) {
    InvertResult r = invert_psi(c, g, v1(U(rng)), tol);
    CHECK(r.iterations <= bound);
  }
}

TEST_CASE("apply_graph_transform: diagonal examples") {
  GraphTransformCtx c = linear_ctx(2.0, 0.5, 0.3, 0.3);
  AdmissibleGraph z(GraphKind::U, 1, 1, 0.3, 0.3, 1.0 / 3.0, 33);
  AdmissibleGraph out = apply_graph_transform(c, z);
  for (const Vec& v : out.values) CHECK(v.norm() == 0.0);

  // G~(w) = G(w/2)/2; constant term beyond AM1 so validation is off
  AdmissibleGraph g = line(GraphKind::U, 0.3, 0.3, 0.1, 0.05);
  AdmissibleGraph t = apply_graph_transform(c, g, 1e-15, false);
  for (size_t i = 0; i < t.node_count(); ++i) {
    double w = t.node(i)(0);
    CHECK(std::abs(t.values[i](0) - (0.05 + 0.0125 * w)) < 1e-14);
  }
}

TEST_CASE("apply_graph_transform: AM1 bound and admissibility") {
  GraphTransformCtx c = nonlinear_ctx();
  CtxReport cr = check_ctx(c);
  REQUIRE(cr.ok());
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    AdmissibleGraph g = random_graph(GraphKind::U, c.p, c.eta, rng);
    REQUIRE(validate_admissible(g, 0.0).ok());
    AdmissibleGraph t = apply_graph_transform(c, g);
    double G0 = g.eval(v1(0)).norm(), T0 = t.eval(v1(0)).norm();
    CHECK(T0 <= std::exp(-c.chi) * (G0 + std::sqrt(c.eps) * c.eta));
    CHECK(validate_admissible(t, 0.0).ok());
  }
}

TEST_CASE("check_ctx: violations are reported") {
  GraphTransformCtx c = nonlinear_ctx();
  c.D1 = Mat::Constant(1, 1, 1.2);  // |D1^-1| > e^-chi
  CHECK(!check_ctx(c).gt2);
  GraphTransformCtx d = nonlinear_ctx();
  d.p_new = 2 * d.p;
  CHECK(!check_ctx(d).gt1);
  GraphTransformCtx e = nonlinear_ctx();
  e.H = [](const Vec& z) { return v2(0.01 + 0 * z(0), 0.0); };
  e.dH = nullptr;
  CHECK(!check_ctx(e).gt3);
}

TEST_CASE("intersect_graphs: examples") {
  AdmissibleGraph u(GraphKind::U, 1, 1, 0.1, 0.1, 1.0 / 3.0, 33), s(GraphKind::S, 1, 1, 0.1, 0.1, 1.0 / 3.0, 33);
  Intersection o = intersect_graphs(u, s, 1e-15);
  CHECK(o.chart.norm() == 0.0);

  AdmissibleGraph uc = AdmissibleGraph::constant(GraphKind::U, 1, 1, 0.1, 0.1, 1.0 / 3.0, 33, v1(0.002));
  AdmissibleGraph sc = AdmissibleGraph::constant(GraphKind::S, 1, 1, 0.1, 0.1, 1.0 / 3.0, 33, v1(0.003));
  Intersection k = intersect_graphs(uc, sc, 1e-15);
  CHECK(k.v1(0) == doctest::Approx(0.003).epsilon(1e-14));
  CHECK(k.v2(0) == doctest::Approx(0.002).epsilon(1e-14));
  // chart ordering is (s, u)
  CHECK(k.chart(0) == doctest::Approx(0.002).epsilon(1e-14));
  CHECK(k.chart(1) == doctest::Approx(0.003).epsilon(1e-14));
}

TEST_CASE("intersect_graphs: Lipschitz dependence on the graphs") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> T(1e-6, 1e-4);
  for (int i = 0; i < 50; ++i) {
    AdmissibleGraph u = random_graph(GraphKind::U, 0.1, 0.1, rng), s = random_graph(GraphKind::S, 0.1, 0.1, rng);
    Intersection a = intersect_graphs(u, s, 1e-15);
    CHECK(a.chart.norm() < 0.1 / 50);
    double tau = T(rng);
    AdmissibleGraph u2 = u, s2 = s;
    for (size_t j = 0; j < u2.node_count(); ++j) {
      u2.values[j](0) += tau * std::cos(3.0 * static_cast<double>(j));
      s2.values[j](0) -= tau * std::sin(2.0 * static_cast<double>(j));
    }
    double moved = std::max(c0_distance(u, u2), c0_distance(s, s2));
    Intersection b = intersect_graphs(u2, s2, 1e-15);
    CHECK((a.chart - b.chart).norm() <= 3 * 2 * moved);
  }
}

TEST_CASE("local_manifold: cat fixed point, unstable side") {
  auto cat = cat_ptr();
  ChartSequence cs = sequence(*cat, v2(0, 0), 4, 1);
  std::vector<DoubleChart> chain(cs.doubles.begin(), cs.doubles.end());
  for (size_t k = 0; k + 1 < chain.size(); ++k) REQUIRE(edge_exists(*cat, chain[k], chain[k + 1], practical()));
  ManifoldResult r = local_manifold(*cat, chain, GraphKind::U, practical(), {33, 200, 1e-12, false, true});
  CHECK(r.transforms == static_cast<int>(chain.size()) - 1);
  for (const Vec& v : r.graph.values) CHECK(v.norm() < 1e-14);

  ManifoldResult p = local_manifold(*cat, {chain[0]}, GraphKind::S, practical(), {33, 50, 1e-13, true, true});
  CHECK(p.certificate < 1e-13);
  for (const Vec& v : p.graph.values) CHECK(v.norm() < 1e-14);
}

TEST_CASE("local_manifold: two seeds contract") {
  auto cat = cat_ptr();
  const ChartParams par = practical();
  for (uint64_t rs = 1; rs <= 5; ++rs) {
    ChartSequence cs = sequence(*cat, v2(0.1 * rs, 0.37), 8, rs);
    std::vector<DoubleChart> chain;
    for (int k = 0; k < 9; ++k) chain.push_back(cs.doubles[static_cast<size_t>(k)]);
    for (GraphKind side : {GraphKind::U, GraphKind::S}) {
      ManifoldResult r = local_manifold(*cat, chain, side, par, {17, 200, 1e-12, false, true});
      const DoubleChart& start = side == GraphKind::U ? chain.front() : chain.back();
      double seed_gap = par.am1_factor * level_value(start.eta_level(), par.eps);
      CHECK(r.certificate <= std::exp(-r.transforms * par.chi / 2) * seed_gap);
    }
  }
}

TEST_CASE("local_manifold: perturbed cat stable tangent at 0") {
  auto cat = cat_ptr();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  ChartSequence cs = sequence(pc, v2(0, 0), 4, 2);
  ManifoldResult r = local_manifold(pc, {cs.doubles[4]}, GraphKind::S, practical(), {33, 100, 1e-13, true, true});
  REQUIRE(r.certificate < 1e-13);
  double slope = r.graph.d0()(0, 0);
  Vec t = cs.charts[4].C[1] * v2(1.0, slope);
  t.normalize();
  if (t(0) < 0) t = -t;
  CHECK(std::abs(t(0) - oracle::kCatEs0) < 1e-2);
  CHECK(std::abs(t(1) - oracle::kCatEs1) < 1e-2);
  CHECK(std::abs(t(0) - oracle::kPerturbedEs0) < 1e-2);
  CHECK(std::abs(t(1) - oracle::kPerturbedEs1) < 1e-2);
}

TEST_CASE("shadow: constant gpo at the fixed point") {
  auto cat = cat_ptr();
  ChartSequence cs = sequence(*cat, v2(0, 0), 4, 1);
  ShadowResult r = shadow(*cat, cs.doubles, practical(), {33, 200, 1e-12, false, true});
  for (int n = -r.window.nb; n <= r.window.nf; ++n) CHECK(cat->dist(r.window.x(n), v2(0, 0)) < 1e-13);
  CHECK(r.max_chart_ratio <= 1.0);
}

TEST_CASE("shadow: period-two cat orbit") {
  auto cat = cat_ptr();
  ChartSequence cs = sequence(*cat, v2(0.8, 0.6), 4, 3);
  std::vector<DoubleChart> cyc = {cs.doubles[4], cs.doubles[5]};
  REQUIRE(edge_exists(*cat, cyc[0], cyc[1], practical()));
  REQUIRE(edge_exists(*cat, cyc[1], cyc[0], practical()));
  ShadowResult r = shadow_periodic(*cat, cyc, practical(), {9, 200, 1e-13, true, true});
  CHECK(cat->dist(r.window.x(0), v2(0.8, 0.6)) < 1e-8);
  CHECK(cat->dist(r.window.x(1), v2(0.2, 0.4)) < 1e-8);
  CHECK(cat->dist(r.window.x(2), v2(0.8, 0.6)) < 1e-8);
}

TEST_CASE("shadow: gpo along a true orbit returns that orbit") {
  auto cat = cat_ptr();
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 10; ++t) {
    ChartSequence cs = sequence(*cat, v2(U(rng), U(rng)), 10, 50 + t);
    std::vector<DoubleChart> g(cs.doubles.begin(), cs.doubles.begin() + 20);
    ShadowResult r = shadow(*cat, g, practical(), {33, 200, 1e-12, false, true});
    CHECK(cat->dist(r.window.x(0), g[static_cast<size_t>(r.middle)].chart.x(0)) < 1e-10);
    CHECK(r.max_chart_ratio <= 1.0);
  }
}

TEST_CASE("shadow: escape is reported") {
  // a chain whose charts belong to a different orbit than the one the manifolds meet at
  auto cat = cat_ptr();
  ChartSequence a = sequence(*cat, v2(0.11, 0.52), 4, 7);
  ChartSequence b = sequence(*cat, v2(0.61, 0.02), 4, 8);
  std::vector<DoubleChart> g(a.doubles.begin(), a.doubles.begin() + 5);
  g.insert(g.end(), b.doubles.begin() + 5, b.doubles.end());
  bool escaped = false;
  try {
    shadow(*cat, g, practical(), {17, 200, 1e-12, false, false});
  } catch (const Error& e) {
    escaped = e.code() == Errc::ShadowEscape || e.code() == Errc::DomainEscape || e.code() == Errc::OutOfImage;
  }
  CHECK(escaped);
}

TEST_CASE("shadow: stable graph points approach each other") {
  auto cat = cat_ptr();
  const ChartParams par = practical();
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 5; ++t) {
    ChartSequence cs = sequence(*cat, v2(U(rng), U(rng)), 10, 70 + t);
    std::vector<DoubleChart> chain(cs.doubles.begin() + 10, cs.doubles.end());
    ManifoldResult r = local_manifold(*cat, chain, GraphKind::S, par, {33, 200, 1e-12, false, true});
    const PesinChart& c0 = chain[0].chart;
    const double ps = chain[0].ps_value(par.eps);
    for (size_t i = 0; i < r.graph.node_count(); i += 4)
      for (size_t j = i + 4; j < r.graph.node_count(); j += 8) {
        double a = r.graph.node(i)(0), b = r.graph.node(j)(0);
        Vec x = chart_psi(*cat, c0, v2(a, r.graph.values[i](0)));
        Vec y = chart_psi(*cat, c0, v2(b, r.graph.values[j](0)));
        for (int n = 0; n < static_cast<int>(chain.size()); ++n) {
          CHECK(cat->dist(x, y) <= 4 * ps * std::exp(-par.chi * n / 2));
          x = cat->step(x);
          y = cat->step(y);
        }
      }
  }
}

TEST_CASE("property: graph transform contracts in C0 and C1") {
  GraphTransformCtx c = nonlinear_ctx();
  std::mt19937_64 rng(31);
  const double k = std::exp(-c.chi / 2);
  for (int i = 0; i < 50; ++i) {
    AdmissibleGraph a = random_graph(GraphKind::U, c.p, c.eta, rng), b = random_graph(GraphKind::U, c.p, c.eta, rng);
    AdmissibleGraph fa = apply_graph_transform(c, a), fb = apply_graph_transform(c, b);
    double d0 = c0_distance(a, b), d1 = c1_distance(a, b);
    CHECK(c0_distance(fa, fb) <= k * d0 + 1e-4 * d0);
    CHECK(c1_distance(fa, fb) <= k * (d1 + std::pow(d0, 1.0 / 3.0)) + 1e-4 * d1);
  }
}

TEST_CASE("property: admissibility is preserved along chart chains") {
  auto cat = cat_ptr();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  const ChartParams par = practical();
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 5; ++t) {
    ChartSequence cs = sequence(pc, v2(U(rng), U(rng)), 6, 90 + t);
    for (size_t k = 0; k + 1 < cs.doubles.size(); ++k) {
      GraphTransformCtx ctx = edge_ctx(pc, cs.doubles[k], cs.doubles[k + 1], GraphKind::U, par, 17);
      AdmissibleGraph g = AdmissibleGraph::constant(GraphKind::U, 1, 1, ctx.p, ctx.eta, 1.0 / 3.0, 17, v1(0));
      AdmissibleGraph out = apply_graph_transform(ctx, g, 1e-14, false);
      AdmissibilityReport rep = validate_admissible(out, 1e-12, par.am1_factor);
      CHECK(rep.ok());
    }
  }
}

TEST_CASE("property: Psi image covers the guaranteed ball") {
  GraphTransformCtx c = nonlinear_ctx();
  std::mt19937_64 rng(51);
  AdmissibleGraph g = random_graph(GraphKind::U, c.p, c.eta, rng);
  const double R = std::exp(c.chi - std::sqrt(c.eps)) * c.p;
  for (int i = 0; i <= 40; ++i) {
    double t = -R + 2 * R * i / 40.0;
    InvertResult r = invert_psi(c, g, v1(t), 1e-14);
    Vec z = v2(r.v(0), g.eval(r.v)(0));
    CHECK(std::abs(2 * r.v(0) + c.H(z)(0) - t) < 1e-13);
  }
}

TEST_CASE("property: tangent vectors of stable graphs decay") {
  auto cat = cat_ptr();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  const ChartParams par = practical();
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> U(0, 1);
  for (int t = 0; t < 5; ++t) {
    ChartSequence cs = sequence(pc, v2(U(rng), U(rng)), 10, 110 + t);
    std::vector<DoubleChart> chain(cs.doubles.begin() + 10, cs.doubles.end());
    ManifoldResult r = local_manifold(pc, chain, GraphKind::S, par, {33, 200, 1e-12, false, true});
    const PesinChart& c0 = chain[0].chart;
    for (size_t i = 4; i + 4 < r.graph.node_count(); i += 6) {
      Mat dG = r.graph.node_derivative(i);
      Vec base = v2(r.graph.node(i)(0), r.graph.values[i](0));
      Vec x = chart_psi(pc, c0, base);
      Vec v = c0.C[1] * v2(1.0, dG(0, 0));
      v.normalize();
      for (int n = 0; n < static_cast<int>(chain.size()); ++n) {
        CHECK(v.norm() <= 8 * c0.inv_C_norm * std::exp(-par.chi * n / 2));
        v = pc.derivative(x) * v;
        x = pc.step(x);
      }
    }
  }
}

TEST_CASE("property: transformed u-graph meets every s-graph once") {
  GraphTransformCtx c = nonlinear_ctx();
  std::mt19937_64 rng(71);
  AdmissibleGraph u = apply_graph_transform(c, random_graph(GraphKind::U, c.p, c.eta, rng));
  for (int i = 0; i < 30; ++i) {
    AdmissibleGraph s = random_graph(GraphKind::S, c.p, c.eta, rng);
    Intersection x = intersect_graphs(u, s, 1e-15);
    CHECK(std::abs(u.eval(x.v1)(0) - x.v2(0)) < 1e-14);
    CHECK(std::abs(s.eval(x.v2)(0) - x.v1(0)) < 1e-14);
    // v -> s(u(v)) - v changes sign exactly once on the domain
    int changes = 0;
    double prev = 0;
    for (int k = 0; k <= 400; ++k) {
      double v = -c.p + 2 * c.p * k / 400.0;
      double f = s.eval(u.eval(v1(v)))(0) - v;
      if (k > 0 && (f > 0) != (prev > 0)) ++changes;
      prev = f;
    }
    CHECK(changes == 1);
  }
}

TEST_CASE("graph_csv") {
  AdmissibleGraph g = line(GraphKind::U, 0.1, 0.1, 0.0, 0.1, 3);
  std::string s = graph_csv(g);
  CHECK(s.rfind("node,v0,G0\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
