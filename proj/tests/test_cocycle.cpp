#include <doctest.h>

#include <cmath>
#include <random>

#include "nuhsym/cocycle.hpp"
#include "oracle_values.hpp"

using namespace nuh;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

OrbitWindow cat_window(uint64_t seed, int n = 64) {
  static auto cat = make_cat_map();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(0, 1);
  return random_window(*cat, v2(U(rng), U(rng)), n, n, rng);
}

DiagonalCubic diag_map(double a, double b) { return DiagonalCubic(v2(a, b), 0.0); }

// the same column up to sign
double col_gap(const Vec& a, const Vec& b) { return std::min((a - b).norm(), (a + b).norm()); }

}  // namespace

TEST_CASE("lyapunov_exponents: cat map") {
  auto cat = make_cat_map();
  for (uint64_t s = 1; s <= 5; ++s) {
    auto e = lyapunov_exponents(*cat, cat_window(s));
    REQUIRE(e.size() == 2);
    CHECK(std::abs(e[0] - oracle::kCatLogLambda) < 1e-6);
    CHECK(std::abs(e[1] + oracle::kCatLogLambda) < 1e-6);
  }
}

TEST_CASE("lyapunov_exponents: constant diagonal cocycle") {
  DiagonalCubic m = diag_map(2.0, 0.5);
  OrbitWindow w = extend_window(m, v2(1e-6, 1e-6), 40, 40, std::vector<BranchId>(40));
  auto e = lyapunov_exponents(m, w);
  CHECK(e[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(e[1] == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("lyapunov_exponents: viana, 1e5 steps") {
  VianaMap v(16, 1.9, 0.01);
  std::mt19937_64 rng(3);
  OrbitWindow w = random_window(v, v2(0.123, 0.77), 100000, 64, rng);
  auto e = lyapunov_exponents(v, w);
  CHECK(std::abs(e[0] - oracle::kLog16) < 1e-8);
  CHECK(e[1] > 0.0);
  // independent long-run QR estimate (different orbit, twice the length)
  CHECK(std::abs(e[1] - oracle::kVianaSecondExponent) < 1e-2);
}

TEST_CASE("lyapunov_exponents: short windows are refused") {
  auto cat = make_cat_map();
  CHECK_THROWS_AS(lyapunov_exponents(*cat, cat_window(1, 16)), Error);
}

TEST_CASE("oseledets_split: cat map eigen-directions") {
  auto cat = make_cat_map();
  Splitting s = oseledets_split(*cat, cat_window(9), 0.5);
  REQUIRE(s.ds == 1);
  REQUIRE(s.du == 1);
  Vec eu = v2(oracle::kCatEu0, oracle::kCatEu1);
  Vec es = v2(oracle::kCatEs0, oracle::kCatEs1);
  CHECK((s.Eu.col(0) - eu).norm() < 1e-8);
  CHECK((s.Es.col(0) - es).norm() < 1e-8);
  CHECK(s.residual < 1e-8);
}

TEST_CASE("oseledets_split: diagonal map and viana") {
  DiagonalCubic m = diag_map(2.0, 0.5);
  OrbitWindow w = extend_window(m, v2(1e-6, 1e-6), 40, 40, std::vector<BranchId>(40));
  Splitting s = oseledets_split(m, w, 0.3);
  CHECK((s.Eu.col(0) - v2(1, 0)).norm() < 1e-14);
  CHECK((s.Es.col(0) - v2(0, 1)).norm() < 1e-14);

  VianaMap v(16, 1.9, 0.01);
  std::mt19937_64 rng(4);
  OrbitWindow wv = random_window(v, v2(0.31, 0.5), 200, 200, rng);
  Splitting sv = oseledets_split(v, wv, 0.25);
  CHECK(sv.ds == 0);
  CHECK(sv.du == 2);
  CHECK(sv.Es.cols() == 0);
  CHECK((sv.Eu - Mat::Identity(2, 2)).norm() == 0.0);
}

TEST_CASE("oseledets_split: chi above an exponent") {
  auto cat = make_cat_map();
  try {
    oseledets_split(*cat, cat_window(2), 1.0);
    FAIL("expected NotHyperbolic");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NotHyperbolic);
  }
}

TEST_CASE("s_norm / u_norm: cat map closed form") {
  auto cat = make_cat_map();
  OrbitWindow w = cat_window(12);
  Splitting sp = oseledets_split(*cat, w, 0.5);
  CHECK(std::abs(s_norm(*cat, w, sp.Es.col(0), 0.5) - oracle::kCatS) < 1e-6);
  CHECK(std::abs(u_norm(*cat, w, sp.Eu.col(0), 0.5) - oracle::kCatS) < 1e-6);
  // homogeneous of degree one
  CHECK(s_norm(*cat, w, -3.0 * sp.Es.col(0), 0.5) == doctest::Approx(3 * oracle::kCatS).epsilon(1e-9));
  CHECK(s_norm(*cat, w, Vec::Zero(2), 0.5) == 0.0);
  CHECK(u_norm(*cat, w, Vec::Zero(2), 0.5) == 0.0);
}

TEST_CASE("s_norm: divergent above log lambda") {
  // e^{2 chi} / lambda^2 = 1.078 > 1
  CHECK(std::exp(2.0) / (oracle::kCatLambda * oracle::kCatLambda) ==
        doctest::Approx(oracle::kCatDivergentRatio).epsilon(1e-9));
  auto cat = make_cat_map();
  OrbitWindow w = cat_window(13);
  Splitting sp = oseledets_split(*cat, w, 0.5);
  for (auto f : {s_norm, u_norm}) {
    try {
      f(*cat, w, f == s_norm ? Vec(sp.Es.col(0)) : Vec(sp.Eu.col(0)), 1.0, 1e-13);
      FAIL("expected Divergent");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::Divergent);
    }
  }
}

TEST_CASE("u_norm: backward side too short") {
  auto cat = make_cat_map();
  std::mt19937_64 rng(5);
  OrbitWindow w = random_window(*cat, v2(0.3, 0.6), 64, 3, rng);
  Splitting sp;
  bool flagged = false;
  try {
    sp = oseledets_split(*cat, w, 0.5);
    u_norm(*cat, w, sp.Eu.col(0), 0.5);
  } catch (const Error& e) {
    flagged = e.code() == Errc::Divergent || e.code() == Errc::NonConvergent;
  }
  CHECK(flagged);
}

TEST_CASE("build_C: cat map") {
  auto cat = make_cat_map();
  OrbitWindow w = cat_window(21);
  LyapunovData L = build_C(*cat, w, 0.5);
  Vec es = v2(oracle::kCatEs0, oracle::kCatEs1);
  Vec eu = v2(oracle::kCatEu0, oracle::kCatEu1);
  CHECK(col_gap(L.C.col(0), es / oracle::kCatS) < 1e-8);
  CHECK(col_gap(L.C.col(1), eu / oracle::kCatS) < 1e-8);
  CHECK(std::abs(L.inv_C_norm - oracle::kCatS) < 1e-6);
  CHECK(opnorm(L.C) <= 1.0);
  CHECK(L.S(0) >= std::sqrt(2.0));
  CHECK(L.U(0) >= std::sqrt(2.0));
  CHECK(L.inv_C_norm == doctest::Approx(opnorm(L.C.inverse())).epsilon(1e-8));
}

TEST_CASE("build_C: viana isometry against direct series") {
  VianaMap v(16, 1.9, 0.01);
  std::mt19937_64 rng(6);
  OrbitWindow w = random_window(v, v2(0.41, -0.6), 200, 300, rng);
  const double chi = 0.25;
  LyapunovData L = build_C(v, w, chi);
  REQUIRE(L.ds == 0);
  // <<a, b>>_u = 2 sum e^{2 n chi} <df^{-n} a, df^{-n} b>, pulled back along the recorded branches
  auto u_inner = [&](Vec a, Vec b) {
    double s = 0, wgt = 1;
    for (int n = 0; n < w.nb; ++n) {
      double t = wgt * a.dot(b);
      s += t;
      if (n > 10 && std::abs(t) < 1e-17 * std::abs(s)) break;
      Mat Ji = v.derivative(w.x(-n - 1)).inverse();
      a = Ji * a;
      b = Ji * b;
      wgt *= std::exp(2 * chi);
    }
    return 2 * s;
  };
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(std::abs(u_inner(L.C.col(i), L.C.col(j)) - (i == j ? 1.0 : 0.0)) < 1e-6);
  // upper triangular inverse Cholesky factor
  CHECK(L.C(1, 0) == 0.0);
  CHECK(opnorm(L.C) <= 1.0);
}

TEST_CASE("reduce: cat map and diagonal map") {
  auto cat = make_cat_map();
  ReducedDerivative R = reduce(*cat, cat_window(30), 0.5);
  CHECK(std::abs(R.D(0, 0) - oracle::kCatDs) < 1e-8);
  CHECK(std::abs(R.D(1, 1) - oracle::kCatDu) < 1e-8);
  CHECK(R.Ds_norm < std::exp(-0.5));
  CHECK(R.Du_min_sv > std::exp(0.5));
  CHECK(R.off_block < 1e-6 * (R.Ds_norm + opnorm(R.Du)));

  DiagonalCubic m = diag_map(std::exp(1.0), std::exp(-1.0));
  OrbitWindow w = extend_window(m, v2(1e-9, 1e-9), 40, 40, std::vector<BranchId>(40));
  ReducedDerivative Rd = reduce(m, w, 0.5);
  CHECK(std::abs(Rd.D(0, 1)) < 1e-14);
  CHECK(std::abs(Rd.D(1, 0)) < 1e-14);
  CHECK(Rd.D(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(Rd.D(1, 1) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("property: C^-1 norm ratio along orbits") {
  // ||C(f x)^-1|| / ||C(x)^-1|| within rho^{+-2a} (1 + e^{2 chi})^{+-1/2}
  std::mt19937_64 rng(40);
  std::uniform_real_distribution<double> U(0, 1);
  auto cat = make_cat_map();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  VianaMap v(16, 1.9, 0.01);
  for (int i = 0; i < 20; ++i) {
    OrbitWindow w = random_window(pc, v2(U(rng), U(rng)), 80, 80, rng);
    CocycleFrames fr(pc, w, 0.48);
    double r = fr.data_at(1).inv_C_norm / fr.data_at(0).inv_C_norm;
    double b = std::sqrt(1 + std::exp(2 * 0.48));
    CHECK(r >= 1 / b);
    CHECK(r <= b);

    OrbitWindow wv = random_window(v, v2(U(rng), 3 * U(rng) - 1.5), 120, 220, rng);
    auto e = lyapunov_exponents(v, wv);
    double chi = default_chi(e);
    CocycleFrames fv(v, wv, chi);
    double rv = fv.data_at(1).inv_C_norm / fv.data_at(0).inv_C_norm;
    double rh = rho(v, wv), bv = std::sqrt(1 + std::exp(2 * chi));
    CHECK(rv >= std::pow(rh, 2 * v.a) / bv);
    CHECK(rv <= std::pow(rh, -2 * v.a) * bv);
  }
}

TEST_CASE("property: recursion identities for S and U") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> U(0, 1), X(-2, 2);
  auto cat = make_cat_map();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  const double chi = 0.45;
  for (int i = 0; i < 100; ++i) {
    const SystemModel& m = (i % 2) ? static_cast<const SystemModel&>(pc) : *cat;
    OrbitWindow w = random_window(m, v2(U(rng), U(rng)), 96, 96, rng);
    CocycleFrames fr(m, w, chi);
    const double e2 = std::exp(2 * chi);
    for (int j = 0; j < 5; ++j) {
      Vec vs = X(rng) * fr.split_at(0).Es.col(0);
      Vec vu = X(rng) * fr.split_at(0).Eu.col(0);
      double S0 = fr.s_series(0, vs).value, S1 = fr.s_series(1, fr.jac(0) * vs).value;
      double lhs = S0 * S0, rhs = 2 * vs.squaredNorm() + e2 * S1 * S1;
      CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(lhs));
      double U0 = fr.u_series(0, vu).value, U1 = fr.u_series(-1, fr.jac_inv(-1) * vu).value;
      double lu = U0 * U0, ru = 2 * vu.squaredNorm() + e2 * U1 * U1;
      CHECK(std::abs(lu - ru) <= 1e-6 * std::abs(lu));
    }
  }
}

TEST_CASE("property: C contracts, C^-1 expands") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(0, 1);
  auto cat = make_cat_map();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  VianaMap v(16, 1.9, 0.01);
  for (int i = 0; i < 30; ++i) {
    std::vector<LyapunovData> ds;
    OrbitWindow w = random_window(pc, v2(U(rng), U(rng)), 64, 64, rng);
    ds.push_back(build_C(pc, w, 0.48));
    OrbitWindow wv = random_window(v, v2(U(rng), 3 * U(rng) - 1.5), 120, 220, rng);
    ds.push_back(build_C(v, wv, default_chi(lyapunov_exponents(v, wv))));
    for (const auto& L : ds) {
      CHECK(opnorm(L.C) <= 1.0);
      CHECK(L.inv_C_norm >= std::sqrt(2.0) - 1e-6);
      for (Eigen::Index k = 0; k < L.S.size(); ++k) CHECK(L.S(k) >= std::sqrt(2.0));
      for (Eigen::Index k = 0; k < L.U.size(); ++k) CHECK(L.U(k) >= std::sqrt(2.0));
    }
  }
}

TEST_CASE("property: exponent estimates survive a one-step shift") {
  auto cat = make_cat_map();
  PerturbedCat pc(cat->jacobian(v2(0, 0)), 1e-3);
  std::mt19937_64 rng(43);
  OrbitWindow w = random_window(*cat, v2(0.2, 0.9), 64, 64, rng);
  auto a = lyapunov_exponents(*cat, w), b = lyapunov_exponents(*cat, shift_window(*cat, w, 1));
  CHECK(std::abs(a[0] - b[0]) < 1e-6);
  CHECK(std::abs(a[1] - b[1]) < 1e-6);
  OrbitWindow wp = random_window(pc, v2(0.2, 0.9), 1 << 14, 64, rng);
  auto c = lyapunov_exponents(pc, wp), d = lyapunov_exponents(pc, shift_window(pc, wp, 1));
  CHECK(std::abs(c[0] - d[0]) < 1e-6);
  CHECK(std::abs(c[1] - d[1]) < 1e-6);
}
