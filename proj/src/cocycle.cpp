#include "nuhsym/cocycle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace nuh {

namespace {

// deterministic generic starting frames; two of them give the convergence check.
// (the identity is no good: coordinate axes are invariant for diagonal cocycles)
Mat alt_frame(int m, double phase) {
  Mat a = Mat::Identity(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) a(i, j) += 0.3 * std::sin(phase + i + 2.0 * j);
  Mat q, r;
  qr_pos(a, q, r);
  return q;
}

double subspace_gap(const Mat& a, const Mat& b) {
  if (a.cols() == 0) return 0.0;
  Mat pa = a * a.transpose();
  Mat pb = b * b.transpose();
  return opnorm(pa - pb);
}

std::vector<double> qr_rates(const std::vector<Mat>& Js, size_t start, int m) {
  Mat Q = Mat::Identity(m, m), q, r;
  std::vector<double> acc(static_cast<size_t>(m), 0.0);
  for (size_t k = 0; k < Js.size(); ++k) {
    qr_pos(Js[k] * Q, q, r);
    Q = q;
    if (k >= start)
      for (int i = 0; i < m; ++i) acc[static_cast<size_t>(i)] += std::log(r(i, i));
  }
  size_t n = Js.size() - start;
  for (double& v : acc) v /= static_cast<double>(n);
  std::sort(acc.begin(), acc.end(), std::greater<double>());
  return acc;
}

}  // namespace

std::vector<double> lyapunov_exponents(const SystemModel& m, const OrbitWindow& w) {
  if (w.nf < 32) throw Error(Errc::InvalidArgument, "exponents need a forward length >= 32");
  const int dim = m.dim();
  Mat Q = Mat::Identity(dim, dim), q, r;
  // transient over the backward half aligns the frame before accumulation
  for (int k = -w.nb; k < 0; ++k) {
    qr_pos(m.derivative(w.x(k)) * Q, q, r);
    Q = q;
  }
  std::vector<double> acc(static_cast<size_t>(dim), 0.0);
  for (int k = 0; k < w.nf; ++k) {
    qr_pos(m.derivative(w.x(k)) * Q, q, r);
    Q = q;
    for (int i = 0; i < dim; ++i) acc[static_cast<size_t>(i)] += std::log(r(i, i));
  }
  for (double& v : acc) v /= w.nf;
  std::sort(acc.begin(), acc.end(), std::greater<double>());
  return acc;
}

double default_chi(const std::vector<double>& exps) {
  double mn = std::numeric_limits<double>::infinity();
  for (double e : exps) mn = std::min(mn, std::abs(e));
  return 0.5 * mn;
}

CocycleFrames::CocycleFrames(const SystemModel& m, const OrbitWindow& w, double chi, bool require_gap)
    : w_(w), chi_(chi), m_(m.dim()) {
  if (w.nf < 1) throw Error(Errc::InvalidArgument, "window needs a forward part");
  if (!(chi > 0)) throw Error(Errc::InvalidArgument, "chi must be positive");
  const size_t n = static_cast<size_t>(w.nb + w.nf);
  J_.resize(n);
  Ji_.resize(n);
  for (int k = -w.nb; k < w.nf; ++k) {
    Mat J = m.derivative(w.x(k));
    J_[static_cast<size_t>(k + w.nb)] = J;
    Ji_[static_cast<size_t>(k + w.nb)] = J.inverse();
  }
  exps_ = qr_rates(J_, static_cast<size_t>(w.nb), m_);
  for (double e : exps_)
    if (require_gap ? std::abs(e) <= chi : e == 0.0)
      throw Error(Errc::NotHyperbolic, "exponent inside [-chi, chi]", 0, e);
  const double cut = require_gap ? chi : 0.0;
  du_ = static_cast<int>(std::count_if(exps_.begin(), exps_.end(), [&](double e) { return e > cut; }));
  ds_ = m_ - du_;

  Es_.assign(n + 1, Mat(m_, ds_));
  Eu_.assign(n + 1, Mat(m_, du_));
  Mat q, r;
  if (du_ == m_) {
    for (auto& e : Eu_) e = Mat::Identity(m_, m_);
  } else if (du_ > 0) {
    Mat Q = alt_frame(m_, 1.0), Q2 = alt_frame(m_, 2.5);
    Mat e0a, e0b;
    for (int k = -w.nb; k <= w.nf; ++k) {
      Mat e = Q.leftCols(du_);
      fix_signs(e);
      Eu_[static_cast<size_t>(k + w.nb)] = e;
      if (k == 0) {
        e0a = Q.leftCols(du_);
        e0b = Q2.leftCols(du_);
      }
      if (k == w.nf) break;
      qr_pos(J_[static_cast<size_t>(k + w.nb)] * Q, q, r);
      Q = q;
      qr_pos(J_[static_cast<size_t>(k + w.nb)] * Q2, q, r);
      Q2 = q;
    }
    residual_ = std::max(residual_, subspace_gap(e0a, e0b));
  }
  if (ds_ == m_) {
    for (auto& e : Es_) e = Mat::Identity(m_, m_);
  } else if (ds_ > 0) {
    Mat Q = alt_frame(m_, 1.0), Q2 = alt_frame(m_, 2.5);
    Mat e0a, e0b;
    for (int k = w.nf; k >= -w.nb; --k) {
      Mat e = Q.leftCols(ds_);
      fix_signs(e);
      Es_[static_cast<size_t>(k + w.nb)] = e;
      if (k == 0) {
        e0a = Q.leftCols(ds_);
        e0b = Q2.leftCols(ds_);
      }
      if (k == -w.nb) break;
      qr_pos(Ji_[static_cast<size_t>(k - 1 + w.nb)] * Q, q, r);
      Q = q;
      qr_pos(Ji_[static_cast<size_t>(k - 1 + w.nb)] * Q2, q, r);
      Q2 = q;
    }
    residual_ = std::max(residual_, subspace_gap(e0a, e0b));
  }
  if (residual_ > 1e-8) throw Error(Errc::NonConvergent, "splitting not converged", 0, residual_);
  Bs_.assign(n + 1, Mat());
  Bu_.assign(n + 1, Mat());
  for (size_t i = 0; i < n; ++i) {
    if (ds_ > 0) Bs_[i] = Es_[i + 1].transpose() * J_[i] * Es_[i];
    if (du_ > 0) Bu_[i + 1] = Eu_[i].transpose() * Ji_[i] * Eu_[i + 1];
  }
}

Splitting CocycleFrames::split_at(int k) const {
  Splitting s;
  s.ds = ds_;
  s.du = du_;
  s.Es = Es_.at(static_cast<size_t>(k + w_.nb));
  s.Eu = Eu_.at(static_cast<size_t>(k + w_.nb));
  s.residual = residual_;
  return s;
}

namespace {

// Sum of e^{2 n chi} c_n^T c_n with c_{n+1} = step(n, c_n). step returns false past the data.
Mat geometric_gram(const Mat& c0, double chi, const SeriesOptions& o,
                   const std::function<bool(int, Mat&)>& step, int& terms, double& tail) {
  const int r = static_cast<int>(c0.cols());
  Mat G = Mat::Zero(r, r);
  terms = 0;
  tail = 0.0;
  double t0 = c0.squaredNorm();
  if (r == 0 || t0 == 0.0) return G;
  Mat c = c0;
  double w = 1.0;
  const double e2 = std::exp(2.0 * chi);
  std::vector<double> logs;
  int diverging = 0;
  for (int n = 0;; ++n) {
    double tn = w * c.squaredNorm();
    G += w * (c.transpose() * c);
    terms = n + 1;
    logs.push_back(std::log(std::max(tn, 1e-300)));
    if (n + 1 >= o.fit_len) {
      // least-squares slope of the last fit_len log-terms
      const int L = o.fit_len;
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (int i = 0; i < L; ++i) {
        double y = logs[logs.size() - static_cast<size_t>(L) + static_cast<size_t>(i)];
        sx += i;
        sy += y;
        sxx += double(i) * i;
        sxy += i * y;
      }
      double slope = (L * sxy - sx * sy) / (L * sxx - sx * sx);
      double ratio = std::exp(slope);
      if (ratio >= 1.0 - o.ratio_cap) {
        if (++diverging >= o.fit_len)
          throw Error(Errc::Divergent, "series terms do not decay", n, ratio);
      } else {
        diverging = 0;
        if (tn < o.tol * (1.0 - ratio) * t0) {
          tail = tn * ratio / (1.0 - ratio);
          return G;
        }
      }
    }
    if (!step(n, c)) throw Error(Errc::Divergent, "window exhausted before the series converged", n);
    w *= e2;
  }
}

}  // namespace

Mat CocycleFrames::gram_s(int k, const SeriesOptions& o, int& terms, double& tail) const {
  if (ds_ == 0) {
    terms = 0;
    tail = 0;
    return Mat(0, 0);
  }
  Mat c0 = Mat::Identity(ds_, ds_);
  auto step = [&](int n, Mat& c) {
    int j = k + n;
    if (j + 1 > w_.nf) return false;
    c = Bs_[static_cast<size_t>(j + w_.nb)] * c;
    return true;
  };
  return 2.0 * geometric_gram(c0, chi_, o, step, terms, tail);
}

Mat CocycleFrames::gram_u(int k, const SeriesOptions& o, int& terms, double& tail) const {
  if (du_ == 0) {
    terms = 0;
    tail = 0;
    return Mat(0, 0);
  }
  Mat c0 = Mat::Identity(du_, du_);
  auto step = [&](int n, Mat& c) {
    int j = k - n;
    if (j - 1 < -w_.nb) return false;
    c = Bu_[static_cast<size_t>(j + w_.nb)] * c;
    return true;
  };
  return 2.0 * geometric_gram(c0, chi_, o, step, terms, tail);
}

SeriesResult CocycleFrames::s_series(int k, const Vec& v, const SeriesOptions& o) const {
  SeriesResult res;
  if (v.norm() == 0.0) return res;
  if (ds_ == 0) throw Error(Errc::InvalidArgument, "no stable subspace");
  const Mat& E = Es_.at(static_cast<size_t>(k + w_.nb));
  Vec c = E.transpose() * v;
  if ((v - E * c).norm() > 1e-6 * v.norm()) throw Error(Errc::InvalidArgument, "vector is not in E_s");
  Mat c0 = c;
  Mat G = 2.0 * geometric_gram(c0, chi_, o, [&](int n, Mat& cc) {
    int j = k + n;
    if (j + 1 > w_.nf) return false;
    cc = Bs_[static_cast<size_t>(j + w_.nb)] * cc;
    return true;
  }, res.terms, res.tail);
  res.value = std::sqrt(G(0, 0));
  res.tail *= 2.0;
  return res;
}

SeriesResult CocycleFrames::u_series(int k, const Vec& v, const SeriesOptions& o) const {
  SeriesResult res;
  if (v.norm() == 0.0) return res;
  if (du_ == 0) throw Error(Errc::InvalidArgument, "no unstable subspace");
  const Mat& E = Eu_.at(static_cast<size_t>(k + w_.nb));
  Vec c = E.transpose() * v;
  if ((v - E * c).norm() > 1e-6 * v.norm()) throw Error(Errc::InvalidArgument, "vector is not in E_u");
  Mat c0 = c;
  Mat G = 2.0 * geometric_gram(c0, chi_, o, [&](int n, Mat& cc) {
    int j = k - n;
    if (j - 1 < -w_.nb) return false;
    cc = Bu_[static_cast<size_t>(j + w_.nb)] * cc;
    return true;
  }, res.terms, res.tail);
  res.value = std::sqrt(G(0, 0));
  res.tail *= 2.0;
  return res;
}

namespace {
// upper-triangular M with M^T G M = I
Mat inv_chol_factor(const Mat& G) {
  if (G.size() == 0) return Mat(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(G, Eigen::EigenvaluesOnly);
  double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0) || hi / lo > 1e12) throw Error(Errc::IllConditioned, "Gram matrix condition too large", 0, hi / lo);
  Eigen::LLT<Mat> llt(G);
  Mat R = llt.matrixU();
  Mat I = Mat::Identity(G.rows(), G.cols());
  return R.triangularView<Eigen::Upper>().solve(I);
}
}  // namespace

LyapunovData CocycleFrames::data_at(int k, const SeriesOptions& o) const {
  LyapunovData L;
  L.chi = chi_;
  L.ds = ds_;
  L.du = du_;
  L.Es = Es_.at(static_cast<size_t>(k + w_.nb));
  L.Eu = Eu_.at(static_cast<size_t>(k + w_.nb));
  Mat Gs = gram_s(k, o, L.trunc_s, L.tail_s);
  Mat Gu = gram_u(k, o, L.trunc_u, L.tail_u);
  L.S = Gs.diagonal().cwiseSqrt();
  L.U = Gu.diagonal().cwiseSqrt();
  Mat Ms = inv_chol_factor(Gs), Mu = inv_chol_factor(Gu);
  L.C = Mat::Zero(m_, m_);
  if (ds_ > 0) L.C.leftCols(ds_) = L.Es * Ms;
  if (du_ > 0) L.C.rightCols(du_) = L.Eu * Mu;
  L.inv_C_norm = 1.0 / min_sv(L.C);
  return L;
}

ReducedDerivative CocycleFrames::reduce_at(int k, const SeriesOptions& o) const {
  if (k + 1 > w_.nf) throw Error(Errc::InvalidArgument, "reduction needs the forward shift");
  LyapunovData a = data_at(k, o), b = data_at(k + 1, o);
  ReducedDerivative R;
  R.D = b.C.partialPivLu().solve(jac(k) * a.C);
  R.Ds = R.D.topLeftCorner(ds_, ds_);
  R.Du = R.D.bottomRightCorner(du_, du_);
  R.off_block = std::sqrt(R.D.topRightCorner(ds_, du_).squaredNorm() + R.D.bottomLeftCorner(du_, ds_).squaredNorm());
  R.Ds_norm = ds_ > 0 ? opnorm(R.Ds) : 0.0;
  R.Du_min_sv = du_ > 0 ? min_sv(R.Du) : std::numeric_limits<double>::infinity();
  return R;
}

Splitting oseledets_split(const SystemModel& m, const OrbitWindow& w, double chi) {
  return CocycleFrames(m, w, chi).split_at(0);
}

double s_norm(const SystemModel& m, const OrbitWindow& w, const Vec& v, double chi, double tol) {
  if (v.norm() == 0.0) return 0.0;
  SeriesOptions o;
  o.tol = tol;
  return CocycleFrames(m, w, chi, false).s_series(0, v, o).value;
}

double u_norm(const SystemModel& m, const OrbitWindow& w, const Vec& v, double chi, double tol) {
  if (v.norm() == 0.0) return 0.0;
  SeriesOptions o;
  o.tol = tol;
  return CocycleFrames(m, w, chi, false).u_series(0, v, o).value;
}

LyapunovData build_C(const SystemModel& m, const OrbitWindow& w, double chi, double tol) {
  SeriesOptions o;
  o.tol = tol;
  return CocycleFrames(m, w, chi).data_at(0, o);
}

ReducedDerivative reduce(const SystemModel& m, const OrbitWindow& w, double chi, double tol) {
  SeriesOptions o;
  o.tol = tol;
  ReducedDerivative R = CocycleFrames(m, w, chi).reduce_at(0, o);
  if (R.Ds.size() > 0 && !(R.Ds_norm < std::exp(-chi)))
    throw Error(Errc::BlockBoundViolation, "||D_s|| >= e^-chi", 0, R.Ds_norm);
  if (R.Du.size() > 0 && !(R.Du_min_sv > std::exp(chi)))
    throw Error(Errc::BlockBoundViolation, "sigma_min(D_u) <= e^chi", 1, R.Du_min_sv);
  return R;
}

}  // namespace nuh
