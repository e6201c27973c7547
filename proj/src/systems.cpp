#include "nuhsym/systems.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

namespace nuh {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

double wrap1(double v, double period) {
  double r = std::fmod(v, period);
  if (r < 0) r += period;
  if (r >= period) r -= period;
  return r;
}
}  // namespace

const char* errc_name(Errc c) {
  switch (c) {
    case Errc::SingularPoint: return "SingularPoint";
    case Errc::SingularEncountered: return "SingularEncountered";
    case Errc::NoSuchBranch: return "NoSuchBranch";
    case Errc::BranchDomainViolation: return "BranchDomainViolation";
    case Errc::NotHyperbolic: return "NotHyperbolic";
    case Errc::NonConvergent: return "NonConvergent";
    case Errc::Divergent: return "Divergent";
    case Errc::IllConditioned: return "IllConditioned";
    case Errc::BlockBoundViolation: return "BlockBoundViolation";
    case Errc::Underflow: return "Underflow";
    case Errc::DomainEscape: return "DomainEscape";
    case Errc::OutOfImage: return "OutOfImage";
    case Errc::AdmissibilityLost: return "AdmissibilityLost";
    case Errc::ShadowEscape: return "ShadowEscape";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyCore: return "EmptyCore";
    case Errc::Overflow: return "Overflow";
    case Errc::PathExhausted: return "PathExhausted";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

Vec SystemModel::wrap(const Vec& x) const {
  Vec r = x;
  for (int i = 0; i < dim(); ++i)
    if (domain_.period[i] > 0) r(i) = wrap1(x(i), domain_.period[i]);
  return r;
}

Vec SystemModel::disp(const Vec& a, const Vec& b) const {
  Vec d = b - a;
  for (int i = 0; i < dim(); ++i) {
    double p = domain_.period[i];
    if (p > 0) d(i) -= p * std::round(d(i) / p);
  }
  return d;
}

Vec SystemModel::step(const Vec& x) const {
  if (singular_distance(x) <= 0.0) throw Error(Errc::SingularPoint, "step at a singular point");
  return wrap(lift(x));
}

Mat SystemModel::derivative(const Vec& x) const {
  if (singular_distance(x) <= 0.0) throw Error(Errc::SingularPoint, "derivative at a singular point");
  return jacobian(x);
}

Vec SystemModel::inverse_branch(const Vec& y, BranchId b) const { return wrap(inverse_raw(y, b)); }

Vec step(const SystemModel& m, const Vec& x) { return m.step(x); }
Mat derivative(const SystemModel& m, const Vec& x) { return m.derivative(x); }
Vec inverse_branch(const SystemModel& m, const Vec& y, BranchId b) { return m.inverse_branch(y, b); }

// ---- torus automorphism

TorusAutomorphism::TorusAutomorphism(const Mat& A) : A_(A) {
  if (A.rows() != A.cols() || A.rows() < 1) throw Error(Errc::InvalidArgument, "matrix must be square");
  double det = A.determinant();
  if (std::abs(std::abs(det) - 1.0) > 1e-12) throw Error(Errc::InvalidArgument, "toral automorphism needs |det| = 1");
  for (Eigen::Index i = 0; i < A.size(); ++i)
    if (A.data()[i] != std::round(A.data()[i])) throw Error(Errc::InvalidArgument, "matrix must be integer");
  Ainv_ = A.inverse();
  for (Eigen::Index i = 0; i < Ainv_.size(); ++i) Ainv_.data()[i] = std::round(Ainv_.data()[i]);
  domain_.period.assign(static_cast<size_t>(A.rows()), 1.0);
}

Vec TorusAutomorphism::inverse_raw(const Vec& y, BranchId b) const {
  if (b != BranchId{}) throw Error(Errc::NoSuchBranch, "invertible system has the single branch 0");
  return Ainv_ * y;
}

ModelPtr make_cat_map() {
  Mat A(2, 2);
  A << 2, 1, 1, 1;
  return std::make_shared<TorusAutomorphism>(A);
}

// ---- perturbed cat

PerturbedCat::PerturbedCat(const Mat& A, double delta) : A_(A), delta_(delta) {
  if (A.rows() != 2 || A.cols() != 2) throw Error(Errc::InvalidArgument, "perturbed cat is two dimensional");
  Ainv_ = A.inverse();
  for (Eigen::Index i = 0; i < Ainv_.size(); ++i) Ainv_.data()[i] = std::round(Ainv_.data()[i]);
  domain_.period = {1.0, 1.0};
}

Vec PerturbedCat::lift(const Vec& x) const {
  Vec h = x;
  h(0) += delta_ / kTwoPi * std::sin(kTwoPi * x(1));
  return A_ * h;
}

Mat PerturbedCat::jacobian(const Vec& x) const {
  Mat dh = Mat::Identity(2, 2);
  dh(0, 1) = delta_ * std::cos(kTwoPi * x(1));
  return A_ * dh;
}

Vec PerturbedCat::inverse_raw(const Vec& y, BranchId b) const {
  if (b != BranchId{}) throw Error(Errc::NoSuchBranch, "invertible system has the single branch 0");
  Vec h = Ainv_ * y;
  h(0) -= delta_ / kTwoPi * std::sin(kTwoPi * h(1));
  return h;
}

// ---- diagonal (+cubic) map on R^m

DiagonalCubic::DiagonalCubic(const Vec& diag, double c) : diag_(diag), c_(c) {
  for (Eigen::Index i = 0; i < diag.size(); ++i)
    if (diag(i) <= 0) throw Error(Errc::InvalidArgument, "diagonal entries must be positive");
  if (c < 0) throw Error(Errc::InvalidArgument, "cubic coefficient must be nonnegative");
  domain_.period.assign(static_cast<size_t>(diag.size()), 0.0);
}

Vec DiagonalCubic::lift(const Vec& x) const {
  return diag_.cwiseProduct(x) + c_ * x.cwiseProduct(x).cwiseProduct(x);
}

Mat DiagonalCubic::jacobian(const Vec& x) const {
  Vec d = diag_ + 3.0 * c_ * x.cwiseProduct(x);
  return d.asDiagonal();
}

Vec DiagonalCubic::inverse_raw(const Vec& y, BranchId b) const {
  if (b != BranchId{}) throw Error(Errc::NoSuchBranch, "invertible system has the single branch 0");
  Vec x(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    double v = y(i) / diag_(i);
    if (c_ > 0) {
      // monotone cubic, Newton from the linear guess
      for (int it = 0; it < 100; ++it) {
        double g = diag_(i) * v + c_ * v * v * v - y(i);
        double dg = diag_(i) + 3 * c_ * v * v;
        double dv = g / dg;
        v -= dv;
        if (std::abs(dv) <= 1e-16 * (1 + std::abs(v))) break;
      }
    }
    x(i) = v;
  }
  return x;
}

// ---- Viana

VianaMap::VianaMap(int d, double a0, double alpha) : d_(d), a0_(a0), alpha_(alpha) {
  if (d < 2) throw Error(Errc::InvalidArgument, "degree must be >= 2");
  domain_.period = {1.0, 0.0};
  beta = 1.0;
  a = 3.0;
  K = 10.0;
  axiom_metric_scale = 0.25;
}

Vec VianaMap::lift(const Vec& x) const {
  Vec y(2);
  // d * theta shifts log2(d) bits out of the mantissa; left alone every double orbit lands on theta = 0
  // within ~13 steps. The vacated bits are refilled from a hash of x, so step stays a function of x and
  // orbits are pseudo-orbits at the rounding level.
  const double th = d_ * x(0);
  const double fl = std::floor(th);
  uint64_t h = std::bit_cast<uint64_t>(x(0)) ^ (std::bit_cast<uint64_t>(x(1)) * 0x9e3779b97f4a7c15ULL);
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ULL;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebULL;
  h ^= h >> 31;
  const double u = static_cast<double>(h >> 11) * 0x1p-53;
  const double f = (th - fl) + u * (std::nextafter(th, fl + 2.0) - th);
  y(0) = f < 1.0 ? f : 0.0;
  y(1) = a0_ + alpha_ * std::sin(kTwoPi * x(0)) - x(1) * x(1);
  return y;
}

Mat VianaMap::jacobian(const Vec& x) const {
  Mat J(2, 2);
  J << d_, 0, kTwoPi * alpha_ * std::cos(kTwoPi * x(0)), -2.0 * x(1);
  return J;
}

std::vector<BranchId> VianaMap::branches(const Vec& y) const {
  std::vector<BranchId> out;
  double th = wrap1(y(0), 1.0);
  for (int k = 0; k < d_; ++k) {
    double t0 = (th + k) / d_;
    double s = a0_ + alpha_ * std::sin(kTwoPi * t0) - y(1);
    if (s > 0) {
      out.push_back({k, +1});
      out.push_back({k, -1});
    }
  }
  return out;
}

Vec VianaMap::inverse_raw(const Vec& y, BranchId b) const {
  if (b.digit < 0 || b.digit >= d_ || (b.sign != 1 && b.sign != -1))
    throw Error(Errc::NoSuchBranch, "Viana branch needs digit in [0,d) and sign +-1");
  double th = (wrap1(y(0), 1.0) + b.digit) / d_;
  double s = a0_ + alpha_ * std::sin(kTwoPi * th) - y(1);
  if (s < 0) throw Error(Errc::BranchDomainViolation, "no real preimage on this branch", 0, s);
  Vec x(2);
  x(0) = th;
  x(1) = b.sign * std::sqrt(s);
  return x;
}

BranchId VianaMap::branch_of(const Vec& x) const {
  double th = wrap1(x(0), 1.0);
  int k = static_cast<int>(std::floor(th * d_));
  if (k >= d_) k = d_ - 1;
  if (k < 0) k = 0;
  return {k, x(1) >= 0 ? 1 : -1};
}

// ---- windows

OrbitWindow extend_window(const SystemModel& m, const Vec& seed, int n_fwd, int n_bwd,
                          const std::vector<BranchId>& branches) {
  if (n_fwd < 0 || n_bwd < 0) throw Error(Errc::InvalidArgument, "negative window length");
  if (static_cast<int>(branches.size()) != n_bwd)
    throw Error(Errc::InvalidArgument, "need one branch per backward step");
  if (seed.size() != m.dim()) throw Error(Errc::InvalidArgument, "seed has wrong dimension");
  OrbitWindow w;
  w.nb = n_bwd;
  w.nf = n_fwd;
  w.tol = m.tol;
  w.pts.assign(static_cast<size_t>(n_bwd + n_fwd + 1), Vec());
  w.br.assign(static_cast<size_t>(n_bwd), BranchId{});
  Vec x = m.wrap(seed);
  if (m.singular_distance(x) <= 0) throw Error(Errc::SingularEncountered, "seed is singular", 0);
  w.pts[static_cast<size_t>(n_bwd)] = x;
  for (int n = 0; n < n_fwd; ++n) {
    x = m.step(x);
    if (m.singular_distance(x) <= 0)
      throw Error(Errc::SingularEncountered, "forward iterate hits the singular set", n + 1);
    w.pts[static_cast<size_t>(n_bwd + n + 1)] = x;
  }
  x = w.pts[static_cast<size_t>(n_bwd)];
  for (int k = 0; k < n_bwd; ++k) {
    BranchId b = branches[static_cast<size_t>(k)];
    x = m.inverse_branch(x, b);
    int n = -(k + 1);
    if (m.singular_distance(x) <= 0)
      throw Error(Errc::SingularEncountered, "backward iterate hits the singular set", n);
    w.pts[static_cast<size_t>(n + n_bwd)] = x;
    w.br[static_cast<size_t>(n + n_bwd)] = b;
  }
  return w;
}

OrbitWindow random_window(const SystemModel& m, const Vec& seed, int n_fwd, int n_bwd, std::mt19937_64& rng) {
  // random backward walk; dead ends (points outside f(M)) are backtracked
  struct Frame {
    Vec y;
    std::vector<BranchId> opts;
    size_t next = 0;
  };
  auto make = [&](const Vec& y) {
    Frame f{y, m.branches(y), 0};
    std::shuffle(f.opts.begin(), f.opts.end(), rng);
    return f;
  };
  std::vector<Frame> st;
  std::vector<BranchId> br;
  st.push_back(make(m.wrap(seed)));
  long budget = 64L * (n_bwd + 1);
  while (static_cast<int>(br.size()) < n_bwd) {
    Frame& top = st.back();
    if (top.next >= top.opts.size() || --budget < 0) {
      if (st.size() == 1 || budget < 0)
        throw Error(Errc::BranchDomainViolation, "no valid inverse branch", -static_cast<long>(br.size()));
      st.pop_back();
      br.pop_back();
      continue;
    }
    BranchId b = top.opts[top.next++];
    Vec x = m.inverse_branch(top.y, b);
    br.push_back(b);
    st.push_back(make(x));
  }
  return extend_window(m, seed, n_fwd, n_bwd, br);
}

OrbitWindow shift_window(const SystemModel& m, const OrbitWindow& w, int k) {
  if (w.nf - k < 0 || w.nb + k < 0) throw Error(Errc::InvalidArgument, "shift leaves the window");
  OrbitWindow r = w;
  r.nb = w.nb + k;
  r.nf = w.nf - k;
  if (k >= 0) {
    for (int n = 0; n < k; ++n) r.br.push_back(m.branch_of(w.x(n)));
  } else {
    r.br.resize(static_cast<size_t>(r.nb));
  }
  return r;
}

double rho(const SystemModel& m, const OrbitWindow& w) {
  if (w.nb < 1 || w.nf < 1) throw Error(Errc::InvalidArgument, "rho needs one step on both sides");
  return std::min({m.singular_distance(w.x(-1)), m.singular_distance(w.x(0)), m.singular_distance(w.x(1))});
}

WindowCheck check_window(const SystemModel& m, const OrbitWindow& w) {
  WindowCheck c;
  for (int n = -w.nb; n < w.nf; ++n) {
    double r = m.dist(m.step(w.x(n)), w.x(n + 1));
    c.max_forward_residual = std::max(c.max_forward_residual, r);
  }
  for (int n = -w.nb; n < 0; ++n) {
    double r = m.dist(m.inverse_branch(w.x(n + 1), w.branch(n)), w.x(n));
    c.max_branch_residual = std::max(c.max_branch_residual, r);
  }
  c.ok = c.max_forward_residual <= w.tol && c.max_branch_residual <= w.tol;
  return c;
}

// ---- axioms

AxiomReport verify_axioms(const SystemModel& m, const std::vector<Vec>& samples, double a, double K,
                          uint64_t seed) {
  AxiomReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  const double s = m.axiom_metric_scale;
  const int dim = m.dim();
  auto rnd_dir = [&]() {
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = U(rng);
    double nv = v.norm();
    return nv > 0 ? Vec(v / nv) : Vec(Vec::Unit(dim, 0));
  };
  for (size_t idx = 0; idx < samples.size(); ++idx) {
    const Vec x = m.wrap(samples[idx]);
    ++rep.samples;
    double dx = m.singular_distance(x);
    if (dx <= 0) {
      ++rep.fail;
      rep.failed_samples.push_back(static_cast<long>(idx));
      continue;
    }
    Vec fx = m.step(x);
    double dfx = m.singular_distance(fx);
    double ds = s * dx;
    double lo = std::pow(ds, a) / K;
    double hi = K * std::pow(ds, -a);
    // ball radius of (A5): quadratic in the distance so inverse branches stay defined
    double dmin = std::min({1.0, dx, dfx > 0 ? dfx : dx});
    double r = 0.25 * dmin * dmin;
    BranchId g = m.branch_of(x);

    // E_x radius is kept above float resolution at f(x)
    double rz = std::max(r, 64 * 2.220446049250313e-16 * (1.0 + fx.norm()));
    std::vector<Vec> ys{x}, zs{fx};
    for (int j = 0; j < 6; ++j) {
      ys.push_back(x + r * U(rng) * rnd_dir());
      zs.push_back(fx + rz * U(rng) * rnd_dir());
    }
    bool bad_dfn = false, bad_dgn = false, bad_dfh = false, bad_dgh = false;
    std::vector<Mat> dfs, dgs;
    for (const Vec& y : ys) {
      Mat J = m.jacobian(y);
      double nj = opnorm(J);
      rep.worst_df_upper = std::max(rep.worst_df_upper, nj / hi);
      rep.worst_df_lower = std::max(rep.worst_df_lower, lo / nj);
      if (nj > hi || nj < lo) bad_dfn = true;
      dfs.push_back(J);
    }
    for (const Vec& z : zs) {
      Mat Jg;
      try {
        Vec gz = m.inverse_raw(z, g);
        Mat J = m.jacobian(gz);
        if (std::abs(J.determinant()) == 0) throw Error(Errc::SingularPoint, "critical preimage");
        Jg = J.inverse();
      } catch (const Error&) {
        // outside the branch domain; f(x) itself is always inside
        if (dgs.empty()) bad_dgn = true;
        dgs.push_back(Mat());
        continue;
      }
      double ng = opnorm(Jg);
      rep.worst_dg_upper = std::max(rep.worst_dg_upper, ng / hi);
      rep.worst_dg_lower = std::max(rep.worst_dg_lower, lo / ng);
      if (ng > hi || ng < lo) bad_dgn = true;
      dgs.push_back(Jg);
    }
    for (size_t i = 0; i < ys.size(); ++i)
      for (size_t j = i + 1; j < ys.size(); ++j) {
        double dd = (ys[i] - ys[j]).norm();
        if (dd <= 0) continue;
        double bound = K * std::pow(ds, -a) * std::pow(s * dd, m.beta);
        double ratio = opnorm(dfs[i] - dfs[j]) / bound;
        rep.worst_df_holder = std::max(rep.worst_df_holder, ratio);
        if (ratio > 1) bad_dfh = true;
      }
    for (size_t i = 0; i < zs.size(); ++i)
      for (size_t j = i + 1; j < zs.size(); ++j) {
        if (dgs[i].size() == 0 || dgs[j].size() == 0) continue;
        double dd = (zs[i] - zs[j]).norm();
        if (dd <= 0) continue;
        double bound = K * std::pow(ds, -a) * std::pow(s * dd, m.beta);
        double ratio = opnorm(dgs[i] - dgs[j]) / bound;
        rep.worst_dg_holder = std::max(rep.worst_dg_holder, ratio);
        if (ratio > 1) bad_dgh = true;
      }
    rep.fail_df_norm += bad_dfn;
    rep.fail_dg_norm += bad_dgn;
    rep.fail_df_holder += bad_dfh;
    rep.fail_dg_holder += bad_dgh;
    if (bad_dfn || bad_dgn || bad_dfh || bad_dgh) {
      ++rep.fail;
      rep.failed_samples.push_back(static_cast<long>(idx));
    } else {
      ++rep.pass;
    }
  }
  return rep;
}

}  // namespace nuh
