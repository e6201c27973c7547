#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "nuhsym/errors.hpp"
#include "nuhsym/linalg.hpp"

namespace nuh {

// Invertible systems use the single id {0,0}. Viana maps use (base digit, sign of t).
struct BranchId {
  int digit = 0;
  int sign = 0;
  bool operator==(const BranchId& o) const { return digit == o.digit && sign == o.sign; }
  bool operator!=(const BranchId& o) const { return !(*this == o); }
};

// period[i] > 0 means coordinate i lives on R/period*Z, 0 means unbounded
struct Domain {
  std::vector<double> period;
};

class SystemModel {
 public:
  virtual ~SystemModel() = default;

  virtual std::string name() const = 0;
  int dim() const { return static_cast<int>(domain_.period.size()); }
  const Domain& domain() const { return domain_; }

  // f before wrapping; a lift of the map to the universal cover
  virtual Vec lift(const Vec& x) const = 0;
  virtual Mat jacobian(const Vec& x) const = 0;
  virtual std::vector<BranchId> branches(const Vec& y) const = 0;
  // raw inverse; throws NoSuchBranch / BranchDomainViolation
  virtual Vec inverse_raw(const Vec& y, BranchId b) const = 0;
  // the branch g with g(f(x)) = x
  virtual BranchId branch_of(const Vec& x) const = 0;
  virtual double singular_distance(const Vec&) const { return 1.0; }
  // chart domains must stay on one sheet of the map (Viana: same sign of t)
  virtual bool same_sheet(const Vec&, const Vec&) const { return true; }

  Vec step(const Vec& x) const;
  Mat derivative(const Vec& x) const;
  Vec inverse_branch(const Vec& y, BranchId b) const;

  Vec wrap(const Vec& x) const;
  // shortest displacement from a to b (b - a, wrapped)
  Vec disp(const Vec& a, const Vec& b) const;
  double dist(const Vec& a, const Vec& b) const { return disp(a, b).norm(); }

  // smoothness parameters of (A5)-(A7)
  double beta = 1.0;
  double a = 1.0;
  double K = 1.0;
  double tol = 1e-10;
  // metric rescaling used by verify_axioms (multiply distances, then compare)
  double axiom_metric_scale = 1.0;

 protected:
  Domain domain_;
};

using ModelPtr = std::shared_ptr<const SystemModel>;

// integer toral automorphism x -> A x mod 1
class TorusAutomorphism : public SystemModel {
 public:
  explicit TorusAutomorphism(const Mat& A);
  std::string name() const override { return "torus_automorphism"; }
  Vec lift(const Vec& x) const override { return A_ * x; }
  Mat jacobian(const Vec&) const override { return A_; }
  std::vector<BranchId> branches(const Vec&) const override { return {BranchId{}}; }
  Vec inverse_raw(const Vec& y, BranchId b) const override;
  BranchId branch_of(const Vec&) const override { return {}; }
  const Mat& matrix() const { return A_; }

 private:
  Mat A_, Ainv_;
};

// f = A o h with the shear h(x,y) = (x + delta/(2 pi) sin(2 pi y), y); exact inverse
class PerturbedCat : public SystemModel {
 public:
  PerturbedCat(const Mat& A, double delta);
  std::string name() const override { return "perturbed_cat"; }
  Vec lift(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  std::vector<BranchId> branches(const Vec&) const override { return {BranchId{}}; }
  Vec inverse_raw(const Vec& y, BranchId b) const override;
  BranchId branch_of(const Vec&) const override { return {}; }
  double delta() const { return delta_; }

 private:
  Mat A_, Ainv_;
  double delta_;
};

// v -> M v + c * v^3 (componentwise cube) on R^m, M diagonal. c = 0 gives the linear map.
class DiagonalCubic : public SystemModel {
 public:
  DiagonalCubic(const Vec& diag, double c);
  std::string name() const override { return c_ == 0.0 ? "linear_diagonal" : "diagonal_cubic"; }
  Vec lift(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  std::vector<BranchId> branches(const Vec&) const override { return {BranchId{}}; }
  Vec inverse_raw(const Vec& y, BranchId b) const override;
  BranchId branch_of(const Vec&) const override { return {}; }

 private:
  Vec diag_;
  double c_;
};

// f(theta, t) = (d theta mod 1, a0 + alpha sin(2 pi theta) - t^2)
class VianaMap : public SystemModel {
 public:
  VianaMap(int d, double a0, double alpha);
  std::string name() const override { return "viana"; }
  Vec lift(const Vec& x) const override;
  Mat jacobian(const Vec& x) const override;
  std::vector<BranchId> branches(const Vec& y) const override;
  Vec inverse_raw(const Vec& y, BranchId b) const override;
  BranchId branch_of(const Vec& x) const override;
  double singular_distance(const Vec& x) const override { return std::abs(x(1)); }
  bool same_sheet(const Vec& x, const Vec& y) const override { return x(1) * y(1) > 0; }
  int degree() const { return d_; }
  double a0() const { return a0_; }
  double alpha() const { return alpha_; }

 private:
  int d_;
  double a0_, alpha_;
};

ModelPtr make_cat_map();

// Finite piece of a point of the natural extension: x_{-nb}..x_{nf} and the branches used backward.
struct OrbitWindow {
  int nb = 0;
  int nf = 0;
  std::vector<Vec> pts;       // pts[n + nb] = x_n
  std::vector<BranchId> br;   // br[n + nb] for n = -nb..-1, x_n = g_{br}(x_{n+1})
  double tol = 1e-10;

  const Vec& x(int n) const { return pts.at(static_cast<size_t>(n + nb)); }
  BranchId branch(int n) const { return br.at(static_cast<size_t>(n + nb)); }
  int size() const { return nb + nf + 1; }
  int half() const { return nb < nf ? nb : nf; }
};

Vec step(const SystemModel& m, const Vec& x);
Mat derivative(const SystemModel& m, const Vec& x);
Vec inverse_branch(const SystemModel& m, const Vec& y, BranchId b);

// branches[0] = b_{-1}, branches[1] = b_{-2}, ...
OrbitWindow extend_window(const SystemModel& m, const Vec& seed, int n_fwd, int n_bwd,
                          const std::vector<BranchId>& branches);
// backward branches drawn uniformly among the valid ones at each step
OrbitWindow random_window(const SystemModel& m, const Vec& seed, int n_fwd, int n_bwd, std::mt19937_64& rng);
// recentre by k (k may be negative); keeps the same points
OrbitWindow shift_window(const SystemModel& m, const OrbitWindow& w, int k);

double rho(const SystemModel& m, const OrbitWindow& w);

struct WindowCheck {
  bool ok = true;
  double max_forward_residual = 0.0;
  double max_branch_residual = 0.0;
};
WindowCheck check_window(const SystemModel& m, const OrbitWindow& w);

struct AxiomReport {
  long samples = 0;
  long pass = 0;
  long fail = 0;
  long fail_df_norm = 0;    // (A6) for df
  long fail_dg_norm = 0;    // (A6) for the inverse branch
  long fail_df_holder = 0;  // (A7) for df
  long fail_dg_holder = 0;  // (A7) for the inverse branch
  double worst_df_upper = 0.0;  // max of ||df|| / (K d^-a)
  double worst_df_lower = 0.0;  // max of (d^a / K) / ||df||
  double worst_dg_upper = 0.0;
  double worst_dg_lower = 0.0;
  double worst_df_holder = 0.0;
  double worst_dg_holder = 0.0;
  std::vector<long> failed_samples;
};

AxiomReport verify_axioms(const SystemModel& m, const std::vector<Vec>& samples, double a, double K,
                          uint64_t seed = 1);

}  // namespace nuh
