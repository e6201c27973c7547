#pragma once

#include <vector>

#include "nuhsym/systems.hpp"

namespace nuh {

struct Splitting {
  int ds = 0;
  int du = 0;
  Mat Es;  // m x ds, orthonormal columns
  Mat Eu;  // m x du
  double residual = 0.0;
};

struct SeriesResult {
  double value = 0.0;   // sqrt(2 sum e^{2n chi} |df^n v|^2)
  int terms = 0;        // truncation length
  double tail = 0.0;    // geometric tail estimate of the neglected sum
};

struct LyapunovData {
  double chi = 0.0;
  int ds = 0;
  int du = 0;
  Vec S;  // per stable basis vector
  Vec U;  // per unstable basis vector
  Mat C;  // columns: stable block then unstable block
  double inv_C_norm = 0.0;
  int trunc_s = 0;
  int trunc_u = 0;
  double tail_s = 0.0;
  double tail_u = 0.0;
  Mat Es, Eu;
};

struct ReducedDerivative {
  Mat D;
  Mat Ds, Du;
  double off_block = 0.0;
  double Ds_norm = 0.0;
  double Du_min_sv = 0.0;
};

struct SeriesOptions {
  double tol = 1e-13;       // relative to the n = 0 term
  double ratio_cap = 1e-3;  // divergent when fitted ratio >= 1 - ratio_cap
  int fit_len = 8;
};

// descending exponents over the forward half; the backward half serves as QR transient
std::vector<double> lyapunov_exponents(const SystemModel& m, const OrbitWindow& w);

// chi at half the smallest |exponent|
double default_chi(const std::vector<double>& exps);

// Frames along a whole window: E_u pushed forward from the left end, E_s pulled back from the right end.
class CocycleFrames {
 public:
  // require_gap: NotHyperbolic unless every |exponent| > chi. Without it the subspaces
  // are split by the sign of the exponent and chi only weights the series.
  CocycleFrames(const SystemModel& m, const OrbitWindow& w, double chi, bool require_gap = true);

  int ds() const { return ds_; }
  int du() const { return du_; }
  double chi() const { return chi_; }
  const std::vector<double>& exponents() const { return exps_; }
  const OrbitWindow& window() const { return w_; }

  Splitting split_at(int k) const;
  SeriesResult s_series(int k, const Vec& v, const SeriesOptions& o = {}) const;
  SeriesResult u_series(int k, const Vec& v, const SeriesOptions& o = {}) const;
  LyapunovData data_at(int k, const SeriesOptions& o = {}) const;
  ReducedDerivative reduce_at(int k, const SeriesOptions& o = {}) const;
  const Mat& jac(int k) const { return J_.at(static_cast<size_t>(k + w_.nb)); }
  const Mat& jac_inv(int k) const { return Ji_.at(static_cast<size_t>(k + w_.nb)); }

 private:
  Mat gram_s(int k, const SeriesOptions& o, int& terms, double& tail) const;
  Mat gram_u(int k, const SeriesOptions& o, int& terms, double& tail) const;

  OrbitWindow w_;
  double chi_;
  int m_, ds_ = 0, du_ = 0;
  std::vector<double> exps_;
  std::vector<Mat> J_, Ji_;  // J_[k+nb] = df at x_k, k = -nb..nf-1
  std::vector<Mat> Es_, Eu_;
  // projected one-step blocks: Bs_[j+nb] maps E_s(x_j) -> E_s(x_{j+1}), Bu_[j+nb] maps E_u(x_j) -> E_u(x_{j-1})
  std::vector<Mat> Bs_, Bu_;
  double residual_ = 0.0;
};

Splitting oseledets_split(const SystemModel& m, const OrbitWindow& w, double chi);
double s_norm(const SystemModel& m, const OrbitWindow& w, const Vec& v, double chi, double tol = 1e-13);
double u_norm(const SystemModel& m, const OrbitWindow& w, const Vec& v, double chi, double tol = 1e-13);
LyapunovData build_C(const SystemModel& m, const OrbitWindow& w, double chi, double tol = 1e-13);
// throws BlockBoundViolation when a block inequality fails
ReducedDerivative reduce(const SystemModel& m, const OrbitWindow& w, double chi, double tol = 1e-13);

}  // namespace nuh
