#pragma once

#include <array>
#include <vector>

#include "nuhsym/cocycle.hpp"

namespace nuh {

enum class SizePolicy { Paper, Practical };

struct ChartParams {
  double eps = 0.1;
  double beta = 1.0;
  double a = 1.0;
  double chi = 0.5;
  SizePolicy policy = SizePolicy::Practical;
  // practical Q = c * min(|C^-1|^-e1, rho^e2)
  double c = 0.25;
  double e1 = 2.0;
  double e2 = 2.0;
  // overlap bound kappa * (eta1 eta2)^power; the theoretical policy uses kappa = 1, power = 4
  double overlap_kappa = 1.0;
  double overlap_power = 4.0;
  // AM1 constant for admissible graphs (paper 1e-3)
  double am1_factor = 1e-3;
  // spacing of the net inside one quantization cell (practical mode)
  double net_spacing = 1e-3;

  static ChartParams paper(double eps, double beta, double a, double chi);
};

// Elements of I_eps are e^{-eps n / 3}; we carry the integer n ("level").
double level_value(long n, double eps);
inline double level_log(long n, double eps) { return -eps * static_cast<double>(n) / 3.0; }
// smallest n with e^{-eps n/3} <= x, from log x
long level_floor_log(double logx, double eps);
// nearest level of a log value already in I_eps (undoes roundoff)
long level_round_log(double logx, double eps);

// integer n with e^{-eps n} < eps <= e^{-eps(n-1)}
long delta_epsilon_n(double eps);
double delta_epsilon(double eps);
// delta_eps as a level (3n)
inline long delta_level(double eps) { return 3 * delta_epsilon_n(eps); }

double i_epsilon_floor(double x, double eps);

struct QValue {
  long level = 0;
  double log_value = 0.0;
  double value = 0.0;  // 0 when it underflows
  bool underflow = false;
};
QValue compute_Q(double inv_C_norm, double rho, const ChartParams& p);

struct QSeries {
  std::vector<double> log_qs, log_qu, log_q;
  std::vector<double> qs() const;
  std::vector<double> qu() const;
  std::vector<double> q() const;
};
// on natural logs of Q; the greedy recursions with delta_eps Q at the open ends
QSeries q_series_log(const std::vector<double>& logQ, double eps);
QSeries q_series(const std::vector<double>& Q, double eps);

// Chart at x_0 of a window: centre triple x_{-1}, x_0, x_1 and the C matrices there.
struct PesinChart {
  OrbitWindow window;  // nb = nf = 1
  std::array<Mat, 3> C;
  double inv_C_norm = 0.0;
  double rho = 1.0;
  long q_level = 0;
  int ds = 0, du = 0;
  BranchId back;     // branch recorded from x_0 to x_{-1}
  BranchId own;      // branch_of(x_0), used for the inverse chart map

  const Vec& x(int i) const { return window.x(i); }
  double Q(double eps) const { return level_value(q_level, eps); }
};

struct DoubleChart {
  PesinChart chart;
  long ps = 0;  // levels
  long pu = 0;
  double ps_value(double eps) const { return level_value(ps, eps); }
  double pu_value(double eps) const { return level_value(pu, eps); }
  long eta_level() const { return ps > pu ? ps : pu; }  // level of ps ^ pu
};

// wrap(x0 + C v)
Vec chart_psi(const SystemModel& m, const PesinChart& c, const Vec& v);
Vec chart_psi_inv(const SystemModel& m, const PesinChart& c, const Vec& y);

// F = Psi_dst^-1 o f o Psi_src and its inverse through the branch g of src's centre
Vec chart_forward(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& v);
Vec chart_backward(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& w);
Mat chart_forward_jac(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& v);
Mat chart_backward_jac(const SystemModel& m, const PesinChart& src, const PesinChart& dst, const Vec& w);

struct GridSpec {
  double radius = 0.1;
  int nodes = 41;  // per axis, cube grid clipped to the ball
};

struct FDecomposition {
  Mat D, Ds, Du;
  double H_C0 = 0.0;
  double dH_C0 = 0.0;
  double hol = 0.0;  // lower bound of the beta/2 Holder seminorm of dH
  bool below_eps = false;
  double radius = 0.0;
};
FDecomposition decompose_F(const SystemModel& m, const PesinChart& src, const PesinChart& dst,
                           const GridSpec& grid, const ChartParams& p);

// bound used by the overlap test
double overlap_bound(double eta1, double eta2, const ChartParams& p);
bool overlaps_raw(const SystemModel& m, const Vec& x1, const Mat& C1, double eta1, const Vec& x2,
                  const Mat& C2, double eta2, const ChartParams& p);
bool overlaps(const SystemModel& m, const PesinChart& c1, double eta1, const PesinChart& c2, double eta2,
              const ChartParams& p);

bool gpo1(const SystemModel& m, const DoubleChart& v, const DoubleChart& w, const ChartParams& p);
bool gpo2(const DoubleChart& v, const DoubleChart& w, const ChartParams& p);
bool edge_exists(const SystemModel& m, const DoubleChart& v, const DoubleChart& w, const ChartParams& p);

struct NuhSharpReport {
  double log_dist_average = 0.0;  // Birkhoff average of log d(x_n, S)
  double partial_sum_slope = 0.0;
  bool hits_singular = false;
  bool adapted = true;
  double max_q_forward = 0.0;
  double max_q_backward = 0.0;
};
NuhSharpReport check_nuh_sharp(const SystemModel& m, const OrbitWindow& w, const ChartParams& p, int band = 8);

// Charts and canonical double charts for indices -band..band of one window.
struct ChartSequence {
  int band = 0;
  std::vector<PesinChart> charts;   // charts[k + band]
  std::vector<LyapunovData> data;   // at the chart centres
  QSeries q;
  std::vector<DoubleChart> doubles;  // canonical (q^s, q^u)
};
ChartSequence build_chart_sequence(const SystemModel& m, const OrbitWindow& w, const ChartParams& p, int band,
                                   const SeriesOptions& o = {});

// window restricted to x_{k-r}..x_{k+r}, recentred at k
OrbitWindow sub_window(const SystemModel& m, const OrbitWindow& w, int k, int r);

}  // namespace nuh
