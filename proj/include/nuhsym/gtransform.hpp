#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nuhsym/charts.hpp"

namespace nuh {

enum class GraphKind { S, U };

// Representing function G : [-p,p]^d -> R^c sampled on a tensor grid (node 0 of axis i at -p).
class AdmissibleGraph {
 public:
  AdmissibleGraph() = default;
  AdmissibleGraph(GraphKind kind, int d, int c, double p, double eta, double delta, int nodes);

  GraphKind kind = GraphKind::U;
  int d = 1;
  int c = 1;
  double p = 0.0;
  double eta = 0.0;
  double delta = 1.0 / 3.0;
  int nodes = 33;
  std::vector<Vec> values;  // size nodes^d, flat index sum_i k_i nodes^i

  size_t node_count() const { return values.size(); }
  double spacing() const { return nodes > 1 ? 2.0 * p / (nodes - 1) : 0.0; }
  Vec node(size_t idx) const;
  // multilinear interpolation, clamped to the cube
  Vec eval(const Vec& v) const;
  // derivative at a node by grid differences (c x d)
  Mat node_derivative(size_t idx) const;
  // derivative at 0 using step = spacing
  Mat d0() const;

  void fill(const std::function<Vec(const Vec&)>& f);
  static AdmissibleGraph constant(GraphKind kind, int d, int c, double p, double eta, double delta, int nodes,
                                  const Vec& value);
};

double c0_distance(const AdmissibleGraph& a, const AdmissibleGraph& b);
double c1_distance(const AdmissibleGraph& a, const AdmissibleGraph& b);

struct AdmissibilityReport {
  double G0 = 0.0, am1_bound = 0.0;
  double dG0 = 0.0, am2_bound = 0.0;
  double dG_C0 = 0.0, hol = 0.0, am3 = 0.0;  // am3 = dG_C0 + hol, bound 1/2
  bool am1 = true, am2 = true, am3_ok = true;
  bool ok() const { return am1 && am2 && am3_ok; }
  // measured / bound, the largest of the three
  double worst_ratio() const;
};
AdmissibilityReport validate_admissible(const AdmissibleGraph& g, double tol, double am1_factor = 1e-3);

// Map close to diag(D1, D2) in (graph domain, codomain) coordinates: z -> D z + H(z).
struct GraphTransformCtx {
  int d = 1, c = 1;
  Mat D1, D2;
  std::function<Vec(const Vec&)> H;   // z = (x, y), returns (h1, h2)
  std::function<Mat(const Vec&)> dH;  // optional; grid checks use differences otherwise
  double p = 0, eta = 0, p_new = 0, eta_new = 0;
  double chi = 0.5, eps = 0.05;
  double am1_factor = 1e-3;
  int nodes = 33;
};

struct CtxReport {
  bool gt1 = true, gt2 = true, gt3 = true;
  double D1inv_norm = 0, D2_norm = 0, H0 = 0, dH_eta = 0, dH_2p = 0, hol = 0;
  bool ok() const { return gt1 && gt2 && gt3; }
};
CtxReport check_ctx(const GraphTransformCtx& ctx, int samples = 15);

struct InvertResult {
  Vec v;
  int iterations = 0;
};
InvertResult invert_psi(const GraphTransformCtx& ctx, const AdmissibleGraph& g, const Vec& target, double tol);

// throws AdmissibilityLost when the output fails validation by more than 10%
AdmissibleGraph apply_graph_transform(const GraphTransformCtx& ctx, const AdmissibleGraph& g,
                                      double tol = 1e-13, bool validate = true);

struct Intersection {
  Vec v1;     // coordinates on the u-graph domain
  Vec v2;     // coordinates on the s-graph domain
  Vec chart;  // (s, u) chart coordinates
  int iterations = 0;
};
Intersection intersect_graphs(const AdmissibleGraph& u, const AdmissibleGraph& s, double tol);

// context for the edge v -> w: forward for u-graphs, backward (w -> v) for s-graphs
GraphTransformCtx edge_ctx(const SystemModel& m, const DoubleChart& v, const DoubleChart& w, GraphKind kind,
                           const ChartParams& par, int nodes);

struct ManifoldOptions {
  int nodes = 33;
  int n_iters = 200;
  double tol = 1e-12;
  bool periodic = false;  // chain closes up: last -> first is an edge
  bool validate = true;
};

struct ManifoldResult {
  AdmissibleGraph graph;
  double certificate = 0.0;  // C0 distance of the last two iterates (or of two seeds)
  int transforms = 0;
};
// side U: graph at chain.back() (at chain[0] when periodic); side S: graph at chain[0]
ManifoldResult local_manifold(const SystemModel& m, const std::vector<DoubleChart>& chain, GraphKind side,
                              const ChartParams& par, const ManifoldOptions& o = {});

struct ShadowResult {
  OrbitWindow window;  // centred at the middle chart (index 0 for periodic chains)
  int middle = 0;
  Vec chart_point;
  double s_certificate = 0.0, u_certificate = 0.0;
  double max_chart_ratio = 0.0;  // max |Psi_n^-1 x_n| / (20 Q_n)
};
ShadowResult shadow(const SystemModel& m, const std::vector<DoubleChart>& gpo, const ChartParams& par,
                    const ManifoldOptions& o = {});
// gpo is a cycle v_0 -> ... -> v_{n-1} -> v_0; returns the periodic point at v_0 and its orbit
ShadowResult shadow_periodic(const SystemModel& m, const std::vector<DoubleChart>& cycle, const ChartParams& par,
                             const ManifoldOptions& o = {});

std::string graph_csv(const AdmissibleGraph& g);

}  // namespace nuh
