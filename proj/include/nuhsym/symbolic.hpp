#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "nuhsym/coarse.hpp"
#include "nuhsym/gtransform.hpp"

namespace nuh {

using BigCount = boost::multiprecision::cpp_int;

struct Tms {
  int n = 0;
  std::vector<std::vector<int>> out;  // sorted successor lists

  static Tms from_graph(const GpoGraph& g);
  static Tms from_edges(int n, const std::vector<std::pair<int, int>>& edges);
  static Tms full_shift(int k);
  std::vector<std::vector<int>> in() const;
  long edge_count() const;
};

// trace of A^n
BigCount count_closed_paths(const Tms& t, int n);

// simple cycles of length n, each listed once from its smallest vertex
struct CycleEnumeration {
  std::vector<std::vector<int>> cycles;
  bool budget_exhausted = false;
};
CycleEnumeration simple_cycles(const Tms& t, int n, long budget = 1000000);

struct PeriodicOrbit {
  std::vector<Vec> points;  // y, f(y), ..., f^{n-1}(y)
  int period = 0;           // minimal period
  double closing_error = 0.0;
  std::vector<int> cycle;
};

struct PeriodicReport {
  int n = 0;
  long cycles_found = 0;
  long rejected = 0;        // shadowing failed or the orbit did not close
  long duplicates = 0;
  bool upper_bound_only = false;
  std::vector<PeriodicOrbit> orbits;  // distinct genuine orbits
  std::map<std::string, long> reject_reasons;
};

struct PeriodicOptions {
  double dedup_tol = 1e-8;
  long budget = 1000000;
  ManifoldOptions manifold{9, 400, 1e-13, true, true};
};

PeriodicReport enumerate_periodic_points(const SystemModel& m, const GpoGraph& g, int n, const ChartParams& p,
                                         const PeriodicOptions& o = {});

// distinct points y with f^n(y) = y among the orbits of several reports (divisor periods included)
long count_periodic_points(const SystemModel& m, const std::vector<const PeriodicReport*>& reports, int n,
                           double tol);

struct EntropyReport {
  double entropy = 0.0;              // max over nontrivial components
  int largest_component = -1;
  double largest_component_entropy = 0.0;
  std::vector<int> component_sizes;  // nontrivial components only
  std::vector<double> component_entropy;
  int iterations = 0;
};
EntropyReport entropy_estimate(const Tms& t, double tol = 1e-8);
double spectral_radius(const Tms& t, const std::vector<int>& vertices, double tol, int* iterations = nullptr);

// ---- Markov cover on sampled data

struct Coding {
  long sample = -1;
  std::vector<int> symbols;
  int zero = 0;  // position of time 0
};

struct CoverCell {
  int symbol = -1;
  std::vector<long> members;  // sorted sample ids
};

std::vector<CoverCell> build_cover(const std::vector<Coding>& codings);
// number of cells meeting each cell (itself included)
std::vector<int> local_finiteness(const std::vector<CoverCell>& cells);

struct RefinedCell {
  std::vector<long> members;
  std::vector<int> cover;  // indices of the cover cells containing every member
};

// class ids of a sample's stable/unstable set inside a cover cell
using MembershipOracle = std::function<long(long sample, int cell)>;

std::vector<RefinedCell> refine_cover(const std::vector<CoverCell>& cells, const MembershipOracle& s_class,
                                      const MembershipOracle& u_class);

bool affiliated(const RefinedCell& r1, const RefinedCell& r2, const std::vector<CoverCell>& cells);
// number of refined cells affiliated with each one
std::vector<int> affiliation_counts(const std::vector<RefinedCell>& part, const std::vector<CoverCell>& cells);

// ---- topological Markov flow

struct Suspension {
  Tms base;
  std::vector<double> roof;
  double r_min = 0.0, r_max = 0.0;
  Suspension(Tms t, std::vector<double> r);
};

struct FlowState {
  std::vector<int> path;  // a finite piece of a sequence in the base
  long pos = 0;           // index of the current symbol v_0
  double t = 0.0;         // 0 <= t < r(v_0)
};

FlowState suspension_step(const Suspension& s, const FlowState& x, double tau);

}  // namespace nuh
