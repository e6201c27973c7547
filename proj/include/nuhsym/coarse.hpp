#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nuhsym/charts.hpp"

namespace nuh {

struct CellIndex {
  std::array<int, 3> k{};         // singular-distance scale at x_{-1}, x_0, x_1
  std::array<int, 3> l{};         // |C^-1| scale
  std::array<int64_t, 3> a{};     // spatial cell ids
  int b = 0;                      // Q scale
  int d = 0;                      // stable dimension
  int j = 0;                      // q scale
  bool saturated = false;         // some scale was clamped at 0

  bool operator==(const CellIndex& o) const {
    return k == o.k && l == o.l && a == o.a && b == o.b && d == o.d && j == o.j;
  }
  bool operator<(const CellIndex& o) const;
  std::string label() const;
};

// index n with x in [e^{-n-1}, e^{-n}); clamped at 0 (sets *sat)
int scale_down(double x, bool* sat = nullptr);
// index n with x in [e^n, e^{n+1}); clamped at 0
int scale_up(double x, bool* sat = nullptr);

// fixed lattice of balls: cubes of side 2r/sqrt(m), periodic axes split evenly
struct SpatialLattice {
  double radius = 0.05;
  int64_t cell_id(const SystemModel& m, const Vec& x) const;
};

struct QuantizeInput {
  std::array<double, 3> dist{};
  std::array<double, 3> inv_C{};
  std::array<Vec, 3> pos;
  double Q = 1.0;
  int ds = 0;
  double q = 1.0;
};
CellIndex quantize(const SystemModel& m, const QuantizeInput& in, const SpatialLattice& lat = {});

struct Vertex {
  DoubleChart chart;
  CellIndex cell;
  long sample = -1;  // originating sample
};

struct GpoGraph {
  double eps = 0.0;
  std::vector<Vertex> vertices;
  std::vector<std::pair<int, int>> edges;  // sorted
  std::vector<std::vector<int>> out, in;
  std::vector<bool> core;   // lies in a strongly connected component with an edge
  std::vector<int> origin;  // index in the unpruned graph

  int size() const { return static_cast<int>(vertices.size()); }
  void rebuild_adjacency();
  int max_out_degree() const;
  int max_in_degree() const;
};

struct AlphabetOptions {
  int band = 8;            // charts per sample: q-series run over -band..band
  SpatialLattice lattice;  // radius 0.05
  SeriesOptions series;
};

struct AlphabetStats {
  long samples = 0;
  long rejected = 0;  // windows where hyperbolicity data failed
  long not_adapted = 0;
  long cells = 0;
  long dropped_by_net = 0;
};

// streaming construction; each added window contributes its chart at index 0
class AlphabetBuilder {
 public:
  AlphabetBuilder(const SystemModel& m, const ChartParams& p, const AlphabetOptions& o = {});
  // returns false when the sample was rejected
  bool add(const OrbitWindow& w, long sample_id);
  // absorb another builder's candidates (order independent)
  void merge(AlphabetBuilder&& o);
  std::vector<Vertex> finish();
  const AlphabetStats& stats() const { return stats_; }

 private:
  const SystemModel& m_;
  ChartParams p_;
  AlphabetOptions o_;
  std::vector<Vertex> cand_;
  std::vector<uint64_t> hash_;
  AlphabetStats stats_;
};

std::vector<Vertex> build_alphabet(const SystemModel& m, const std::vector<OrbitWindow>& samples,
                                   const ChartParams& p, const AlphabetOptions& o = {},
                                   AlphabetStats* stats = nullptr);

double net_spacing(const ChartParams& p, int j);

// chart centres bucketed on a grid of spacing >= h (periodic axes split evenly)
class CenterGrid {
 public:
  CenterGrid(const SystemModel& m, double h);
  void insert(const Vec& x, int id);
  // ids in the 3^m cells around x, sorted
  std::vector<int> near(const Vec& x) const;

 private:
  std::vector<int64_t> cell(const Vec& x) const;
  uint64_t key(const std::vector<int64_t>& c) const;
  const SystemModel& m_;
  double h_;
  std::vector<int64_t> n_;  // cells per periodic axis, 0 when unbounded
  std::unordered_map<uint64_t, std::vector<int>> buckets_;
};

GpoGraph build_graph(const SystemModel& m, const std::vector<Vertex>& alphabet, const ChartParams& p);
// all-pairs reference, quadratic
GpoGraph build_graph_bruteforce(const SystemModel& m, const std::vector<Vertex>& alphabet, const ChartParams& p);

// keeps vertices on bi-infinite paths: reachable from and reaching a cycle
GpoGraph prune_relevant(const GpoGraph& g);

// strongly connected components (Tarjan); comp[v] in 0..count-1
struct SccResult {
  std::vector<int> comp;
  int count = 0;
  std::vector<bool> nontrivial;  // has an edge inside
};
SccResult strongly_connected(const std::vector<std::vector<int>>& out);

// fraction of the charts in seq that some alphabet vertex overlaps at the chart's own q
double sufficiency_fraction(const SystemModel& m, const GpoGraph& g, const ChartSequence& seq, const ChartParams& p);

uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ULL);

}  // namespace nuh
