#pragma once

#include "dqnmesh/common.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <utility>
#include <vector>

namespace dqnmesh {

/// Static undirected communication graph over agents 0..N-1.
///
/// Edges are stored once as (i, j) with i < j, sorted. Construction rejects
/// self-loops, duplicates and out-of-range ids but not disconnected edge sets;
/// consumers that need connectivity (mixing weights, run loops) check it.
class CommGraph {
 public:
  using Edge = std::pair<int, int>;

  CommGraph() = default;
  CommGraph(int n_agents, std::vector<Edge> edges, std::uint64_t seed = 0);

  static CommGraph complete(int n_agents);
  static CommGraph path(int n_agents);
  static CommGraph star(int n_agents);

  int n_agents() const noexcept { return n_agents_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  std::uint64_t seed() const noexcept { return seed_; }

  /// Adjacent agents of i, ascending, excluding i itself.
  const std::vector<int>& neighbors(int i) const { return adjacency_.at(i); }
  int degree(int i) const { return static_cast<int>(adjacency_.at(i).size()); }
  bool has_edge(int i, int j) const;
  bool is_connected() const;

  nlohmann::json to_json() const;
  static CommGraph from_json(const nlohmann::json& j);

  friend bool operator==(const CommGraph& a, const CommGraph& b) {
    return a.n_agents_ == b.n_agents_ && a.edges_ == b.edges_;
  }

 private:
  int n_agents_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::uint64_t seed_ = 0;
};

/// Doubly-stochastic weights compatible with a CommGraph.
struct MixingMatrix {
  Matrix w;
  /// Largest singular value of W - 11^T/N.
  double lambda = 0.0;

  int size() const noexcept { return static_cast<int>(w.rows()); }
};

inline constexpr double kDefaultMetropolisEpsilon = 0.01;

/// Random spanning tree plus uniformly drawn extra edges until
/// round(kappa * N(N-1)/2) edges exist. Deterministic in seed.
CommGraph random_connected_graph(int n_agents, double kappa_target, std::uint64_t seed);

/// 2|E| / (N(N-1)); a single agent counts as fully connected.
double connectivity_ratio(const CommGraph& graph);

/// Metropolis-Hastings weights 1 / (max(deg i, deg j) + epsilon) on edges,
/// diagonal filling each row to one. Degrees exclude the agent itself.
MixingMatrix metropolis_weights(const CommGraph& graph,
                                double epsilon = kDefaultMetropolisEpsilon);

/// Largest singular value of W - 11^T/N (dense SVD).
double spectral_contraction(const Matrix& w);

}  // namespace dqnmesh
