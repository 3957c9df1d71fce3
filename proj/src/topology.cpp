#include "dqnmesh/topology.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>

namespace dqnmesh {

CommGraph::CommGraph(int n_agents, std::vector<Edge> edges, std::uint64_t seed)
    : n_agents_(n_agents), adjacency_(n_agents > 0 ? n_agents : 0), seed_(seed) {
  if (n_agents <= 0) throw InputError("CommGraph: n_agents must be positive");
  for (auto& [i, j] : edges) {
    if (i == j) throw InputError("CommGraph: self-loop on agent " + std::to_string(i));
    if (i < 0 || j < 0 || i >= n_agents || j >= n_agents)
      throw InputError("CommGraph: edge endpoint out of range");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw InputError("CommGraph: duplicate edge");
  edges_ = std::move(edges);
  for (const auto& [i, j] : edges_) {
    adjacency_[i].push_back(j);
    adjacency_[j].push_back(i);
  }
  for (auto& nbrs : adjacency_) std::sort(nbrs.begin(), nbrs.end());
}

CommGraph CommGraph::complete(int n_agents) {
  std::vector<Edge> edges;
  for (int i = 0; i < n_agents; ++i)
    for (int j = i + 1; j < n_agents; ++j) edges.emplace_back(i, j);
  return CommGraph(n_agents, std::move(edges));
}

CommGraph CommGraph::path(int n_agents) {
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n_agents; ++i) edges.emplace_back(i, i + 1);
  return CommGraph(n_agents, std::move(edges));
}

CommGraph CommGraph::star(int n_agents) {
  std::vector<Edge> edges;
  for (int i = 1; i < n_agents; ++i) edges.emplace_back(0, i);
  return CommGraph(n_agents, std::move(edges));
}

bool CommGraph::has_edge(int i, int j) const {
  const auto& nbrs = adjacency_.at(i);
  return std::binary_search(nbrs.begin(), nbrs.end(), j);
}

bool CommGraph::is_connected() const {
  if (n_agents_ <= 1) return true;
  std::vector<char> seen(n_agents_, 0);
  std::queue<int> frontier;
  frontier.push(0);
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (int v : adjacency_[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++reached;
        frontier.push(v);
      }
    }
  }
  return reached == n_agents_;
}

nlohmann::json CommGraph::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [i, j] : edges_) edges.push_back({i, j});
  return {{"n_agents", n_agents_}, {"edges", edges}, {"seed", seed_}};
}

CommGraph CommGraph::from_json(const nlohmann::json& j) {
  try {
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) {
      if (!e.is_array() || e.size() != 2) throw InputError("CommGraph: edge must be a pair");
      edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    return CommGraph(j.at("n_agents").get<int>(), std::move(edges),
                     j.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& ex) {
    throw InputError(std::string("CommGraph: malformed JSON: ") + ex.what());
  }
}

CommGraph random_connected_graph(int n_agents, double kappa_target, std::uint64_t seed) {
  if (n_agents <= 0) throw InputError("random_connected_graph: n_agents must be positive");
  if (!(kappa_target > 0.0 && kappa_target <= 1.0))
    throw InputError("random_connected_graph: kappa must lie in (0, 1]");
  if (n_agents == 1) return CommGraph(1, {}, seed);

  const long long pairs = static_cast<long long>(n_agents) * (n_agents - 1) / 2;
  const double tree_density = 2.0 / n_agents;
  if (kappa_target < tree_density - 1e-12)
    throw InputError("random_connected_graph: kappa " + std::to_string(kappa_target) +
                     " is below spanning-tree density " + std::to_string(tree_density));
  const long long target =
      std::max<long long>(n_agents - 1, std::llround(kappa_target * static_cast<double>(pairs)));

  Rng rng(seed);
  std::vector<int> order(n_agents);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<char> present(static_cast<std::size_t>(n_agents) * n_agents, 0);
  std::vector<CommGraph::Edge> edges;
  edges.reserve(static_cast<std::size_t>(target));
  auto add = [&](int a, int b) {
    present[static_cast<std::size_t>(a) * n_agents + b] = 1;
    present[static_cast<std::size_t>(b) * n_agents + a] = 1;
    edges.emplace_back(std::min(a, b), std::max(a, b));
  };
  // Random recursive tree: each new vertex hooks onto an earlier one.
  for (int k = 1; k < n_agents; ++k) {
    std::uniform_int_distribution<int> pick(0, k - 1);
    add(order[k], order[pick(rng)]);
  }

  std::vector<CommGraph::Edge> spare;
  for (int i = 0; i < n_agents; ++i)
    for (int j = i + 1; j < n_agents; ++j)
      if (!present[static_cast<std::size_t>(i) * n_agents + j]) spare.emplace_back(i, j);
  std::shuffle(spare.begin(), spare.end(), rng);
  const auto extra = static_cast<std::size_t>(target - (n_agents - 1));
  for (std::size_t k = 0; k < extra && k < spare.size(); ++k) add(spare[k].first, spare[k].second);

  return CommGraph(n_agents, std::move(edges), seed);
}

double connectivity_ratio(const CommGraph& graph) {
  const int n = graph.n_agents();
  if (n <= 1) return 1.0;
  return 2.0 * static_cast<double>(graph.edge_count()) / (static_cast<double>(n) * (n - 1));
}

MixingMatrix metropolis_weights(const CommGraph& graph, double epsilon) {
  if (!(epsilon > 0.0)) throw InputError("metropolis_weights: epsilon must be positive");
  if (!graph.is_connected()) throw InputError("metropolis_weights: graph is disconnected");
  const int n = graph.n_agents();
  Matrix w = Matrix::Zero(n, n);
  for (const auto& [i, j] : graph.edges()) {
    const double wij = 1.0 / (std::max(graph.degree(i), graph.degree(j)) + epsilon);
    w(i, j) = wij;
    w(j, i) = wij;
  }
  for (int i = 0; i < n; ++i) {
    double off = 0.0;
    for (int j : graph.neighbors(i)) off += w(i, j);
    w(i, i) = 1.0 - off;
  }
  MixingMatrix out{std::move(w), 0.0};
  out.lambda = spectral_contraction(out.w);
  return out;
}

double spectral_contraction(const Matrix& w) {
  if (w.rows() != w.cols() || w.rows() == 0)
    throw InputError("spectral_contraction: W must be square and non-empty");
  const auto n = w.rows();
  const Matrix m = w - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace dqnmesh
