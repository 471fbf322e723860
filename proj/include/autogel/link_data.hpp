#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <unordered_set>
#include <vector>

#include "autogel/graph.hpp"
#include "autogel/random.hpp"
#include "autogel/tensor.hpp"

namespace autogel {

namespace detail {

inline std::uint64_t pair_key(Edge e) { return (static_cast<std::uint64_t>(e.first) << 32) | e.second; }

}  // namespace detail

/// Uniform sample of `count` distinct non-edges (u < v) outside `exclude`,
/// without replacement and deterministic in `seed`.
inline std::vector<Edge> sample_negative_links(const Graph& graph, std::size_t count, std::uint64_t seed,
                                               const std::vector<Edge>& exclude = {}) {
  if (count == 0) return {};
  const std::uint64_t n = graph.node_count();
  std::unordered_set<std::uint64_t> excluded;
  for (auto [a, b] : exclude) {
    const auto e = canonical(a, b);
    if (e.first != e.second && !graph.has_edge(e.first, e.second)) excluded.insert(detail::pair_key(e));
  }
  const std::uint64_t pairs = n < 2 ? 0 : n * (n - 1) / 2;
  const std::uint64_t eligible = pairs - graph.edge_count() - excluded.size();
  if (count > eligible) {
    throw SamplingError("requested " + std::to_string(count) + " negative links but only " +
                        std::to_string(eligible) + " non-edges are available");
  }
  Rng rng(seed);
  std::vector<Edge> out;
  out.reserve(count);
  if (2 * count > eligible) {
    // dense regime: enumerate and take a partial Fisher-Yates prefix
    std::vector<Edge> pool;
    pool.reserve(eligible);
    for (NodeId u = 0; u < n; ++u)
      for (NodeId v = u + 1; v < n; ++v)
        if (!graph.has_edge(u, v) && !excluded.count(detail::pair_key({u, v}))) pool.push_back({u, v});
    for (std::size_t i = 0; i < count; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
      out.push_back(pool[i]);
    }
    return out;
  }
  std::unordered_set<std::uint64_t> chosen;
  while (out.size() < count) {
    const auto u = static_cast<NodeId>(rng.below(n));
    const auto v = static_cast<NodeId>(rng.below(n));
    if (u == v) continue;
    const auto e = canonical(u, v);
    const auto key = detail::pair_key(e);
    if (graph.has_edge(e.first, e.second) || excluded.count(key) || !chosen.insert(key).second) continue;
    out.push_back(e);
  }
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

/// Positive/negative link sets per split plus the leakage-free training graph.
struct LinkSplit {
  std::vector<Edge> train_pos, valid_pos, test_pos;
  std::vector<Edge> train_neg, valid_neg, test_neg;
  std::uint64_t seed = 0;
  /// Full graph minus validation and test positives.
  Graph train_graph;
};

inline LinkSplit split_links(const Graph& graph, SplitRatios ratios, std::uint64_t seed) {
  const double total = ratios.train + ratios.valid + ratios.test;
  if (std::fabs(total - 1.0) > 1e-9 || ratios.train < 0 || ratios.valid < 0 || ratios.test < 0) {
    throw SplitError("split ratios must be non-negative and sum to 1");
  }
  const auto m = graph.edge_count();
  if (m < 10) throw SplitError("link split needs at least 10 edges, graph has " + std::to_string(m));

  LinkSplit s;
  s.seed = seed;
  auto shuffle_rng = Rng::stream(seed, "split");
  std::vector<Edge> edges = graph.edges();
  shuffle_rng.shuffle(edges);
  const auto n_valid = static_cast<std::size_t>(std::llround(ratios.valid * static_cast<double>(m)));
  const auto n_test = static_cast<std::size_t>(std::llround(ratios.test * static_cast<double>(m)));
  if (n_valid + n_test > m) throw SplitError("split ratios leave no training links");
  s.valid_pos.assign(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_valid));
  s.test_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_valid),
                    edges.begin() + static_cast<std::ptrdiff_t>(n_valid + n_test));
  s.train_pos.assign(edges.begin() + static_cast<std::ptrdiff_t>(n_valid + n_test), edges.end());

  std::vector<Edge> neg;
  try {
    neg = sample_negative_links(graph, m, Rng::stream(seed, "negatives").next());
  } catch (const SamplingError& e) {
    throw SplitError(std::string("cannot draw negatives: ") + e.what());
  }
  const auto nt = s.train_pos.size();
  s.train_neg.assign(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(nt));
  s.valid_neg.assign(neg.begin() + static_cast<std::ptrdiff_t>(nt),
                     neg.begin() + static_cast<std::ptrdiff_t>(nt + n_valid));
  s.test_neg.assign(neg.begin() + static_cast<std::ptrdiff_t>(nt + n_valid), neg.end());

  std::vector<Edge> held_out = s.valid_pos;
  held_out.insert(held_out.end(), s.test_pos.begin(), s.test_pos.end());
  s.train_graph = graph.without_edges(held_out);
  return s;
}

/// k-hop neighborhood of a target pair with the target edge removed.
struct EnclosingSubgraph {
  std::vector<NodeId> nodes;          // local -> global, sorted by global id
  std::vector<Edge> edges;            // local ids, first < second
  NodeId target_u = 0, target_v = 0;  // local indices of the pair, in the order given
  Tensor features;                    // distance encoding, one row per local node
  int label = 0;

  std::size_t node_count() const { return nodes.size(); }
};

namespace detail {

/// Hop distances from `source`, truncated at `limit` (unreached = SIZE_MAX).
inline std::vector<std::size_t> bfs_distances(const std::vector<std::vector<NodeId>>& adj, NodeId source,
                                              std::size_t limit) {
  std::vector<std::size_t> dist(adj.size(), std::numeric_limits<std::size_t>::max());
  std::deque<NodeId> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto x = queue.front();
    queue.pop_front();
    if (dist[x] == limit) continue;
    for (auto y : adj[x]) {
      if (dist[y] == std::numeric_limits<std::size_t>::max()) {
        dist[y] = dist[x] + 1;
        queue.push_back(y);
      }
    }
  }
  return dist;
}

inline std::vector<NodeId> bfs_ball(const Graph& g, NodeId source, std::size_t hops, std::vector<std::size_t>& mark,
                                    std::size_t stamp) {
  std::vector<NodeId> ball{source};
  std::vector<NodeId> frontier{source};
  mark[source] = stamp;
  for (std::size_t h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<NodeId> next;
    for (auto x : frontier)
      for (auto y : g.neighbors(x))
        if (mark[y] != stamp) {
          mark[y] = stamp;
          next.push_back(y);
          ball.push_back(y);
        }
    frontier = std::move(next);
  }
  return ball;
}

}  // namespace detail

/// Local adjacency of a subgraph (target edge already absent).
inline std::vector<std::vector<NodeId>> local_adjacency(const EnclosingSubgraph& s) {
  std::vector<std::vector<NodeId>> adj(s.nodes.size());
  for (auto [a, b] : s.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  for (auto& nb : adj) std::sort(nb.begin(), nb.end());
  return adj;
}

/// Per node: concat(onehot(min(d(w,u), cap)), onehot(min(d(w,v), cap))),
/// distances measured inside the subgraph; unreachable maps to cap.
inline Tensor distance_encode(const EnclosingSubgraph& s, std::size_t cap = 3) {
  if (cap < 1) throw ContractError("distance cap must be at least 1");
  const auto adj = local_adjacency(s);
  const auto du = detail::bfs_distances(adj, s.target_u, cap);
  const auto dv = detail::bfs_distances(adj, s.target_v, cap);
  const auto width = 2 * (cap + 1);
  std::vector<double> f(s.nodes.size() * width, 0.0);
  for (std::size_t w = 0; w < s.nodes.size(); ++w) {
    f[w * width + std::min(du[w], cap)] = 1.0;
    f[w * width + (cap + 1) + std::min(dv[w], cap)] = 1.0;
  }
  return Tensor::matrix(s.nodes.size(), width, std::move(f));
}

/// Union of the `hops`-balls around u and v, target edge removed, nodes
/// ordered by global id. Features are left empty; see distance_encode.
inline EnclosingSubgraph extract_enclosing_subgraph(const Graph& g, NodeId u, NodeId v, std::size_t hops) {
  if (u >= g.node_count() || v >= g.node_count()) throw ContractError("target node out of range");
  if (u == v) throw ContractError("target pair must have distinct endpoints");
  std::vector<std::size_t> mark(g.node_count(), 0);
  auto ball_u = detail::bfs_ball(g, u, hops, mark, 1);
  auto ball_v = detail::bfs_ball(g, v, hops, mark, 2);
  EnclosingSubgraph s;
  s.nodes = std::move(ball_u);
  s.nodes.insert(s.nodes.end(), ball_v.begin(), ball_v.end());
  std::sort(s.nodes.begin(), s.nodes.end());
  s.nodes.erase(std::unique(s.nodes.begin(), s.nodes.end()), s.nodes.end());

  std::unordered_map<NodeId, NodeId> local;
  local.reserve(s.nodes.size() * 2);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) local.emplace(s.nodes[i], static_cast<NodeId>(i));
  const auto target = canonical(u, v);
  for (std::size_t i = 0; i < s.nodes.size(); ++i) {
    const auto a = s.nodes[i];
    for (auto b : g.neighbors(a)) {
      if (b <= a) continue;
      if (Edge{a, b} == target) continue;
      auto it = local.find(b);
      if (it != local.end()) s.edges.push_back({static_cast<NodeId>(i), it->second});
    }
  }
  s.target_u = local.at(u);
  s.target_v = local.at(v);
  return s;
}

/// Subgraph plus distance-encoding features and a label, ready for training.
inline EnclosingSubgraph make_link_instance(const Graph& g, Edge link, int label, std::size_t hops, std::size_t cap) {
  auto s = extract_enclosing_subgraph(g, link.first, link.second, hops);
  s.features = distance_encode(s, cap);
  s.label = label;
  return s;
}

/// |N(u) ∩ N(v)| on `graph` for every link.
inline std::vector<double> common_neighbors_baseline(const Graph& graph, const std::vector<Edge>& links) {
  std::vector<double> scores;
  scores.reserve(links.size());
  for (auto [u, v] : links) {
    if (u >= graph.node_count() || v >= graph.node_count()) throw ContractError("link endpoint out of range");
    const auto& a = graph.neighbors(u);
    const auto& b = graph.neighbors(v);
    std::size_t i = 0, j = 0, c = 0;
    while (i < a.size() && j < b.size()) {
      if (a[i] < b[j]) {
        ++i;
      } else if (b[j] < a[i]) {
        ++j;
      } else {
        ++c;
        ++i;
        ++j;
      }
    }
    scores.push_back(static_cast<double>(c));
  }
  return scores;
}

}  // namespace autogel
