#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "autogel/errors.hpp"
#include "autogel/tensor.hpp"

namespace autogel {

using NodeId = std::uint32_t;
/// Undirected edge stored with first < second.
using Edge = std::pair<NodeId, NodeId>;

inline Edge canonical(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }

/// Immutable undirected simple graph with sorted adjacency lists.
class Graph {
 public:
  Graph() = default;

  /// Self-loops are dropped and duplicates collapsed.
  Graph(std::size_t node_count, std::vector<Edge> edges) : node_count_(node_count) {
    std::vector<Edge> clean;
    clean.reserve(edges.size());
    for (auto [a, b] : edges) {
      if (a >= node_count || b >= node_count) {
        throw ContractError("edge (" + std::to_string(a) + "," + std::to_string(b) + ") outside node range " +
                            std::to_string(node_count));
      }
      if (a != b) clean.push_back(canonical(a, b));
    }
    std::sort(clean.begin(), clean.end());
    clean.erase(std::unique(clean.begin(), clean.end()), clean.end());
    edges_ = std::move(clean);
    adjacency_.assign(node_count_, {});
    for (auto [a, b] : edges_) {
      adjacency_[a].push_back(b);
      adjacency_[b].push_back(a);
    }
    for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
  }

  std::size_t node_count() const { return node_count_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<NodeId>& neighbors(NodeId v) const { return adjacency_.at(v); }
  std::size_t degree(NodeId v) const { return adjacency_.at(v).size(); }

  bool has_edge(NodeId a, NodeId b) const {
    if (a >= node_count_ || b >= node_count_) return false;
    const auto& nb = adjacency_[a];
    return std::binary_search(nb.begin(), nb.end(), b);
  }

  /// Copy without the listed edges; features and labels are kept.
  Graph without_edges(const std::vector<Edge>& removed) const {
    std::vector<Edge> drop;
    drop.reserve(removed.size());
    for (auto [a, b] : removed) drop.push_back(canonical(a, b));
    std::sort(drop.begin(), drop.end());
    std::vector<Edge> kept;
    kept.reserve(edges_.size());
    for (const auto& e : edges_) {
      if (!std::binary_search(drop.begin(), drop.end(), e)) kept.push_back(e);
    }
    Graph g(node_count_, std::move(kept));
    g.features_ = features_;
    g.labels_ = labels_;
    return g;
  }

  const std::optional<Tensor>& features() const { return features_; }
  void set_features(Tensor f) {
    if (f.rank() != 2 || f.rows() != node_count_) {
      throw DimensionError("node features must have one row per node, got " + shape_str(f.shape()));
    }
    features_ = std::move(f);
  }

  const std::vector<int>& labels() const { return labels_; }
  void set_labels(std::vector<int> labels) {
    if (labels.size() != node_count_) throw DimensionError("node labels must have one entry per node");
    labels_ = std::move(labels);
  }

  bool operator==(const Graph& o) const {
    return node_count_ == o.node_count_ && edges_ == o.edges_ && labels_ == o.labels_;
  }

 private:
  std::size_t node_count_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<NodeId>> adjacency_;
  std::optional<Tensor> features_;
  std::vector<int> labels_;
};

namespace detail {

inline bool is_comment_or_blank(const std::string& line) {
  const auto p = line.find_first_not_of(" \t\r");
  return p == std::string::npos || line[p] == '#';
}

inline std::optional<long long> parse_int(const std::string& tok) {
  if (tok.empty()) return std::nullopt;
  std::size_t used = 0;
  try {
    long long v = std::stoll(tok, &used);
    if (used != tok.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path);
  return in;
}

}  // namespace detail

/// Reads a whitespace-separated "u v" edge list. Lines starting with '#' are
/// comments; trailing columns (weights) are ignored. Self-loops and repeated
/// edges are skipped with a warning.
inline Graph load_edge_list(const std::string& path) {
  auto in = detail::open_input(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0, self_loops = 0;
  NodeId max_id = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::is_comment_or_blank(line)) continue;
    std::istringstream ss(line);
    std::string a, b;
    ss >> a >> b;
    auto u = detail::parse_int(a), v = detail::parse_int(b);
    if (!u || !v || *u < 0 || *v < 0 || *u > 0xffffffffLL || *v > 0xffffffffLL) {
      throw IngestionError(path + ":" + std::to_string(lineno) + ": expected two non-negative integer node ids");
    }
    if (*u == *v) {
      ++self_loops;
      logging::warn(path + ":" + std::to_string(lineno) + ": self-loop skipped");
      continue;
    }
    const auto uu = static_cast<NodeId>(*u), vv = static_cast<NodeId>(*v);
    max_id = std::max({max_id, uu, vv});
    any = true;
    edges.push_back(canonical(uu, vv));
  }
  const std::size_t n = any ? static_cast<std::size_t>(max_id) + 1 : 0;
  const auto raw = edges.size();
  Graph g(n, std::move(edges));
  if (g.edge_count() < raw) {
    logging::warn(path + ": " + std::to_string(raw - g.edge_count()) + " duplicate edge line(s) collapsed");
  }
  return g;
}

// ---------------------------------------------------------------------------
// Multi-relational graphs

enum class EdgeDirection { SelfLoop, Original, Inverse };

inline const char* direction_name(EdgeDirection d) {
  switch (d) {
    case EdgeDirection::SelfLoop: return "self_loop";
    case EdgeDirection::Original: return "original";
    case EdgeDirection::Inverse: return "inverse";
  }
  return "?";
}

struct Triple {
  NodeId head = 0;
  NodeId relation = 0;
  NodeId tail = 0;
  bool operator==(const Triple&) const = default;
  auto operator<=>(const Triple&) const = default;
};

struct AugmentedTriple {
  NodeId head = 0;
  NodeId relation = 0;
  NodeId tail = 0;
  EdgeDirection direction = EdgeDirection::Original;
  bool operator==(const AugmentedTriple&) const = default;
};

/// Dense token <-> id mapping in first-seen order.
class Vocabulary {
 public:
  NodeId intern(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<NodeId>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  std::optional<NodeId> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(NodeId id) const { return tokens_.at(id); }

  /// "token\tid" per line.
  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write " + path);
    for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
  }

  static Vocabulary load(const std::string& path) {
    auto in = detail::open_input(path);
    Vocabulary v;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto tab = line.rfind('\t');
      auto id = tab == std::string::npos ? std::nullopt : detail::parse_int(line.substr(tab + 1));
      if (!id || static_cast<std::size_t>(*id) != v.size()) {
        throw IngestionError(path + ":" + std::to_string(lineno) + ": expected \"token<TAB>id\" with dense ids");
      }
      v.intern(line.substr(0, tab));
    }
    return v;
  }

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, NodeId> index_;
};

/// Directed multi-relational graph plus its augmented form: each original
/// triple, its inverse (relation id shifted by relation_count), and one
/// self-loop per entity.
class RelGraph {
 public:
  RelGraph() = default;

  RelGraph(std::size_t entity_count, std::size_t relation_count, std::vector<Triple> triples)
      : entity_count_(entity_count), relation_count_(relation_count), triples_(std::move(triples)) {
    augmented_.reserve(2 * triples_.size() + entity_count_);
    for (const auto& t : triples_) {
      if (t.relation >= relation_count_) throw ContractError("relation id out of range");
      if (t.head >= entity_count_ || t.tail >= entity_count_) throw ContractError("entity id out of range");
      augmented_.push_back({t.head, t.relation, t.tail, EdgeDirection::Original});
      augmented_.push_back({t.tail, static_cast<NodeId>(t.relation + relation_count_), t.head, EdgeDirection::Inverse});
    }
    for (std::size_t e = 0; e < entity_count_; ++e) {
      const auto id = static_cast<NodeId>(e);
      augmented_.push_back({id, self_loop_relation(), id, EdgeDirection::SelfLoop});
    }
  }

  std::size_t entity_count() const { return entity_count_; }
  std::size_t relation_count() const { return relation_count_; }
  /// Original + inverse + self-loop relation ids.
  std::size_t augmented_relation_count() const { return 2 * relation_count_ + 1; }
  NodeId self_loop_relation() const { return static_cast<NodeId>(2 * relation_count_); }
  NodeId inverse_of(NodeId r) const {
    return static_cast<NodeId>(r < relation_count_ ? r + relation_count_ : r - relation_count_);
  }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<AugmentedTriple>& augmented() const { return augmented_; }

  bool operator==(const RelGraph& o) const {
    return entity_count_ == o.entity_count_ && relation_count_ == o.relation_count_ && triples_ == o.triples_;
  }

 private:
  std::size_t entity_count_ = 0;
  std::size_t relation_count_ = 0;
  std::vector<Triple> triples_;
  std::vector<AugmentedTriple> augmented_;
};

namespace detail {

inline std::vector<Triple> read_triples(const std::string& path, Vocabulary& entities, Vocabulary& relations) {
  auto in = open_input(path);
  std::vector<Triple> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      parts.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (parts.size() != 3 || parts[0].empty() || parts[1].empty() || parts[2].empty()) {
      throw IngestionError(path + ":" + std::to_string(lineno) + ": expected head<TAB>relation<TAB>tail");
    }
    const auto h = entities.intern(parts[0]);
    const auto r = relations.intern(parts[1]);
    const auto t = entities.intern(parts[2]);
    out.push_back({h, r, t});
  }
  return out;
}

}  // namespace detail

struct LoadedTriples {
  RelGraph graph;
  Vocabulary entities;
  Vocabulary relations;
};

/// Reads "head\trelation\ttail" lines; tokens map to dense ids in first-seen order.
inline LoadedTriples load_triples(const std::string& path) {
  LoadedTriples out;
  auto triples = detail::read_triples(path, out.entities, out.relations);
  out.graph = RelGraph(out.entities.size(), out.relations.size(), std::move(triples));
  return out;
}

}  // namespace autogel
