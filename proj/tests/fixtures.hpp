#pragma once

#include <vector>

#include "autogel/tasks.hpp"

namespace fixtures {

using namespace autogel;

/// Two 5-cliques joined by the bridge 4-5.
inline Graph two_cliques() {
  std::vector<Edge> e;
  for (NodeId base : {0u, 5u})
    for (NodeId a = 0; a < 5; ++a)
      for (NodeId b = a + 1; b < 5; ++b) e.push_back({base + a, base + b});
  e.push_back({4, 5});
  return Graph(10, e);
}

/// Ten in-clique edges and ten cross-clique non-edges.
struct LinkSets {
  std::vector<Edge> pos, neg;
};

inline LinkSets twenty_links() {
  LinkSets s;
  s.pos = {{0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 4}, {5, 6}, {5, 8}, {6, 9}, {7, 8}, {7, 9}};
  s.neg = {{0, 5}, {0, 9}, {1, 6}, {1, 8}, {2, 7}, {2, 9}, {3, 5}, {3, 6}, {4, 7}, {4, 9}};
  return s;
}

inline LinkPredictionTask memorization_task() {
  const auto links = twenty_links();
  return LinkPredictionTask::memorization(two_cliques(), links.pos, links.neg);
}

/// 50 distinct triples over 20 entities and 3 relations. Within a relation
/// no entity is both a head and a tail (DistMult cannot tell (a,r,b) from (b,r,a)).
inline std::vector<Triple> fifty_triples() {
  std::vector<Triple> t;
  auto rng = Rng::stream(5, "kg-fixture");
  auto clashes = [&](const Triple& x) {
    for (const auto& y : t)
      if (y.relation == x.relation && (y.head == x.tail || y.tail == x.head)) return true;
    return false;
  };
  while (t.size() < 50) {
    Triple x{static_cast<NodeId>(rng.below(20)), static_cast<NodeId>(rng.below(3)), static_cast<NodeId>(rng.below(20))};
    if (x.head == x.tail || std::find(t.begin(), t.end(), x) != t.end() || clashes(x)) continue;
    t.push_back(x);
  }
  return t;
}

/// Small settings suitable for unit-test runs.
inline SearchSettings quick_settings(TaskKind kind) {
  SearchSettings s;
  s.hidden_dim = 8;
  s.layers = kind == TaskKind::LinkKnowledgeGraph ? 1 : 2;
  s.search_epochs = 3;
  s.retrain_epochs = 3;
  s.batch_size = 8;
  s.learning_rate = 1e-2;
  return s;
}

}  // namespace fixtures
