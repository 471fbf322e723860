#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "autogel/graph.hpp"
#include "autogel/link_data.hpp"
#include "autogel/ops.hpp"
#include "autogel/random.hpp"
#include "autogel/search_space.hpp"

namespace autogel {

// ---------------------------------------------------------------------------
// Candidate operators

enum class Composition { Sub, Mult, Corr };

inline Composition parse_composition(const std::string& s) {
  if (s == "sub") return Composition::Sub;
  if (s == "mult") return Composition::Mult;
  if (s == "corr") return Composition::Corr;
  throw ContractError("unknown composition '" + s + "'");
}

/// Edge-aware message input phi(h_u, h_e), row-wise.
inline Tensor compose(Composition c, const Tensor& hu, const Tensor& he) {
  switch (c) {
    case Composition::Sub: return sub(hu, he);
    case Composition::Mult: return mul(hu, he);
    case Composition::Corr: return circular_correlation(hu, he);
  }
  throw ContractError("bad composition");
}

inline Reduce parse_aggregation(const std::string& s) {
  if (s == "sum" || s == "global_add_pool") return Reduce::Sum;
  if (s == "mean" || s == "global_mean_pool") return Reduce::Mean;
  if (s == "max" || s == "global_max_pool") return Reduce::Max;
  throw ContractError("unknown aggregation '" + s + "'");
}

enum class LayerConnect { Skip, Sum, Concat };

inline LayerConnect parse_layer_connect(const std::string& s) {
  if (s == "skip") return LayerConnect::Skip;
  if (s == "lc_sum") return LayerConnect::Sum;
  if (s == "lc_concat") return LayerConnect::Concat;
  throw ContractError("unknown layer connection '" + s + "'");
}

/// Connection of a layer's input h_prev to its output h_new. Concat is 2d wide
/// unless a [2d, d] projection is supplied.
inline Tensor layer_connect(LayerConnect kind, const Tensor& h_prev, const Tensor& h_new,
                            const Tensor* projection = nullptr) {
  switch (kind) {
    case LayerConnect::Skip: return h_new;
    case LayerConnect::Sum: return add(h_prev, h_new);
    case LayerConnect::Concat: {
      auto c = concat({h_prev, h_new});
      return projection ? matmul(c, *projection) : c;
    }
  }
  throw ContractError("bad layer connection");
}

enum class LayerAggregate { Skip, Concat, Max };

inline LayerAggregate parse_layer_aggregate(const std::string& s) {
  if (s == "skip") return LayerAggregate::Skip;
  if (s == "la_concat") return LayerAggregate::Concat;
  if (s == "la_max") return LayerAggregate::Max;
  throw ContractError("unknown layer aggregation '" + s + "'");
}

/// Readout over the raw (pre-connection) layer outputs h^1..h^L. Concat is L*d wide unless
/// an [L*d, d] projection is supplied.
inline Tensor layer_aggregate(LayerAggregate kind, const std::vector<Tensor>& hs, const Tensor* projection = nullptr) {
  if (hs.empty()) throw ContractError("layer_aggregate: no layer outputs");
  switch (kind) {
    case LayerAggregate::Skip: return hs.back();
    case LayerAggregate::Concat: {
      auto c = concat(hs);
      return projection ? matmul(c, *projection) : c;
    }
    case LayerAggregate::Max: {
      Tensor m = hs[0];
      for (std::size_t i = 1; i < hs.size(); ++i) m = maximum(m, hs[i]);
      return m;
    }
  }
  throw ContractError("bad layer aggregation");
}

enum class PairPool { Sum, Max, Concat, Diff };

inline PairPool parse_pair_pool(const std::string& s) {
  if (s == "sum") return PairPool::Sum;
  if (s == "max") return PairPool::Max;
  if (s == "concat") return PairPool::Concat;
  if (s == "diff") return PairPool::Diff;
  throw ContractError("unknown pair pooling '" + s + "'");
}

/// Pair representation from endpoint rows; Concat keeps [h_u || h_v].
inline Tensor pool_pair(PairPool kind, const Tensor& hu, const Tensor& hv, const Tensor* projection = nullptr) {
  switch (kind) {
    case PairPool::Sum: return add(hu, hv);
    case PairPool::Max: return maximum(hu, hv);
    case PairPool::Concat: {
      auto c = concat({hu, hv});
      return projection ? matmul(c, *projection) : c;
    }
    case PairPool::Diff: return abs(sub(hu, hv));
  }
  throw ContractError("bad pair pooling");
}

/// Whole-graph readout: rows of h grouped by graph id.
inline Tensor pool_graph(Reduce how, const Tensor& h, const std::vector<std::uint32_t>& graph_of_node,
                         std::size_t graph_count) {
  if (graph_of_node.empty() || graph_count == 0) throw ContractError("pool_graph: empty node set");
  return segment_reduce(h, {}, graph_of_node, graph_count, how);
}

// ---------------------------------------------------------------------------
// Batches

/// Disjoint union of one or more homogeneous graphs. Message edges are
/// directed (both orientations) and sorted by (dst, src).
struct GraphBatch {
  std::size_t node_count = 0;
  Tensor features;
  std::vector<std::uint32_t> src, dst;
  std::vector<std::uint32_t> graph_of_node;
  std::size_t graph_count = 0;
  std::vector<std::uint32_t> pair_a, pair_b;  // link targets, pair_a < pair_b
  std::vector<double> targets;                // link labels
  std::vector<int> classes;                   // node or graph labels
};

namespace detail {

inline void sort_messages(GraphBatch& b) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> m;
  m.reserve(b.src.size());
  for (std::size_t i = 0; i < b.src.size(); ++i) m.push_back({b.dst[i], b.src[i]});
  std::sort(m.begin(), m.end());
  for (std::size_t i = 0; i < m.size(); ++i) {
    b.dst[i] = m[i].first;
    b.src[i] = m[i].second;
  }
}

inline void append_graph(GraphBatch& b, std::size_t nodes, const std::vector<Edge>& edges, const Tensor& features,
                         std::vector<double>& feat, std::size_t& width) {
  if (features.rank() != 2 || features.rows() != nodes) throw DimensionError("batch: one feature row per node required");
  if (width == 0) width = features.cols();
  if (features.cols() != width) throw DimensionError("batch: feature widths differ between graphs");
  const auto off = static_cast<std::uint32_t>(b.node_count);
  for (auto [u, v] : edges) {
    b.src.push_back(off + u);
    b.dst.push_back(off + v);
    b.src.push_back(off + v);
    b.dst.push_back(off + u);
  }
  feat.insert(feat.end(), features.data().begin(), features.data().end());
  b.graph_of_node.insert(b.graph_of_node.end(), nodes, static_cast<std::uint32_t>(b.graph_count));
  b.node_count += nodes;
  b.graph_count += 1;
}

}  // namespace detail

/// Batches enclosing subgraphs; each contributes one target pair.
inline GraphBatch batch_link_instances(const std::vector<const EnclosingSubgraph*>& items) {
  if (items.empty()) throw ContractError("batch_link_instances: empty batch");
  GraphBatch b;
  std::vector<double> feat;
  std::size_t width = 0;
  for (const auto* s : items) {
    if (!s->features.defined()) throw ContractError("enclosing subgraph has no features");
    const auto off = static_cast<std::uint32_t>(b.node_count);
    detail::append_graph(b, s->node_count(), s->edges, s->features, feat, width);
    b.pair_a.push_back(off + std::min(s->target_u, s->target_v));
    b.pair_b.push_back(off + std::max(s->target_u, s->target_v));
    b.targets.push_back(static_cast<double>(s->label));
  }
  detail::sort_messages(b);
  b.features = Tensor::matrix(b.node_count, width, std::move(feat));
  return b;
}

/// Batches whole graphs, which must carry node features.
inline GraphBatch batch_graphs(const std::vector<const Graph*>& graphs, const std::vector<int>& labels = {}) {
  if (graphs.empty()) throw ContractError("batch_graphs: empty batch");
  GraphBatch b;
  std::vector<double> feat;
  std::size_t width = 0;
  std::vector<Edge> none;
  for (const auto* g : graphs) {
    if (!g->features()) throw ContractError("batch_graphs: graph without node features");
    detail::append_graph(b, g->node_count(), g->edges(), *g->features(), feat, width);
  }
  detail::sort_messages(b);
  b.features = Tensor::matrix(b.node_count, width, std::move(feat));
  b.classes = labels;
  return b;
}

/// One graph with explicit features (node classification).
inline GraphBatch full_graph_batch(const Graph& g, const Tensor& features) {
  GraphBatch b;
  std::vector<double> feat;
  std::size_t width = 0;
  detail::append_graph(b, g.node_count(), g.edges(), features, feat, width);
  detail::sort_messages(b);
  b.features = Tensor::matrix(b.node_count, width, std::move(feat));
  b.classes = g.labels();
  return b;
}

/// Augmented KG edges grouped by direction; each group sorted by (tail, head, relation).
struct KgEdgeGroup {
  std::vector<std::uint32_t> head, relation, tail;
  std::size_t size() const { return head.size(); }
};

struct KgBatch {
  std::size_t entity_count = 0;
  std::size_t relation_rows = 0;  // 2R + 1
  KgEdgeGroup original, inverse, self_loop;
};

inline KgBatch make_kg_batch(const RelGraph& g) {
  if (g.entity_count() == 0) throw ContractError("knowledge graph has no entities");
  KgBatch b;
  b.entity_count = g.entity_count();
  b.relation_rows = g.augmented_relation_count();
  std::array<std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint32_t>>, 3> rows;
  for (const auto& t : g.augmented()) rows[static_cast<std::size_t>(t.direction)].push_back({t.tail, t.head, t.relation});
  KgEdgeGroup* groups[3] = {&b.self_loop, &b.original, &b.inverse};
  for (std::size_t k = 0; k < 3; ++k) {
    std::sort(rows[k].begin(), rows[k].end());
    for (auto [t, h, r] : rows[k]) {
      groups[k]->tail.push_back(t);
      groups[k]->head.push_back(h);
      groups[k]->relation.push_back(r);
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Mixing

/// Resolves each slot to an output: a theta-weighted sum of every candidate
/// (relaxed) or the single chosen candidate (child).
class Mixer {
 public:
  static Mixer relaxed(Selection selection) {
    Mixer m;
    m.selection_ = std::move(selection);
    return m;
  }

  static Mixer child(std::vector<std::size_t> choice) {
    Mixer m;
    m.child_ = true;
    m.choice_ = std::move(choice);
    return m;
  }

  bool is_child() const { return child_; }
  const Selection& selection() const { return selection_; }
  const std::vector<std::size_t>& choice() const { return choice_; }

  void check(const SearchSpace& space) const {
    if (!child_) {
      validate_selection(selection_, space);
      return;
    }
    if (choice_.size() != space.slots.size()) throw ContractError("child mixer: one choice per slot required");
    for (std::size_t i = 0; i < choice_.size(); ++i)
      if (choice_[i] >= space.slots[i].candidates.size()) throw ContractError("child mixer: choice out of range");
  }

  template <class F>
  Tensor mix(std::size_t slot, std::size_t candidates, F&& eval) const {
    if (child_) return eval(choice_.at(slot));
    const auto& w = selection_.weights.at(slot);
    Tensor out;
    for (std::size_t i = 0; i < candidates; ++i) {
      auto term = scale(eval(i), element(w, i));
      out = i == 0 ? term : add(out, term);
    }
    return out;
  }

 private:
  bool child_ = false;
  Selection selection_;
  std::vector<std::size_t> choice_;
};

struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

struct ModelDims {
  std::size_t input_dim = 0;       // homogeneous feature width
  std::size_t hidden_dim = 16;
  std::size_t output_dim = 1;      // 1 for link scores, class count otherwise
  std::size_t entity_count = 0;    // lp_kg
  std::size_t relation_count = 0;  // lp_kg, relations before augmentation
};

/// Final KG representations used by the DistMult decoder.
struct KgState {
  Tensor entities;   // [Ne, d]
  Tensor relations;  // [2R+1, d]
};

// ---------------------------------------------------------------------------
// Supernet

class Supernet {
 public:
  Supernet(SearchSpace space, ModelDims dims, Rng& rng) : space_(std::move(space)), dims_(dims) {
    const auto d = dims_.hidden_dim;
    if (d == 0) throw ConfigError("hidden dimension must be positive");
    index_slots();
    const bool kg = space_.task == TaskKind::LinkKnowledgeGraph;
    if (kg) {
      if (dims_.entity_count == 0 || dims_.relation_count == 0) throw ConfigError("knowledge graph dims are empty");
      const auto rel_rows = 2 * dims_.relation_count + 1;
      register_parameter("entity", glorot(dims_.entity_count, d, rng));
      register_parameter("relation", glorot(rel_rows, d, rng));
      if (space_.ablations.no_edge_embedding) register_parameter("decoder_relation", glorot(rel_rows, d, rng));
    } else {
      if (dims_.input_dim == 0 || dims_.output_dim == 0) throw ConfigError("input and output dims must be positive");
      register_parameter("input", glorot(dims_.input_dim, d, rng));
    }
    for (std::size_t k = 0; k < space_.layers; ++k) {
      const auto p = "L" + std::to_string(k) + ".";
      if (kg) {
        if (space_.ablations.shared_lambda) {
          register_parameter(p + "w_lambda", glorot(d, d, rng));
        } else {
          register_parameter(p + "w_loop", glorot(d, d, rng));
          register_parameter(p + "w_orig", glorot(d, d, rng));
          register_parameter(p + "w_inv", glorot(d, d, rng));
        }
        if (!space_.ablations.no_edge_embedding) register_parameter(p + "w_rel", glorot(d, d, rng));
      } else if (space_.ablations.shared_delta) {
        register_parameter(p + "w_delta", glorot(d, d, rng));
      } else {
        register_parameter(p + "w_self", glorot(d, d, rng));
        register_parameter(p + "w_neigh", glorot(d, d, rng));
      }
      if (offers(slots_[k].com, "concat")) register_parameter(p + "com_concat", glorot(2 * d, d, rng));
      if (offers(slots_[k].act, "prelu")) register_parameter(p + "prelu", Tensor::scalar(0.25, true));
      if (offers(slots_[k].connect, "lc_concat")) register_parameter(p + "lc_concat", glorot(2 * d, d, rng));
    }
    if (offers(layer_agg_slot_, "la_concat")) register_parameter("layer_agg.concat", glorot(space_.layers * d, d, rng));
    if (offers(pool_slot_, "concat")) register_parameter("pool.concat", glorot(2 * d, d, rng));
    if (!kg) {
      register_parameter("head.w", glorot(d, dims_.output_dim, rng));
      register_parameter("head.b", Tensor::zeros({dims_.output_dim}, true));
    }
  }

  const SearchSpace& space() const { return space_; }
  const ModelDims& dims() const { return dims_; }

  const std::vector<std::pair<std::string, Tensor>>& named_parameters() const { return params_; }

  std::vector<Tensor> parameters() const {
    std::vector<Tensor> out;
    for (const auto& [n, t] : params_) out.push_back(t);
    return out;
  }

  bool has_parameter(const std::string& name) const {
    return std::any_of(params_.begin(), params_.end(), [&](const auto& p) { return p.first == name; });
  }

  const Tensor& parameter(const std::string& name) const {
    for (const auto& [n, t] : params_)
      if (n == name) return t;
    throw ContractError("no parameter named '" + name + "'");
  }

  /// Mixer that dispatches the first candidate of every slot (for restricted nets).
  Mixer first_candidates() const { return Mixer::child(std::vector<std::size_t>(space_.slots.size(), 0)); }

  /// Output h^{k+1} of layer k before the layer connection.
  Tensor layer_forward(std::size_t k, const Tensor& h, const GraphBatch& batch, const Mixer& mixer,
                       ForwardContext& ctx) const {
    const auto p = "L" + std::to_string(k) + ".";
    const auto& slots = slots_.at(k);
    const bool shared = space_.ablations.shared_delta;
    const Tensor& w_self = parameter(shared ? p + "w_delta" : p + "w_self");
    const Tensor& w_neigh = parameter(shared ? p + "w_delta" : p + "w_neigh");
    const auto n = batch.node_count;
    const auto d = dims_.hidden_dim;
    const Tensor self_term = matmul(h, w_self);
    const Tensor hn = matmul(h, w_neigh);
    const Tensor m = mix(mixer, slots.agg, [&](const std::string& c) {
      if (batch.src.empty()) return Tensor::zeros({n, d});
      return segment_reduce(hn, batch.src, batch.dst, n, parse_aggregation(c));
    });
    return finish_layer(p, slots, self_term, m, mixer, ctx);
  }

  /// Final node embeddings for a homogeneous batch.
  Tensor embed(const GraphBatch& batch, const Mixer& mixer, ForwardContext& ctx) const {
    require(space_.task != TaskKind::LinkKnowledgeGraph, "embed() needs a homogeneous task");
    mixer.check(space_);
    Tensor h = matmul(batch.features, parameter("input"));
    std::vector<Tensor> hs;
    for (std::size_t k = 0; k < space_.layers; ++k) {
      hs.push_back(layer_forward(k, h, batch, mixer, ctx));
      h = connect(k, h, hs.back(), mixer);
    }
    return readout_layers(hs, mixer);
  }

  /// Task logits: [B] link scores, [N, C] node classes or [G, C] graph classes.
  Tensor forward(const GraphBatch& batch, const Mixer& mixer, ForwardContext& ctx) const {
    const Tensor h = embed(batch, mixer, ctx);
    const Tensor& w = parameter("head.w");
    const Tensor& b = parameter("head.b");
    switch (space_.task) {
      case TaskKind::LinkHomogeneous: {
        if (batch.pair_a.empty()) throw ContractError("link batch has no target pairs");
        const Tensor hu = gather_rows(h, batch.pair_a);
        const Tensor hv = gather_rows(h, batch.pair_b);
        const Tensor pooled = mix(mixer, pool_slot_, [&](const std::string& c) {
          const auto kind = parse_pair_pool(c);
          return pool_pair(kind, hu, hv, kind == PairPool::Concat ? &parameter("pool.concat") : nullptr);
        });
        return reshape(add_row_bias(matmul(pooled, w), b), {batch.pair_a.size()});
      }
      case TaskKind::NodeClassification:
        return add_row_bias(matmul(h, w), b);
      case TaskKind::GraphClassification: {
        const Tensor pooled = mix(mixer, pool_slot_, [&](const std::string& c) {
          return pool_graph(parse_aggregation(c), h, batch.graph_of_node, batch.graph_count);
        });
        return add_row_bias(matmul(pooled, w), b);
      }
      case TaskKind::LinkKnowledgeGraph: break;
    }
    throw ContractError("forward() needs a homogeneous task");
  }

  /// Relational message passing over the augmented KG.
  KgState kg_embed(const KgBatch& batch, const Mixer& mixer, ForwardContext& ctx) const {
    require(space_.task == TaskKind::LinkKnowledgeGraph, "kg_embed() needs the lp_kg task");
    mixer.check(space_);
    if (batch.entity_count != dims_.entity_count || batch.relation_rows != 2 * dims_.relation_count + 1) {
      throw DimensionError("knowledge graph batch does not match model dims");
    }
    const bool no_edge = space_.ablations.no_edge_embedding;
    Tensor ent = parameter("entity");
    Tensor rel = parameter("relation");
    const auto ne = batch.entity_count;
    std::vector<Tensor> hs;
    for (std::size_t k = 0; k < space_.layers; ++k) {
      const auto p = "L" + std::to_string(k) + ".";
      const auto& slots = slots_[k];
      auto weight = [&](const char* name) -> const Tensor& {
        return parameter(space_.ablations.shared_lambda ? p + "w_lambda" : p + name);
      };
      auto messages = [&](const KgEdgeGroup& g, const Tensor& w) {
        const Tensor hu = gather_rows(ent, g.head);
        if (no_edge) return matmul(hu, w);
        const Tensor he = gather_rows(rel, g.relation);
        const Tensor phi =
            mix(mixer, slots.phi, [&](const std::string& c) { return compose(parse_composition(c), hu, he); });
        return matmul(phi, w);
      };
      std::vector<Tensor> parts;
      std::vector<std::uint32_t> tails;
      for (auto [g, name] : {std::pair{&batch.original, "w_orig"}, std::pair{&batch.inverse, "w_inv"}}) {
        if (g->size() == 0) continue;
        parts.push_back(messages(*g, weight(name)));
        tails.insert(tails.end(), g->tail.begin(), g->tail.end());
      }
      const Tensor self_term = messages(batch.self_loop, weight("w_loop"));
      parts.push_back(self_term);
      tails.insert(tails.end(), batch.self_loop.tail.begin(), batch.self_loop.tail.end());
      const Tensor all = parts.size() == 1 ? parts[0] : concat_rows(parts);
      const Tensor m = mix(mixer, slots.agg, [&](const std::string& c) {
        return segment_reduce(all, {}, tails, ne, parse_aggregation(c));
      });
      hs.push_back(finish_layer(p, slots, self_term, m, mixer, ctx));
      ent = connect(k, ent, hs.back(), mixer);
      if (!no_edge) rel = matmul(rel, parameter(p + "w_rel"));
    }
    return {readout_layers(hs, mixer), no_edge ? parameter("decoder_relation") : rel};
  }

  /// DistMult scores of every entity as tail for each (head, relation) query: [B, Ne].
  Tensor kg_score(const KgState& state, const std::vector<std::uint32_t>& heads,
                  const std::vector<std::uint32_t>& relations) const {
    if (heads.size() != relations.size() || heads.empty()) throw ContractError("kg_score: bad query batch");
    const Tensor q = mul(gather_rows(state.entities, heads), gather_rows(state.relations, relations));
    return matmul(q, transpose(state.entities));
  }

  /// Network over the restricted space with copies of the shared weights.
  Supernet child(const std::vector<std::size_t>& choice) const {
    Rng scratch(0);
    Supernet c(space_.restricted(choice), dims_, scratch);
    for (auto& [name, t] : c.params_) {
      const auto& src = parameter(name).data();
      std::copy(src.begin(), src.end(), t.data().begin());
    }
    return c;
  }

  nlohmann::ordered_json save() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [name, t] : params_) {
      j[name] = {{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
    }
    return j;
  }

  void load(const nlohmann::ordered_json& j) {
    try {
      for (auto& [name, t] : params_) {
        const auto& e = j.at(name);
        if (e.at("shape").get<Shape>() != t.shape()) throw ConfigError("parameter '" + name + "' has a different shape");
        const auto values = e.at("data").get<std::vector<double>>();
        if (values.size() != t.numel()) throw ConfigError("parameter '" + name + "' has the wrong length");
        std::copy(values.begin(), values.end(), t.data().begin());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed model JSON: ") + e.what());
    }
  }

 private:
  struct LayerSlots {
    int phi = -1, agg = -1, com = -1, act = -1, connect = -1;
  };

  static void require(bool ok, const char* msg) {
    if (!ok) throw ContractError(msg);
  }

  void register_parameter(std::string name, Tensor t) {
    t.set_requires_grad(true);
    params_.emplace_back(std::move(name), std::move(t));
  }

  void index_slots() {
    slots_.assign(space_.layers, {});
    for (std::size_t k = 0; k < space_.layers; ++k) {
      slots_[k].phi = space_.find(layer_slot_id(k, SlotKind::Composition));
      slots_[k].agg = space_.find(layer_slot_id(k, SlotKind::Aggregation));
      slots_[k].com = space_.find(layer_slot_id(k, SlotKind::Combination));
      slots_[k].act = space_.find(layer_slot_id(k, SlotKind::Activation));
      slots_[k].connect = space_.find(layer_slot_id(k, SlotKind::LayerConnect));
    }
    layer_agg_slot_ = space_.find("layer_agg");
    pool_slot_ = space_.find("pool");
  }

  bool offers(int slot, const std::string& candidate) const {
    if (slot < 0) return false;
    const auto& c = space_.slots[static_cast<std::size_t>(slot)].candidates;
    return std::find(c.begin(), c.end(), candidate) != c.end();
  }

  template <class F>
  Tensor mix(const Mixer& mixer, int slot, F&& eval) const {
    if (slot < 0) throw ContractError("slot missing from the search space");
    const auto& catalog = space_.slots[static_cast<std::size_t>(slot)];
    return mixer.mix(static_cast<std::size_t>(slot), catalog.candidates.size(),
                     [&](std::size_t i) { return eval(catalog.candidates[i]); });
  }

  Tensor finish_layer(const std::string& p, const LayerSlots& slots, const Tensor& self_term, const Tensor& m,
                      const Mixer& mixer, ForwardContext& ctx) const {
    const Tensor c = mix(mixer, slots.com, [&](const std::string& name) {
      if (name == "sum") return add(self_term, m);
      return matmul(concat({self_term, m}), parameter(p + "com_concat"));
    });
    Tensor a = mix(mixer, slots.act, [&](const std::string& name) {
      if (name == "relu") return relu(c);
      if (name == "prelu") return prelu(c, parameter(p + "prelu"));
      return autogel::tanh(c);
    });
    if (ctx.training && ctx.dropout > 0.0) {
      if (!ctx.rng) throw ContractError("dropout needs an rng");
      a = dropout(a, dropout_mask(a.numel(), ctx.dropout, *ctx.rng));
    }
    return a;
  }

  Tensor connect(std::size_t k, const Tensor& h_prev, const Tensor& h_new, const Mixer& mixer) const {
    const int slot = slots_[k].connect;
    if (slot < 0) return h_new;
    return mix(mixer, slot, [&](const std::string& name) {
      const auto kind = parse_layer_connect(name);
      return layer_connect(kind, h_prev, h_new,
                           kind == LayerConnect::Concat ? &parameter("L" + std::to_string(k) + ".lc_concat") : nullptr);
    });
  }

  Tensor readout_layers(const std::vector<Tensor>& hs, const Mixer& mixer) const {
    if (layer_agg_slot_ < 0) return hs.back();
    return mix(mixer, layer_agg_slot_, [&](const std::string& name) {
      const auto kind = parse_layer_aggregate(name);
      return layer_aggregate(kind, hs, kind == LayerAggregate::Concat ? &parameter("layer_agg.concat") : nullptr);
    });
  }

  SearchSpace space_;
  ModelDims dims_;
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<LayerSlots> slots_;
  int layer_agg_slot_ = -1;
  int pool_slot_ = -1;
};

}  // namespace autogel
