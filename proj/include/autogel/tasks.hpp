#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "autogel/datasets.hpp"
#include "autogel/link_data.hpp"
#include "autogel/metrics.hpp"
#include "autogel/search.hpp"

namespace autogel {

namespace detail {

inline std::size_t split_slot(Split s) { return static_cast<std::size_t>(s); }

/// Shuffled train/valid/test index lists; valid and test get at least one item.
inline std::array<std::vector<std::size_t>, 3> split_indices(std::size_t n, SplitRatios r, std::uint64_t seed) {
  if (std::fabs(r.train + r.valid + r.test - 1.0) > 1e-9 || r.train < 0 || r.valid < 0 || r.test < 0) {
    throw SplitError("split ratios must be non-negative and sum to 1");
  }
  const auto nv = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r.valid * static_cast<double>(n))));
  const auto nt = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r.test * static_cast<double>(n))));
  if (n < nv + nt + 1) throw SplitError("cannot split " + std::to_string(n) + " items into train/valid/test");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  auto rng = Rng::stream(seed, "split");
  rng.shuffle(order);
  std::array<std::vector<std::size_t>, 3> out;
  out[0].assign(order.begin() + static_cast<std::ptrdiff_t>(nv + nt), order.end());
  out[1].assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nv));
  out[2].assign(order.begin() + static_cast<std::ptrdiff_t>(nv), order.begin() + static_cast<std::ptrdiff_t>(nv + nt));
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

inline std::uint64_t query_key(std::uint32_t head, std::uint32_t relation) {
  return (static_cast<std::uint64_t>(head) << 32) | relation;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Link prediction on homogeneous graphs

struct LinkTaskOptions {
  std::size_t hops = 2;
  std::size_t de_cap = 3;
  std::size_t eval_batch = 256;
};

class LinkPredictionTask : public Task {
 public:
  using Options = LinkTaskOptions;

  /// Instances are extracted from the split's training graph only.
  explicit LinkPredictionTask(const LinkSplit& split, Options o = {}) : opt_(o), graph_(split.train_graph) {
    for (const auto* held : {&split.valid_pos, &split.test_pos})
      for (auto [u, v] : *held)
        if (graph_.has_edge(u, v)) throw ContractError("training graph leaks a held-out positive link");
    build(Split::Train, split.train_pos, split.train_neg);
    build(Split::Valid, split.valid_pos, split.valid_neg);
    build(Split::Test, split.test_pos, split.test_neg);
  }

  /// Same links in every split (memorization runs).
  static LinkPredictionTask memorization(const Graph& g, const std::vector<Edge>& pos, const std::vector<Edge>& neg,
                                         Options o = {}) {
    LinkPredictionTask t(o, g);
    for (auto s : {Split::Train, Split::Valid, Split::Test}) t.build(s, pos, neg);
    return t;
  }

  TaskKind kind() const override { return TaskKind::LinkHomogeneous; }
  ModelDims dims(std::size_t hidden) const override { return {2 * (opt_.de_cap + 1), hidden, 1, 0, 0}; }
  std::size_t train_size() const override { return inst_[0].size(); }
  std::string primary_metric() const override { return "auc"; }

  Tensor loss(const Supernet& net, const Mixer& mixer, ForwardContext& ctx,
              const std::vector<std::size_t>& items) const override {
    std::vector<const EnclosingSubgraph*> batch;
    for (auto i : items) batch.push_back(&inst_[0].at(i));
    const auto b = batch_link_instances(batch);
    return binary_cross_entropy(net.forward(b, mixer, ctx), b.targets);
  }

  /// Link logits for every instance of a split, in instance order.
  std::vector<double> scores(const Supernet& net, const Mixer& mixer, Split split) const {
    NoGradGuard guard;
    ForwardContext ctx;
    const auto& inst = inst_[detail::split_slot(split)];
    std::vector<double> out;
    for (std::size_t i = 0; i < inst.size(); i += opt_.eval_batch) {
      std::vector<const EnclosingSubgraph*> batch;
      for (std::size_t j = i; j < std::min(inst.size(), i + opt_.eval_batch); ++j) batch.push_back(&inst[j]);
      const auto logits = net.forward(batch_link_instances(batch), mixer, ctx);
      out.insert(out.end(), logits.data().begin(), logits.data().end());
    }
    return out;
  }

  std::map<std::string, double> evaluate(const Supernet& net, const Mixer& mixer, Split split) const override {
    const auto s = scores(net, mixer, split);
    const auto& inst = inst_[detail::split_slot(split)];
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < s.size(); ++i) (inst[i].label == 1 ? pos : neg).push_back(s[i]);
    return {{"auc", auc(pos, neg)}};
  }

  /// AUC of the common-neighbors heuristic on the training graph.
  double common_neighbors_auc(Split split) const {
    const auto k = detail::split_slot(split);
    return auc(common_neighbors_baseline(graph_, pos_[k]), common_neighbors_baseline(graph_, neg_[k]));
  }

  const std::vector<EnclosingSubgraph>& instances(Split split) const { return inst_[detail::split_slot(split)]; }
  const Graph& training_graph() const { return graph_; }

 private:
  LinkPredictionTask(Options o, const Graph& g) : opt_(o), graph_(g) {}

  void build(Split split, const std::vector<Edge>& pos, const std::vector<Edge>& neg) {
    if (pos.empty() || neg.empty()) throw SplitError(std::string(split_name(split)) + " split has no positive or negative links");
    const auto k = detail::split_slot(split);
    pos_[k] = pos;
    neg_[k] = neg;
    auto& inst = inst_[k];
    for (const auto& e : pos) inst.push_back(make_link_instance(graph_, e, 1, opt_.hops, opt_.de_cap));
    for (const auto& e : neg) inst.push_back(make_link_instance(graph_, e, 0, opt_.hops, opt_.de_cap));
  }

  Options opt_;
  Graph graph_;
  std::array<std::vector<EnclosingSubgraph>, 3> inst_;
  std::array<std::vector<Edge>, 3> pos_, neg_;
};

// ---------------------------------------------------------------------------
// Link prediction on knowledge graphs

/// 1-N scoring of (head, relation) queries against every entity. Tail
/// queries use the original relation and head queries its inverse.
class KnowledgeGraphTask : public Task {
 public:
  explicit KnowledgeGraphTask(KgDataset ds, double label_smoothing = 0.1, std::size_t eval_batch = 256)
      : ds_(std::move(ds)), smoothing_(label_smoothing), eval_batch_(eval_batch) {
    if (ds_.train.empty()) throw ConfigError("knowledge graph has no training triples");
    if (ds_.valid.empty() || ds_.test.empty()) throw SplitError("knowledge graph needs validation and test triples");
    if (label_smoothing < 0.0 || label_smoothing >= 1.0) throw ConfigError("label smoothing must lie in [0, 1)");
    batch_ = make_kg_batch(ds_.graph);
    const auto r = static_cast<std::uint32_t>(ds_.relations.size());
    std::map<std::uint64_t, std::vector<std::uint32_t>> train_answers;
    auto add_fact = [&](const Triple& t, bool train) {
      for (auto [h, rel, ans] : {std::array<std::uint32_t, 3>{t.head, t.relation, t.tail},
                                  std::array<std::uint32_t, 3>{t.tail, t.relation + r, t.head}}) {
        known_[detail::query_key(h, rel)].insert(ans);
        if (train) train_answers[detail::query_key(h, rel)].push_back(ans);
      }
    };
    for (const auto& t : ds_.train) add_fact(t, true);
    for (const auto& t : ds_.valid) add_fact(t, false);
    for (const auto& t : ds_.test) add_fact(t, false);
    for (auto& [key, answers] : train_answers) {
      std::sort(answers.begin(), answers.end());
      answers.erase(std::unique(answers.begin(), answers.end()), answers.end());
      query_head_.push_back(static_cast<std::uint32_t>(key >> 32));
      query_rel_.push_back(static_cast<std::uint32_t>(key & 0xffffffffu));
      query_answers_.push_back(std::move(answers));
    }
  }

  TaskKind kind() const override { return TaskKind::LinkKnowledgeGraph; }
  ModelDims dims(std::size_t hidden) const override {
    return {0, hidden, 1, ds_.entities.size(), ds_.relations.size()};
  }
  std::size_t train_size() const override { return query_head_.size(); }
  std::string primary_metric() const override { return "mrr"; }

  Tensor loss(const Supernet& net, const Mixer& mixer, ForwardContext& ctx,
              const std::vector<std::size_t>& items) const override {
    const auto state = net.kg_embed(batch_, mixer, ctx);
    std::vector<std::uint32_t> heads, rels;
    const auto ne = ds_.entities.size();
    const double base = smoothing_ / static_cast<double>(ne);
    std::vector<double> targets(items.size() * ne, base);
    for (std::size_t i = 0; i < items.size(); ++i) {
      heads.push_back(query_head_.at(items[i]));
      rels.push_back(query_rel_[items[i]]);
      for (auto a : query_answers_[items[i]]) targets[i * ne + a] = (1.0 - smoothing_) + base;
    }
    return binary_cross_entropy(net.kg_score(state, heads, rels), std::move(targets));
  }

  /// Filtered ranks of both the tail and the head of every triple in a split.
  std::vector<std::size_t> ranks(const Supernet& net, const Mixer& mixer, Split split) const {
    NoGradGuard guard;
    ForwardContext ctx;
    const auto state = net.kg_embed(batch_, mixer, ctx);
    const auto& triples = split == Split::Train ? ds_.train : (split == Split::Valid ? ds_.valid : ds_.test);
    const auto r = static_cast<std::uint32_t>(ds_.relations.size());
    std::vector<std::array<std::uint32_t, 3>> queries;
    for (const auto& t : triples) {
      queries.push_back({t.head, t.relation, t.tail});
      queries.push_back({t.tail, t.relation + r, t.head});
    }
    const auto ne = ds_.entities.size();
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < queries.size(); i += eval_batch_) {
      std::vector<std::uint32_t> heads, rels;
      const auto end = std::min(queries.size(), i + eval_batch_);
      for (std::size_t j = i; j < end; ++j) {
        heads.push_back(queries[j][0]);
        rels.push_back(queries[j][1]);
      }
      const auto scores = net.kg_score(state, heads, rels);
      for (std::size_t j = i; j < end; ++j) {
        const auto& q = queries[j];
        out.push_back(filtered_rank(scores.data().data() + (j - i) * ne, ne, q[2],
                                    known_.at(detail::query_key(q[0], q[1]))));
      }
    }
    return out;
  }

  std::map<std::string, double> evaluate(const Supernet& net, const Mixer& mixer, Split split) const override {
    const auto m = mrr_hits(ranks(net, mixer, split));
    return {{"mrr", m.mrr}, {"hits@1", m.hits.at(1)}, {"hits@3", m.hits.at(3)}, {"hits@10", m.hits.at(10)}};
  }

  const KgDataset& dataset() const { return ds_; }

 private:
  KgDataset ds_;
  double smoothing_;
  std::size_t eval_batch_;
  KgBatch batch_;
  std::vector<std::uint32_t> query_head_, query_rel_;
  std::vector<std::vector<std::uint32_t>> query_answers_;
  std::unordered_map<std::uint64_t, std::unordered_set<std::size_t>> known_;
};

// ---------------------------------------------------------------------------
// Node classification

class NodeClassificationTask : public Task {
 public:
  /// The graph must carry labels; without features, degree one-hot features are used.
  NodeClassificationTask(const Graph& g, std::uint64_t seed, SplitRatios ratios = {0.6, 0.2, 0.2}) {
    if (g.labels().empty()) throw ConfigError("node classification needs node labels");
    batch_ = full_graph_batch(g, g.features() ? *g.features() : degree_features(g));
    labels_ = g.labels();
    classes_ = static_cast<std::size_t>(*std::max_element(labels_.begin(), labels_.end())) + 1;
    if (classes_ < 2) throw ConfigError("node classification needs at least two classes");
    const auto parts = detail::split_indices(g.node_count(), ratios, seed);
    for (std::size_t k = 0; k < 3; ++k)
      for (auto i : parts[k]) nodes_[k].push_back(static_cast<std::uint32_t>(i));
  }

  TaskKind kind() const override { return TaskKind::NodeClassification; }
  ModelDims dims(std::size_t hidden) const override { return {batch_.features.cols(), hidden, classes_, 0, 0}; }
  std::size_t train_size() const override { return nodes_[0].size(); }
  std::string primary_metric() const override { return "accuracy"; }

  Tensor loss(const Supernet& net, const Mixer& mixer, ForwardContext& ctx,
              const std::vector<std::size_t>& items) const override {
    std::vector<std::uint32_t> rows;
    std::vector<int> y;
    for (auto i : items) {
      rows.push_back(nodes_[0].at(i));
      y.push_back(labels_[rows.back()]);
    }
    return cross_entropy(gather_rows(net.forward(batch_, mixer, ctx), rows), std::move(y));
  }

  std::map<std::string, double> evaluate(const Supernet& net, const Mixer& mixer, Split split) const override {
    NoGradGuard guard;
    ForwardContext ctx;
    const auto& rows = nodes_[detail::split_slot(split)];
    const auto logits = gather_rows(net.forward(batch_, mixer, ctx), rows);
    std::vector<int> y;
    for (auto r : rows) y.push_back(labels_[r]);
    return {{"accuracy", accuracy({logits.data().begin(), logits.data().end()}, classes_, y)}};
  }

  std::size_t class_count() const { return classes_; }
  const std::vector<std::uint32_t>& nodes(Split s) const { return nodes_[detail::split_slot(s)]; }

 private:
  GraphBatch batch_;
  std::vector<int> labels_;
  std::size_t classes_ = 0;
  std::array<std::vector<std::uint32_t>, 3> nodes_;
};

// ---------------------------------------------------------------------------
// Graph classification

class GraphClassificationTask : public Task {
 public:
  GraphClassificationTask(GraphDataset ds, std::uint64_t seed, SplitRatios ratios = {0.8, 0.1, 0.1},
                          std::size_t eval_batch = 128)
      : ds_(std::move(ds)), eval_batch_(eval_batch) {
    if (ds_.graphs.size() != ds_.labels.size()) throw ContractError("one label per graph required");
    if (ds_.class_count < 2) throw ConfigError("graph classification needs at least two classes");
    parts_ = detail::split_indices(ds_.graphs.size(), ratios, seed);
  }

  TaskKind kind() const override { return TaskKind::GraphClassification; }
  ModelDims dims(std::size_t hidden) const override {
    return {ds_.graphs.front().features()->cols(), hidden, ds_.class_count, 0, 0};
  }
  std::size_t train_size() const override { return parts_[0].size(); }
  std::string primary_metric() const override { return "accuracy"; }

  Tensor loss(const Supernet& net, const Mixer& mixer, ForwardContext& ctx,
              const std::vector<std::size_t>& items) const override {
    std::vector<std::size_t> ids;
    for (auto i : items) ids.push_back(parts_[0].at(i));
    const auto b = batch(ids);
    return cross_entropy(net.forward(b, mixer, ctx), b.classes);
  }

  std::map<std::string, double> evaluate(const Supernet& net, const Mixer& mixer, Split split) const override {
    NoGradGuard guard;
    ForwardContext ctx;
    const auto& ids = parts_[detail::split_slot(split)];
    std::vector<double> logits;
    std::vector<int> y;
    for (std::size_t i = 0; i < ids.size(); i += eval_batch_) {
      std::vector<std::size_t> chunk(ids.begin() + static_cast<std::ptrdiff_t>(i),
                                     ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), i + eval_batch_)));
      const auto b = batch(chunk);
      const auto out = net.forward(b, mixer, ctx);
      logits.insert(logits.end(), out.data().begin(), out.data().end());
      y.insert(y.end(), b.classes.begin(), b.classes.end());
    }
    return {{"accuracy", accuracy(logits, ds_.class_count, y)}};
  }

  const std::vector<std::size_t>& graphs(Split s) const { return parts_[detail::split_slot(s)]; }

 private:
  GraphBatch batch(const std::vector<std::size_t>& ids) const {
    std::vector<const Graph*> gs;
    std::vector<int> y;
    for (auto i : ids) {
      gs.push_back(&ds_.graphs[i]);
      y.push_back(ds_.labels[i]);
    }
    return batch_graphs(gs, y);
  }

  GraphDataset ds_;
  std::size_t eval_batch_;
  std::array<std::vector<std::size_t>, 3> parts_;
};

// ---------------------------------------------------------------------------

/// Search, derive and retrain for one seed.
struct PipelineResult {
  SearchResult search;
  TrainResult retrain;
  double search_seconds = 0.0;
  double retrain_seconds = 0.0;
};

inline PipelineResult run_pipeline(const Task& task, const SearchSettings& s) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto searched = search(task, s);
  const auto t1 = clock::now();
  auto trained = retrain(task, searched.architecture, s);
  const auto t2 = clock::now();
  return {std::move(searched), std::move(trained), std::chrono::duration<double>(t1 - t0).count(),
          std::chrono::duration<double>(t2 - t1).count()};
}

}  // namespace autogel
