#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "autogel/errors.hpp"
#include "autogel/tensor.hpp"

namespace autogel {

enum class TaskKind { LinkHomogeneous, LinkKnowledgeGraph, NodeClassification, GraphClassification };

inline const char* task_name(TaskKind t) {
  switch (t) {
    case TaskKind::LinkHomogeneous: return "lp_homo";
    case TaskKind::LinkKnowledgeGraph: return "lp_kg";
    case TaskKind::NodeClassification: return "nc";
    case TaskKind::GraphClassification: return "gc";
  }
  return "?";
}

inline TaskKind parse_task(const std::string& s) {
  for (auto t : {TaskKind::LinkHomogeneous, TaskKind::LinkKnowledgeGraph, TaskKind::NodeClassification,
                 TaskKind::GraphClassification}) {
    if (s == task_name(t)) return t;
  }
  throw ConfigError("unknown task '" + s + "' (expected lp_homo, lp_kg, nc or gc)");
}

enum class SlotKind { Composition, Aggregation, Combination, Activation, LayerConnect, LayerAggregate, Pool };

inline const char* slot_kind_name(SlotKind k) {
  switch (k) {
    case SlotKind::Composition: return "phi";
    case SlotKind::Aggregation: return "agg";
    case SlotKind::Combination: return "com";
    case SlotKind::Activation: return "act";
    case SlotKind::LayerConnect: return "layer_connect";
    case SlotKind::LayerAggregate: return "layer_agg";
    case SlotKind::Pool: return "pool";
  }
  return "?";
}

/// Ablation switches. Each one removes or fixes part of the search space.
struct Ablations {
  bool intra_only = false;         // no layer_connect / layer_agg slots
  bool diff_pool = false;          // pair readout fixed to |h_u - h_v|
  bool shared_delta = false;       // one W instead of W_self / W_neigh
  bool shared_lambda = false;      // one W instead of W_sl / W_O / W_I
  bool no_edge_embedding = false;  // phi(h_u, h_e) replaced by h_u
  bool darts_mode = false;         // deterministic softmax mixing instead of sampling

  static constexpr const char* kNames[] = {"intra_only",        "diff_pool",         "shared_delta",
                                           "shared_lambda",     "no_edge_embedding", "darts_mode"};

  bool& flag(const std::string& name) {
    if (name == "intra_only") return intra_only;
    if (name == "diff_pool") return diff_pool;
    if (name == "shared_delta") return shared_delta;
    if (name == "shared_lambda") return shared_lambda;
    if (name == "no_edge_embedding") return no_edge_embedding;
    if (name == "darts_mode") return darts_mode;
    throw ConfigError("unknown ablation flag '" + name + "'");
  }

  static Ablations parse(const std::vector<std::string>& names) {
    Ablations a;
    for (const auto& n : names) a.flag(n) = true;
    return a;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    Ablations copy = *this;
    for (const char* n : kNames)
      if (copy.flag(n)) out.emplace_back(n);
    return out;
  }

  bool operator==(const Ablations&) const = default;
};

struct SlotCatalog {
  std::string id;
  SlotKind kind;
  std::vector<std::string> candidates;
  int layer = -1;  // -1 for global slots

  std::size_t index_of(const std::string& name) const {
    auto it = std::find(candidates.begin(), candidates.end(), name);
    if (it == candidates.end()) throw ConfigError("slot " + id + " has no candidate '" + name + "'");
    return static_cast<std::size_t>(it - candidates.begin());
  }
};

struct SearchSpace {
  TaskKind task = TaskKind::LinkHomogeneous;
  std::size_t layers = 1;
  Ablations ablations;
  std::vector<SlotCatalog> slots;

  /// Index of slot `id`, or -1 when the slot is not part of this space.
  int find(const std::string& id) const {
    for (std::size_t i = 0; i < slots.size(); ++i)
      if (slots[i].id == id) return static_cast<int>(i);
    return -1;
  }

  std::size_t count(SlotKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(slots.begin(), slots.end(), [&](const SlotCatalog& s) { return s.kind == kind; }));
  }

  /// Same slots, each restricted to the single chosen candidate.
  SearchSpace restricted(const std::vector<std::size_t>& choice) const {
    if (choice.size() != slots.size()) throw ContractError("restricted(): one choice per slot required");
    SearchSpace out = *this;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (choice[i] >= slots[i].candidates.size()) throw ContractError("restricted(): choice out of range");
      out.slots[i].candidates = {slots[i].candidates[choice[i]]};
    }
    return out;
  }
};

inline std::string layer_slot_id(std::size_t layer, SlotKind kind) {
  return "L" + std::to_string(layer) + "." + slot_kind_name(kind);
}

/// Slot catalogs for a task. Per layer: [phi], agg, com, act, [layer_connect];
/// then [layer_agg] and [pool].
inline SearchSpace make_search_space(TaskKind task, std::size_t layers, Ablations ablations = {}) {
  if (layers < 1) throw ConfigError("layer count must be at least 1");
  const bool kg = task == TaskKind::LinkKnowledgeGraph;
  if (ablations.diff_pool && task != TaskKind::LinkHomogeneous) {
    throw ConfigError("diff_pool applies only to lp_homo");
  }
  if (ablations.shared_delta && kg) throw ConfigError("shared_delta applies only to homogeneous graphs");
  if ((ablations.shared_lambda || ablations.no_edge_embedding) && !kg) {
    throw ConfigError("shared_lambda and no_edge_embedding apply only to lp_kg");
  }
  SearchSpace sp;
  sp.task = task;
  sp.layers = layers;
  sp.ablations = ablations;
  for (std::size_t k = 0; k < layers; ++k) {
    const int l = static_cast<int>(k);
    if (kg && !ablations.no_edge_embedding) {
      sp.slots.push_back({layer_slot_id(k, SlotKind::Composition), SlotKind::Composition, {"sub", "mult", "corr"}, l});
    }
    sp.slots.push_back({layer_slot_id(k, SlotKind::Aggregation), SlotKind::Aggregation, {"sum", "mean", "max"}, l});
    sp.slots.push_back({layer_slot_id(k, SlotKind::Combination), SlotKind::Combination, {"sum", "concat"}, l});
    sp.slots.push_back({layer_slot_id(k, SlotKind::Activation), SlotKind::Activation,
                        kg ? std::vector<std::string>{"tanh"} : std::vector<std::string>{"relu", "prelu"}, l});
    if (!ablations.intra_only) {
      sp.slots.push_back({layer_slot_id(k, SlotKind::LayerConnect), SlotKind::LayerConnect,
                          {"skip", "lc_sum", "lc_concat"}, l});
    }
  }
  if (!ablations.intra_only) {
    sp.slots.push_back({"layer_agg", SlotKind::LayerAggregate, {"skip", "la_concat", "la_max"}, -1});
  }
  if (task == TaskKind::LinkHomogeneous) {
    sp.slots.push_back({"pool", SlotKind::Pool,
                        ablations.diff_pool ? std::vector<std::string>{"diff"}
                                            : std::vector<std::string>{"sum", "max", "concat"},
                        -1});
  } else if (task == TaskKind::GraphClassification) {
    sp.slots.push_back({"pool", SlotKind::Pool, {"global_add_pool", "global_mean_pool", "global_max_pool"}, -1});
  }
  return sp;
}

enum class SelectionMode { Sampled, Relaxed, Derived };

/// Per-slot mixing weights theta over the slot's candidates.
struct Selection {
  SelectionMode mode = SelectionMode::Relaxed;
  std::vector<Tensor> weights;
};

inline void validate_selection(const Selection& sel, const SearchSpace& space) {
  if (sel.weights.size() != space.slots.size()) {
    throw ContractError("selection has " + std::to_string(sel.weights.size()) + " slots, space has " +
                        std::to_string(space.slots.size()));
  }
  for (std::size_t i = 0; i < sel.weights.size(); ++i) {
    const auto& w = sel.weights[i];
    if (w.numel() != space.slots[i].candidates.size()) {
      throw ContractError("selection for slot " + space.slots[i].id + " has wrong length");
    }
    double total = 0.0;
    std::size_t ones = 0;
    for (double v : w.data()) {
      if (v < 0.0) throw ContractError("negative weight in slot " + space.slots[i].id);
      total += v;
      ones += v == 1.0 ? 1 : 0;
    }
    if (std::fabs(total - 1.0) > 1e-9) throw ContractError("weights of slot " + space.slots[i].id + " do not sum to 1");
    if (sel.mode == SelectionMode::Derived && ones != 1) {
      throw ContractError("derived selection for slot " + space.slots[i].id + " is not one-hot");
    }
  }
}

inline Selection one_hot_selection(const SearchSpace& space, const std::vector<std::size_t>& choice) {
  if (choice.size() != space.slots.size()) throw ContractError("one choice per slot required");
  Selection sel;
  sel.mode = SelectionMode::Derived;
  for (std::size_t i = 0; i < choice.size(); ++i) {
    std::vector<double> w(space.slots[i].candidates.size(), 0.0);
    w.at(choice[i]) = 1.0;
    sel.weights.push_back(Tensor::vector(std::move(w)));
  }
  return sel;
}

/// Uniform relaxed weights (all candidates equally mixed).
inline Selection uniform_selection(const SearchSpace& space) {
  Selection sel;
  sel.mode = SelectionMode::Relaxed;
  for (const auto& s : space.slots) {
    const auto n = s.candidates.size();
    sel.weights.push_back(Tensor::vector(std::vector<double>(n, 1.0 / static_cast<double>(n))));
  }
  return sel;
}

/// One chosen candidate per slot plus the dimensions needed to rebuild it.
/// Serialized as JSON: {"task", "layers", "hidden_dim", "ablations", "slots": {id: candidate}}.
struct DerivedArchitecture {
  SearchSpace space;                // the full (unrestricted) catalog
  std::vector<std::size_t> choice;  // per slot
  std::size_t hidden_dim = 0;

  std::string chosen(const std::string& slot_id) const {
    const int i = space.find(slot_id);
    if (i < 0) throw ContractError("no slot " + slot_id);
    return space.slots[static_cast<std::size_t>(i)].candidates[choice[static_cast<std::size_t>(i)]];
  }

  Selection selection() const { return one_hot_selection(space, choice); }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task_name(space.task);
    j["layers"] = space.layers;
    j["hidden_dim"] = hidden_dim;
    j["ablations"] = space.ablations.names();
    nlohmann::ordered_json slots = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < space.slots.size(); ++i) {
      slots[space.slots[i].id] = space.slots[i].candidates[choice[i]];
    }
    j["slots"] = slots;
    return j;
  }

  static DerivedArchitecture from_json(const nlohmann::ordered_json& j) {
    DerivedArchitecture a;
    try {
      const auto task = parse_task(j.at("task").get<std::string>());
      const auto layers = j.at("layers").get<std::size_t>();
      const auto abl = Ablations::parse(j.value("ablations", std::vector<std::string>{}));
      a.space = make_search_space(task, layers, abl);
      a.hidden_dim = j.at("hidden_dim").get<std::size_t>();
      const auto& slots = j.at("slots");
      if (slots.size() != a.space.slots.size()) throw ConfigError("architecture slot count does not match its task");
      for (const auto& s : a.space.slots) a.choice.push_back(s.index_of(slots.at(s.id).get<std::string>()));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("malformed architecture JSON: ") + e.what());
    }
    return a;
  }

  bool operator==(const DerivedArchitecture& o) const {
    return to_json() == o.to_json();
  }
};

}  // namespace autogel
