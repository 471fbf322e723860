#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "autogel/adam.hpp"
#include "autogel/supernet.hpp"

namespace autogel {

enum class Split { Train, Valid, Test };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

/// What search and retraining need from a task pipeline.
class Task {
 public:
  virtual ~Task() = default;
  virtual TaskKind kind() const = 0;
  virtual ModelDims dims(std::size_t hidden_dim) const = 0;
  /// Number of training items (links, queries, nodes or graphs).
  virtual std::size_t train_size() const = 0;
  /// Mean training loss over the given training items.
  virtual Tensor loss(const Supernet& net, const Mixer& mixer, ForwardContext& ctx,
                      const std::vector<std::size_t>& items) const = 0;
  /// Metric used for snapshot selection and early stopping (higher is better).
  virtual std::string primary_metric() const = 0;
  virtual std::map<std::string, double> evaluate(const Supernet& net, const Mixer& mixer, Split split) const = 0;
};

/// Structure parameters: one logit vector per slot, alpha = exp(logit).
struct ArchParams {
  std::vector<Tensor> logits;

  /// alpha = 1 for every candidate.
  static ArchParams uniform(const SearchSpace& space) {
    ArchParams a;
    for (const auto& s : space.slots) a.logits.push_back(Tensor::zeros({s.candidates.size()}, true));
    return a;
  }

  static ArchParams from_alpha(const std::vector<std::vector<double>>& alpha) {
    ArchParams a;
    for (const auto& row : alpha) {
      if (row.empty()) throw ContractError("alpha: empty slot");
      std::vector<double> l;
      for (double v : row) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ContractError("alpha entries must be positive and finite");
        l.push_back(std::log(v));
      }
      a.logits.push_back(Tensor::vector(std::move(l), true));
    }
    return a;
  }

  std::vector<std::vector<double>> values() const {
    std::vector<std::vector<double>> out;
    for (const auto& l : logits) out.emplace_back(l.data().begin(), l.data().end());
    return out;
  }

  std::vector<std::vector<double>> alpha() const {
    auto out = values();
    for (auto& row : out)
      for (auto& v : row) v = std::exp(v);
    return out;
  }

  void assign(const std::vector<std::vector<double>>& values) {
    if (values.size() != logits.size()) throw ContractError("alpha snapshot has the wrong slot count");
    for (std::size_t i = 0; i < logits.size(); ++i) {
      if (values[i].size() != logits[i].numel()) throw ContractError("alpha snapshot has the wrong width");
      std::copy(values[i].begin(), values[i].end(), logits[i].data().begin());
    }
  }
};

/// tau_t = tau0 * (tau_end / tau0)^(t / T), T = epochs - 1.
inline double temperature(std::size_t epoch, std::size_t epochs, double tau0, double tau_end) {
  if (!(tau0 >= tau_end && tau_end > 0.0)) throw ContractError("temperature: need tau0 >= tau_end > 0");
  if (epochs <= 1) return tau0;
  const double t = static_cast<double>(std::min(epoch, epochs - 1)) / static_cast<double>(epochs - 1);
  return tau0 * std::pow(tau_end / tau0, t);
}

/// Uniform draw in the open interval (0, 1).
inline double open_uniform(Rng& rng) {
  double u = 0.0;
  do {
    u = rng.uniform();
  } while (u <= 0.0 || u >= 1.0);
  return u;
}

/// Concrete-distribution sample with explicit uniforms U (one per candidate):
/// theta = softmax((log alpha - log(-log U)) / tau), differentiable in alpha.
inline Selection sample_architecture(const ArchParams& arch, double tau,
                                     const std::vector<std::vector<double>>& uniforms) {
  if (!(tau > 0.0)) throw ContractError("temperature must be positive");
  if (uniforms.size() != arch.logits.size()) throw ContractError("one uniform vector per slot required");
  Selection sel;
  sel.mode = SelectionMode::Sampled;
  for (std::size_t i = 0; i < arch.logits.size(); ++i) {
    const auto& l = arch.logits[i];
    if (uniforms[i].size() != l.numel()) throw ContractError("uniform vector width differs from its slot");
    std::vector<double> g;
    for (double u : uniforms[i]) {
      if (!(u > 0.0 && u < 1.0)) throw ContractError("uniforms must lie strictly inside (0, 1)");
      g.push_back(-std::log(-std::log(u)));
    }
    sel.weights.push_back(softmax(mul_constant(add(l, Tensor::vector(std::move(g))), 1.0 / tau)));
  }
  return sel;
}

inline Selection sample_architecture(const ArchParams& arch, double tau, Rng& rng) {
  std::vector<std::vector<double>> uniforms;
  for (const auto& l : arch.logits) {
    std::vector<double> u(l.numel());
    for (auto& x : u) x = open_uniform(rng);
    uniforms.push_back(std::move(u));
  }
  return sample_architecture(arch, tau, uniforms);
}

/// Deterministic relaxation: theta = softmax(log alpha).
inline Selection mix_darts(const ArchParams& arch) {
  Selection sel;
  sel.mode = SelectionMode::Relaxed;
  for (const auto& l : arch.logits) sel.weights.push_back(softmax(l));
  return sel;
}

/// Argmax per slot, ties to the lowest index.
inline std::vector<std::size_t> argmax_choice(const std::vector<std::vector<double>>& logits) {
  std::vector<std::size_t> c;
  for (const auto& row : logits) {
    if (row.empty()) throw ContractError("argmax of an empty slot");
    c.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
  return c;
}

inline DerivedArchitecture derive_architecture(const ArchParams& arch, const SearchSpace& space,
                                               std::size_t hidden_dim) {
  if (arch.logits.size() != space.slots.size()) throw ContractError("alpha does not match the search space");
  DerivedArchitecture d;
  d.space = space;
  d.choice = argmax_choice(arch.values());
  d.hidden_dim = hidden_dim;
  return d;
}

struct SearchSettings {
  std::size_t hidden_dim = 16;
  std::size_t layers = 2;
  Ablations ablations;
  std::size_t search_epochs = 10;
  std::size_t retrain_epochs = 10;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  std::optional<double> arch_learning_rate;  // defaults to learning_rate
  double dropout = 0.0;
  double tau_start = 1.0;
  double tau_end = 0.1;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

struct SearchRecord {
  std::size_t epoch = 0;
  double tau = 0.0;
  std::vector<std::vector<double>> theta;  // first mini-batch of the epoch
  double train_loss = 0.0;
  double valid = 0.0;
  std::vector<std::vector<double>> alpha;  // after the epoch
};

class SearchLog {
 public:
  SearchLog() = default;
  explicit SearchLog(std::vector<std::string> slot_ids, std::string metric)
      : slots_(std::move(slot_ids)), metric_(std::move(metric)) {}

  void append(SearchRecord r) { records_.push_back(std::move(r)); }
  const std::vector<SearchRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }

  nlohmann::ordered_json record_json(const SearchRecord& r) const {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["tau"] = r.tau;
    j["train_loss"] = r.train_loss;
    j["valid_" + metric_] = r.valid;
    nlohmann::ordered_json theta = nlohmann::ordered_json::object(), alpha = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < slots_.size(); ++i) {
      theta[slots_[i]] = r.theta.at(i);
      alpha[slots_[i]] = r.alpha.at(i);
    }
    j["theta"] = theta;
    j["alpha"] = alpha;
    return j;
  }

  /// One JSON object per line.
  std::string to_jsonl() const {
    std::string out;
    for (const auto& r : records_) out += record_json(r).dump() + "\n";
    return out;
  }

 private:
  std::vector<std::string> slots_;
  std::string metric_;
  std::vector<SearchRecord> records_;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (n == 0) throw ContractError("no training items");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

inline std::vector<std::vector<double>> selection_values(const Selection& sel) {
  std::vector<std::vector<double>> out;
  for (const auto& w : sel.weights) out.emplace_back(w.data().begin(), w.data().end());
  return out;
}

inline double checked_loss(const Tensor& loss, std::size_t epoch, std::size_t batch) {
  const double v = loss.item();
  if (!std::isfinite(v)) {
    throw DivergenceError("loss became non-finite at epoch " + std::to_string(epoch) + ", batch " +
                          std::to_string(batch));
  }
  return v;
}

inline std::vector<std::vector<double>> snapshot(const Supernet& net) {
  std::vector<std::vector<double>> out;
  for (const auto& t : net.parameters()) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

inline void restore(const Supernet& net, const std::vector<std::vector<double>>& values) {
  auto params = net.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) std::copy(values[i].begin(), values[i].end(), params[i].data().begin());
}

}  // namespace detail

struct SearchResult {
  SearchLog log;
  DerivedArchitecture architecture;
  std::vector<std::vector<double>> best_logits;
  double best_valid = 0.0;
  std::size_t best_epoch = 0;
};

/// Joint single-level optimization of weights and structure parameters.
/// Validation scores the currently derived child inside the supernet; the
/// best-validation alpha snapshot is derived at the end.
inline SearchResult search(const Task& task, const SearchSettings& s) {
  if (s.search_epochs == 0) throw ConfigError("search epochs must be positive");
  const auto space = make_search_space(task.kind(), s.layers, s.ablations);
  auto init_rng = Rng::stream(s.seed, "init");
  Supernet net(space, task.dims(s.hidden_dim), init_rng);
  auto arch = ArchParams::uniform(space);
  Adam weights(net.parameters(), {s.learning_rate});
  Adam structure(arch.logits, {s.arch_learning_rate.value_or(s.learning_rate)});
  auto sampling = Rng::stream(s.seed, "sampling");
  auto dropout_rng = Rng::stream(s.seed, "dropout");
  auto shuffle = Rng::stream(s.seed, "shuffle");

  std::vector<std::string> ids;
  for (const auto& slot : space.slots) ids.push_back(slot.id);
  SearchResult result;
  result.log = SearchLog(ids, task.primary_metric());
  bool have_best = false;

  for (std::size_t epoch = 0; epoch < s.search_epochs; ++epoch) {
    SearchRecord rec;
    rec.epoch = epoch;
    rec.tau = temperature(epoch, s.search_epochs, s.tau_start, s.tau_end);
    const auto batches = detail::epoch_batches(task.train_size(), s.batch_size, shuffle);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tape tape;
      TapeScope scope(tape);
      try {
        const Selection sel =
            s.ablations.darts_mode ? mix_darts(arch) : sample_architecture(arch, rec.tau, sampling);
        if (b == 0) rec.theta = detail::selection_values(sel);
        ForwardContext ctx{true, s.dropout, &dropout_rng};
        const Tensor loss = task.loss(net, Mixer::relaxed(sel), ctx, batches[b]);
        total += detail::checked_loss(loss, epoch, b);
        weights.zero_grad();
        structure.zero_grad();
        backward(loss);
      } catch (const NumericError& e) {
        throw DivergenceError("search diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      weights.step();
      structure.step();
    }
    rec.train_loss = total / static_cast<double>(batches.size());
    const auto derived = argmax_choice(arch.values());
    rec.valid = task.evaluate(net, Mixer::child(derived), Split::Valid).at(task.primary_metric());
    rec.alpha = arch.values();
    if (!have_best || rec.valid > result.best_valid) {
      have_best = true;
      result.best_valid = rec.valid;
      result.best_epoch = epoch;
      result.best_logits = rec.alpha;
    }
    result.log.append(std::move(rec));
  }
  weights.zero_grad();
  structure.zero_grad();
  ArchParams best = ArchParams::uniform(space);
  best.assign(result.best_logits);
  result.architecture = derive_architecture(best, space, s.hidden_dim);
  return result;
}

struct EpochCurve {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid = 0.0;
};

struct TrainResult {
  Supernet model;
  std::vector<EpochCurve> curve;
  std::size_t best_epoch = 0;
  double best_valid = 0.0;
  std::map<std::string, double> valid;
  std::map<std::string, double> test;
};

/// Trains a network whose slots each hold a single candidate, with early
/// stopping on the validation metric; the best weights are restored.
inline TrainResult train_network(const Task& task, const SearchSpace& space, const SearchSettings& s) {
  for (const auto& slot : space.slots) {
    if (slot.candidates.size() != 1) throw ContractError("train_network expects a single candidate per slot");
  }
  if (s.retrain_epochs == 0) throw ConfigError("retrain epochs must be positive");
  auto init_rng = Rng::stream(s.seed, "init");
  TrainResult r{Supernet(space, task.dims(s.hidden_dim), init_rng), {}, 0, 0.0, {}, {}};
  const Mixer mixer = r.model.first_candidates();
  Adam weights(r.model.parameters(), {s.learning_rate});
  auto dropout_rng = Rng::stream(s.seed, "dropout");
  auto shuffle = Rng::stream(s.seed, "shuffle");
  std::vector<std::vector<double>> best_weights;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < s.retrain_epochs; ++epoch) {
    const auto batches = detail::epoch_batches(task.train_size(), s.batch_size, shuffle);
    double total = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      Tape tape;
      TapeScope scope(tape);
      try {
        ForwardContext ctx{true, s.dropout, &dropout_rng};
        const Tensor loss = task.loss(r.model, mixer, ctx, batches[b]);
        total += detail::checked_loss(loss, epoch, b);
        weights.zero_grad();
        backward(loss);
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      weights.step();
    }
    const double valid = task.evaluate(r.model, mixer, Split::Valid).at(task.primary_metric());
    r.curve.push_back({epoch, total / static_cast<double>(batches.size()), valid});
    if (best_weights.empty() || valid > r.best_valid) {
      r.best_valid = valid;
      r.best_epoch = epoch;
      best_weights = detail::snapshot(r.model);
      stale = 0;
    } else if (++stale >= s.patience) {
      break;
    }
  }
  weights.zero_grad();
  detail::restore(r.model, best_weights);
  r.valid = task.evaluate(r.model, mixer, Split::Valid);
  r.test = task.evaluate(r.model, mixer, Split::Test);
  return r;
}

/// Fresh-initialized child of a derived architecture.
inline TrainResult retrain(const Task& task, const DerivedArchitecture& arch, const SearchSettings& s) {
  if (arch.space.task != task.kind()) throw ConfigError("architecture was derived for a different task");
  SearchSettings child = s;
  child.hidden_dim = arch.hidden_dim;
  child.layers = arch.space.layers;
  child.ablations = arch.space.ablations;
  return train_network(task, arch.space.restricted(arch.choice), child);
}

}  // namespace autogel
