#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "autogel/gradcheck.hpp"
#include "autogel/link_data.hpp"
#include "autogel/supernet.hpp"

namespace autogel {

struct GradCheckEntry {
  std::string name;
  double max_error = 0.0;
};

namespace detail {

inline Tensor signed_away_from_zero(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (auto& x : v) {
    const double m = rng.uniform(0.05, 1.0);
    x = rng.bernoulli(0.5) ? m : -m;
  }
  return Tensor::matrix(r, c, std::move(v));
}

}  // namespace detail

/// Finite-difference check of every differentiable op kind on random 3x4
/// inputs, then of a full supernet loss on a five-node link instance for
/// each task (weights and architecture logits both perturbed).
inline std::vector<GradCheckEntry> gradcheck_suite(std::uint64_t seed = 0, int trials = 20, double eps = 1e-5) {
  Rng rng = Rng::stream(seed, "gradcheck");
  std::vector<double> w(12);
  for (auto& x : w) x = rng.uniform(-1.0, 1.0);
  auto weigh = [w](const Tensor& t) {
    std::vector<double> c(t.numel());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = w[i % w.size()];
    return sum(mul(t, Tensor::from(t.shape(), c)));
  };
  struct Case {
    const char* name;
    ScalarFn f;
    int arity;
  };
  const std::vector<Case> cases{
      {"matmul", [&](const auto& in) { return weigh(matmul(in[0], transpose(in[1]))); }, 2},
      {"transpose", [&](const auto& in) { return weigh(transpose(in[0])); }, 1},
      {"add", [&](const auto& in) { return weigh(add(in[0], in[1])); }, 2},
      {"subtract", [&](const auto& in) { return weigh(sub(in[0], in[1])); }, 2},
      {"multiply", [&](const auto& in) { return weigh(mul(in[0], in[1])); }, 2},
      {"scale", [&](const auto& in) { return weigh(scale(in[0], element(in[1], 2))); }, 2},
      {"add_constant", [&](const auto& in) { return weigh(add_constant(in[0], 0.3)); }, 1},
      {"mul_constant", [&](const auto& in) { return weigh(mul_constant(in[0], -1.7)); }, 1},
      {"add_row_bias", [&](const auto& in) { return weigh(add_row_bias(in[0], reduce_axis(in[1], 0, Reduce::Sum))); }, 2},
      {"circular_correlation", [&](const auto& in) { return weigh(circular_correlation(in[0], in[1])); }, 2},
      {"concat", [&](const auto& in) { return weigh(concat({in[0], in[1]})); }, 2},
      {"concat_rows", [&](const auto& in) { return weigh(concat_rows({in[0], in[1]})); }, 2},
      {"maximum", [&](const auto& in) { return weigh(maximum(in[0], in[1])); }, 2},
      {"abs", [&](const auto& in) { return weigh(abs(in[0])); }, 1},
      {"sum", [&](const auto& in) { return sum(mul(in[0], in[1])); }, 2},
      {"mean", [&](const auto& in) { return mean(mul(in[0], in[0])); }, 1},
      {"sum_axis", [&](const auto& in) { return weigh(reduce_axis(in[0], 0, Reduce::Sum)); }, 1},
      {"mean_axis", [&](const auto& in) { return weigh(reduce_axis(in[0], 1, Reduce::Mean)); }, 1},
      {"max_axis", [&](const auto& in) { return weigh(reduce_axis(in[0], 0, Reduce::Max)); }, 1},
      {"gather_rows", [&](const auto& in) { return weigh(gather_rows(in[0], {2, 0, 2, 1})); }, 1},
      {"segment_sum", [&](const auto& in) { return weigh(segment_reduce(in[0], {0, 1, 2, 2}, {1, 0, 1, 2}, 3, Reduce::Sum)); }, 1},
      {"segment_mean", [&](const auto& in) { return weigh(segment_reduce(in[0], {}, {1, 1, 0}, 3, Reduce::Mean)); }, 1},
      {"segment_max", [&](const auto& in) { return weigh(segment_reduce(in[0], {0, 1, 2}, {0, 0, 1}, 2, Reduce::Max)); }, 1},
      {"softmax", [&](const auto& in) { return weigh(softmax(in[0])); }, 1},
      {"log", [&](const auto& in) { return weigh(log(add_constant(mul(in[0], in[0]), 0.5))); }, 1},
      {"exp", [&](const auto& in) { return weigh(exp(in[0])); }, 1},
      {"sigmoid", [&](const auto& in) { return weigh(sigmoid(in[0])); }, 1},
      {"tanh", [&](const auto& in) { return weigh(tanh(in[0])); }, 1},
      {"relu", [&](const auto& in) { return weigh(relu(in[0])); }, 1},
      {"prelu", [&](const auto& in) { return weigh(prelu(in[0], element(in[1], 0))); }, 2},
      {"dropout", [&](const auto& in) { return weigh(dropout(in[0], {0, 2, 2, 0, 2, 2, 2, 0, 2, 0, 2, 2})); }, 1},
      {"binary_cross_entropy",
       [&](const auto& in) { return binary_cross_entropy(in[0], {1, 0, 1, 1, 0, 0, 1, 0, 0.5, 1, 0, 1}); }, 1},
      {"cross_entropy", [&](const auto& in) { return cross_entropy(in[0], {3, 0, 1}); }, 1},
      {"element", [&](const auto& in) { return mul(element(in[0], 5), element(in[0], 7)); }, 1},
      {"reshape", [&](const auto& in) { return weigh(reshape(in[0], {4, 3})); }, 1},
  };
  std::vector<GradCheckEntry> out;
  for (const auto& c : cases) {
    GradCheckEntry e{c.name, 0.0};
    for (int t = 0; t < trials; ++t) {
      std::vector<Tensor> in;
      for (int k = 0; k < c.arity; ++k) in.push_back(detail::signed_away_from_zero(3, 4, rng));
      e.max_error = std::max(e.max_error, grad_check(c.f, in, eps));
    }
    out.push_back(e);
  }

  // five-node instance: path 0-1-2-3 plus 1-4, target (0, 3)
  const Graph g(5, {{0, 1}, {1, 2}, {2, 3}, {1, 4}});
  const auto inst = make_link_instance(g, {0, 3}, 1, 2, 3);
  const auto batch = batch_link_instances({&inst});
  const auto kg = make_kg_batch(RelGraph(5, 2, {{0, 0, 1}, {1, 1, 2}, {2, 0, 3}, {1, 0, 4}}));
  for (auto task : {TaskKind::LinkHomogeneous, TaskKind::LinkKnowledgeGraph, TaskKind::NodeClassification,
                    TaskKind::GraphClassification}) {
    const auto sp = make_search_space(task, 2);
    ModelDims dims{inst.features.cols(), 3, task == TaskKind::LinkHomogeneous ? 1u : 2u, 5, 2};
    Supernet net(sp, dims, rng);
    std::vector<Tensor> logits;
    for (const auto& s : sp.slots) {
      std::vector<double> v(s.candidates.size());
      for (auto& x : v) x = rng.uniform(-0.5, 0.5);
      logits.push_back(Tensor::vector(v, true));
    }
    ScalarFn loss = [&](const std::vector<Tensor>&) {
      Selection sel;
      sel.mode = SelectionMode::Relaxed;
      for (const auto& l : logits) sel.weights.push_back(softmax(l));
      const auto mixer = Mixer::relaxed(sel);
      ForwardContext ctx;
      switch (task) {
        case TaskKind::LinkHomogeneous: return binary_cross_entropy(net.forward(batch, mixer, ctx), {1.0});
        case TaskKind::NodeClassification: return cross_entropy(net.forward(batch, mixer, ctx), {0, 1, 1, 0, 1});
        case TaskKind::GraphClassification: return cross_entropy(net.forward(batch, mixer, ctx), {1});
        case TaskKind::LinkKnowledgeGraph: {
          const auto s = net.kg_score(net.kg_embed(kg, mixer, ctx), {0, 2}, {0, 3});
          return binary_cross_entropy(s, {0, 1, 0, 0, 0, 0, 0, 0, 1, 0});
        }
      }
      throw ContractError("unknown task");
    };
    auto inputs = net.parameters();
    inputs.insert(inputs.end(), logits.begin(), logits.end());
    out.push_back({std::string("supernet_") + task_name(task), grad_check(loss, inputs, eps)});
  }
  return out;
}

}  // namespace autogel
