#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"

using namespace autogel;

namespace {

std::vector<double> theta_of(const Selection& s, std::size_t slot) {
  const auto& w = s.weights.at(slot);
  return {w.data().begin(), w.data().end()};
}

std::vector<std::vector<double>> halves(const ArchParams& a) {
  std::vector<std::vector<double>> u;
  for (const auto& l : a.logits) u.emplace_back(l.numel(), 0.5);
  return u;
}

/// Delegates to a real task but poisons the loss.
class PoisonedTask : public Task {
 public:
  explicit PoisonedTask(const Task& inner) : inner_(inner) {}
  TaskKind kind() const override { return inner_.kind(); }
  ModelDims dims(std::size_t h) const override { return inner_.dims(h); }
  std::size_t train_size() const override { return inner_.train_size(); }
  Tensor loss(const Supernet& net, const Mixer& m, ForwardContext& ctx,
              const std::vector<std::size_t>& items) const override {
    return mul_constant(inner_.loss(net, m, ctx, items), std::nan(""));
  }
  std::string primary_metric() const override { return inner_.primary_metric(); }
  std::map<std::string, double> evaluate(const Supernet& net, const Mixer& m, Split s) const override {
    return inner_.evaluate(net, m, s);
  }

 private:
  const Task& inner_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Sampling

TEST(Sampling, SingleCandidateIsOne) {
  const auto a = ArchParams::from_alpha({{3.7}});
  for (double tau : {0.05, 1.0, 7.0})
    for (double u : {0.01, 0.5, 0.99}) EXPECT_EQ(theta_of(sample_architecture(a, tau, {{u}}), 0), std::vector<double>{1.0});
}

TEST(Sampling, SymmetricAlphaIsUniform) {
  const auto a = ArchParams::from_alpha({{1, 1, 1}});
  for (double tau : {0.1, 1.0, 3.0})
    for (double v : theta_of(sample_architecture(a, tau, halves(a)), 0)) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Sampling, NoiseCancelsWithEqualUniforms) {
  const auto a = ArchParams::from_alpha({{2, 1}});
  const auto th = theta_of(sample_architecture(a, 1.0, halves(a)), 0);
  EXPECT_NEAR(th[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(th[1], 1.0 / 3.0, 1e-15);
}

TEST(Sampling, MatchesClosedFormWithNoise) {
  const auto a = ArchParams::from_alpha({{0.3, 1.7, 2.2}});
  const std::vector<double> u{0.2, 0.9, 0.41};
  const double tau = 0.7;
  std::vector<double> e(3);
  double z = 0.0;
  for (int i = 0; i < 3; ++i) {
    e[i] = std::exp((std::log(a.alpha()[0][i]) - std::log(-std::log(u[i]))) / tau);
    z += e[i];
  }
  const auto th = theta_of(sample_architecture(a, tau, {u}), 0);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(th[i], e[i] / z, 1e-12);
}

TEST(Sampling, RejectsBadInputs) {
  const auto a = ArchParams::from_alpha({{1, 2}});
  EXPECT_THROW(sample_architecture(a, 0.0, halves(a)), ContractError);
  EXPECT_THROW(sample_architecture(a, 1.0, {{0.0, 0.5}}), ContractError);
  EXPECT_THROW(sample_architecture(a, 1.0, {{0.5, 1.0}}), ContractError);
  EXPECT_THROW(sample_architecture(a, 1.0, {{0.5}}), ContractError);
  EXPECT_THROW(ArchParams::from_alpha({{1.0, 0.0}}), ContractError);
  EXPECT_THROW(ArchParams::from_alpha({{1.0, -2.0}}), ContractError);
}

TEST(Sampling, LimitFrequenciesFollowAlpha) {
  const auto a = ArchParams::from_alpha({{2, 1, 1}});
  auto rng = Rng::stream(0, "sampling");
  std::vector<int> counts(3, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const auto th = theta_of(sample_architecture(a, 0.05, rng), 0);
    ++counts[std::max_element(th.begin(), th.end()) - th.begin()];
  }
  EXPECT_NEAR(counts[0] / double(n), 0.50, 0.03);
  EXPECT_NEAR(counts[1] / double(n), 0.25, 0.03);
  EXPECT_NEAR(counts[2] / double(n), 0.25, 0.03);
}

TEST(Sampling, ThetaLiesOnTheSimplex) {
  auto rng = Rng::stream(1, "simplex");
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> alpha(1 + rng.below(6));
    for (auto& x : alpha) x = std::exp(rng.uniform(-3.0, 3.0));
    const auto a = ArchParams::from_alpha({alpha});
    const auto th = theta_of(sample_architecture(a, rng.uniform(0.1, 3.0), rng), 0);
    double s = 0.0;
    for (double v : th) {
      EXPECT_GT(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Sampling, LowerTemperatureSharpens) {
  auto rng = Rng::stream(2, "sharpen");
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> alpha(2 + rng.below(4)), u(alpha.size());
    for (auto& x : alpha) x = std::exp(rng.uniform(-2.0, 2.0));
    for (auto& x : u) x = open_uniform(rng);
    const auto a = ArchParams::from_alpha({alpha});
    double prev = 0.0;
    for (double tau : {5.0, 2.0, 1.0, 0.5, 0.2, 0.1, 0.05}) {
      const auto th = theta_of(sample_architecture(a, tau, {u}), 0);
      const double m = *std::max_element(th.begin(), th.end());
      EXPECT_GE(m, prev - 1e-15);
      prev = m;
    }
  }
}

TEST(Sampling, RngOverloadNeverHitsTheEndpoints) {
  auto rng = Rng::stream(4, "open");
  for (int i = 0; i < 10000; ++i) {
    const double u = open_uniform(rng);
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Sampling, GradientReachesAlpha) {
  const auto task = fixtures::memorization_task();
  const auto space = make_search_space(task.kind(), 2);
  auto rng = Rng::stream(0, "init");
  Supernet net(space, task.dims(8), rng);
  auto arch = ArchParams::uniform(space);
  Tape tape;
  TapeScope scope(tape);
  auto srng = Rng::stream(0, "sampling");
  ForwardContext ctx;
  std::vector<std::size_t> items(task.train_size());
  std::iota(items.begin(), items.end(), 0);
  const auto loss = task.loss(net, Mixer::relaxed(sample_architecture(arch, 1.0, srng)), ctx, items);
  backward(loss);
  bool nonzero = false;
  for (const auto& l : arch.logits)
    if (l.has_grad())
      for (double g : l.grad()) nonzero = nonzero || g != 0.0;
  EXPECT_TRUE(nonzero);
}

// ---------------------------------------------------------------------------
// DARTS relaxation and derivation

TEST(Darts, UniformPair) {
  const auto th = theta_of(mix_darts(ArchParams::from_alpha({{1, 1}})), 0);
  EXPECT_DOUBLE_EQ(th[0], 0.5);
  EXPECT_DOUBLE_EQ(th[1], 0.5);
}

TEST(Darts, EulerPair) {
  const double e = std::exp(1.0);
  const auto th = theta_of(mix_darts(ArchParams::from_alpha({{e, 1}})), 0);
  EXPECT_NEAR(th[0], e / (e + 1.0), 1e-15);
  EXPECT_NEAR(th[1], 1.0 / (e + 1.0), 1e-15);
  EXPECT_NEAR(th[0], 0.731, 5e-4);
}

TEST(Darts, RepeatedCallsAgree) {
  const auto a = ArchParams::from_alpha({{0.3, 0.9, 4.0}, {1.0, 2.0}});
  const auto x = mix_darts(a), y = mix_darts(a);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(theta_of(x, i), theta_of(y, i));
}

TEST(Derive, Argmax) { EXPECT_EQ(argmax_choice(ArchParams::from_alpha({{0.2, 0.5, 0.3}}).values())[0], 1u); }

TEST(Derive, TieGoesToLowestIndex) {
  EXPECT_EQ(argmax_choice(ArchParams::from_alpha({{0.5, 0.5}}).values())[0], 0u);
  EXPECT_EQ(argmax_choice({{1.0, 3.0, 3.0}})[0], 1u);
}

TEST(Derive, ScalingAlphaKeepsTheChoice) {
  auto rng = Rng::stream(9, "scale");
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> alpha(1 + rng.below(5));
    for (auto& x : alpha) x = rng.uniform(0.01, 5.0);
    const double c = std::exp(rng.uniform(-5.0, 5.0));
    auto scaled = alpha;
    for (auto& x : scaled) x *= c;
    EXPECT_EQ(argmax_choice(ArchParams::from_alpha({alpha}).values()),
              argmax_choice(ArchParams::from_alpha({scaled}).values()));
  }
}

TEST(Derive, FrozenSnapshotIsReproducible) {
  const auto space = make_search_space(TaskKind::GraphClassification, 3);
  auto arch = ArchParams::uniform(space);
  auto rng = Rng::stream(3, "snap");
  for (auto& l : arch.logits)
    for (auto& v : l.data()) v = rng.uniform(-1.0, 1.0);
  const auto a = derive_architecture(arch, space, 16), b = derive_architecture(arch, space, 16);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
  EXPECT_THROW(derive_architecture(ArchParams::from_alpha({{1.0}}), space, 16), ContractError);
}

// ---------------------------------------------------------------------------
// Temperature

TEST(Temperature, EndpointsAndMonotone) {
  EXPECT_DOUBLE_EQ(temperature(0, 10, 1.0, 0.1), 1.0);
  EXPECT_NEAR(temperature(9, 10, 1.0, 0.1), 0.1, 1e-15);
  double prev = 2.0;
  for (std::size_t t = 0; t < 10; ++t) {
    const double tau = temperature(t, 10, 1.0, 0.1);
    EXPECT_LT(tau, prev);
    prev = tau;
  }
  EXPECT_DOUBLE_EQ(temperature(0, 1, 1.0, 0.1), 1.0);
  EXPECT_THROW(temperature(0, 10, 0.1, 1.0), ContractError);
  EXPECT_THROW(temperature(0, 10, 1.0, 0.0), ContractError);
}

// ---------------------------------------------------------------------------
// Search and retraining

TEST(Search, OneRecordPerEpoch) {
  const auto task = fixtures::memorization_task();
  auto s = fixtures::quick_settings(task.kind());
  s.search_epochs = 4;
  const auto r = search(task, s);
  ASSERT_EQ(r.log.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) {
    const auto& rec = r.log.records()[e];
    EXPECT_EQ(rec.epoch, e);
    EXPECT_DOUBLE_EQ(rec.tau, temperature(e, 4, s.tau_start, s.tau_end));
    EXPECT_EQ(rec.theta.size(), r.architecture.space.slots.size());
    EXPECT_EQ(rec.alpha.size(), r.architecture.space.slots.size());
  }
  EXPECT_EQ(r.architecture.choice, argmax_choice(r.best_logits));
  const auto line = nlohmann::json::parse(r.log.to_jsonl().substr(0, r.log.to_jsonl().find('\n')));
  for (const char* key : {"epoch", "tau", "train_loss", "valid_auc", "theta", "alpha"}) EXPECT_TRUE(line.contains(key)) << key;
  EXPECT_TRUE(line["theta"].contains("L0.agg"));
}

TEST(Search, AlphaMoves) {
  const auto task = fixtures::memorization_task();
  const auto r = search(task, fixtures::quick_settings(task.kind()));
  bool moved = false;
  for (const auto& row : r.log.records().back().alpha)
    for (double v : row) moved = moved || v != 0.0;
  EXPECT_TRUE(moved);
}

TEST(Search, SameSeedSameLog) {
  const auto task = fixtures::memorization_task();
  const auto s = fixtures::quick_settings(task.kind());
  const auto a = search(task, s), b = search(task, s);
  EXPECT_EQ(a.log.to_jsonl(), b.log.to_jsonl());
  EXPECT_EQ(a.architecture, b.architecture);
  auto other = s;
  other.seed = 1;
  EXPECT_NE(search(task, other).log.to_jsonl(), a.log.to_jsonl());
}

TEST(Search, DartsModeRepeatsThetaWhenAlphaIsFrozen) {
  const auto task = fixtures::memorization_task();
  auto s = fixtures::quick_settings(task.kind());
  s.ablations.darts_mode = true;
  s.arch_learning_rate = 0.0;
  const auto r = search(task, s);
  for (const auto& rec : r.log.records()) EXPECT_EQ(rec.theta, r.log.records().front().theta);
}

TEST(Search, SampledThetaVaries) {
  const auto task = fixtures::memorization_task();
  auto s = fixtures::quick_settings(task.kind());
  s.arch_learning_rate = 0.0;
  const auto r = search(task, s);
  EXPECT_NE(r.log.records()[0].theta, r.log.records()[1].theta);
}

TEST(Search, NonFiniteLossIsDivergence) {
  const auto task = fixtures::memorization_task();
  const PoisonedTask bad(task);
  EXPECT_THROW(search(bad, fixtures::quick_settings(task.kind())), DivergenceError);
}

TEST(Search, RejectsZeroEpochs) {
  const auto task = fixtures::memorization_task();
  auto s = fixtures::quick_settings(task.kind());
  s.search_epochs = 0;
  EXPECT_THROW(search(task, s), ConfigError);
}

TEST(Retrain, DegenerateChildMatchesPlainTraining) {
  const auto task = fixtures::memorization_task();
  const auto s = fixtures::quick_settings(task.kind());
  const auto space = make_search_space(task.kind(), s.layers);
  DerivedArchitecture arch;
  arch.space = space;
  arch.choice.assign(space.slots.size(), 0);
  arch.hidden_dim = s.hidden_dim;
  const auto a = retrain(task, arch, s);
  const auto b = train_network(task, space.restricted(arch.choice), s);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    EXPECT_NEAR(a.curve[i].train_loss, b.curve[i].train_loss, 1e-12);
    EXPECT_NEAR(a.curve[i].valid, b.curve[i].valid, 1e-12);
  }
  EXPECT_NEAR(a.test.at("auc"), b.test.at("auc"), 1e-12);
  const auto pa = a.model.parameters(), pb = b.model.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i)
    for (std::size_t j = 0; j < pa[i].numel(); ++j) EXPECT_NEAR(pa[i].data()[j], pb[i].data()[j], 1e-12);
}

TEST(Retrain, CurveNeverExceedsBudget) {
  const auto task = fixtures::memorization_task();
  auto s = fixtures::quick_settings(task.kind());
  s.retrain_epochs = 6;
  s.patience = 2;
  const auto arch = search(task, s).architecture;
  const auto r = retrain(task, arch, s);
  EXPECT_LE(r.curve.size(), 6u);
  EXPECT_GE(r.curve.size(), 1u);
  EXPECT_LT(r.best_epoch, r.curve.size());
}

TEST(Retrain, FullSpaceIsRejected) {
  const auto task = fixtures::memorization_task();
  const auto s = fixtures::quick_settings(task.kind());
  EXPECT_THROW(train_network(task, make_search_space(task.kind(), 2), s), ContractError);
}

TEST(Retrain, TaskMismatchIsAConfigError) {
  const auto task = fixtures::memorization_task();
  DerivedArchitecture arch;
  arch.space = make_search_space(TaskKind::GraphClassification, 2);
  arch.choice.assign(arch.space.slots.size(), 0);
  EXPECT_THROW(retrain(task, arch, fixtures::quick_settings(task.kind())), ConfigError);
}
