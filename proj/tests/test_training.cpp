#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "dense/training.hpp"
#include "support/planted.hpp"

using namespace dense;

namespace {

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

std::vector<std::vector<float>> all_weights(const SuperArchitecture& sa) {
  std::vector<std::vector<float>> out;
  for (const auto& t : sa.parameters()) out.push_back(values(t));
  return out;
}

std::vector<std::vector<double>> all_logits(const SuperArchitecture& sa) {
  std::vector<std::vector<double>> out;
  for (const auto& g : sa.groups) out.push_back(g.logits);
  return out;
}

SuperArchConfig tiny_config() {
  SuperArchConfig c;
  c.channels = 4;
  c.stem_hidden = 16;
  c.init_seed = 5;
  return c;
}

Tensor random_x(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n * p);
  for (auto& x : v) x = static_cast<float>(uniform(rng, -1.0, 1.0));
  return Tensor({n, p}, std::move(v));
}

// Independent fitness-shaping evaluation for distinct losses.
std::vector<double> shaped(std::size_t n) {
  std::vector<double> u(n);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    u[i] = std::max(0.0, std::log(n / 2.0 + 1.0) - std::log(i + 1.0));
    total += u[i];
  }
  for (auto& v : u) v = v / total - 1.0 / n;
  return u;
}

}  // namespace

TEST(TrainConfig, DenseDefaults) {
  const auto c = TrainConfig::dense_defaults();
  EXPECT_EQ(c.alpha1, 3.06e-4);
  EXPECT_EQ(c.m1, 35u);
  EXPECT_EQ(c.gamma1, 0.757);
  EXPECT_EQ(c.s1, 513u);
  EXPECT_EQ(c.alpha2, 4.88e-3);
  EXPECT_EQ(c.m2, 142u);
  EXPECT_EQ(c.gamma2, 0.701);
  EXPECT_EQ(c.s2, 918u);
  EXPECT_EQ(c.p_val, 2u);
  EXPECT_EQ(c.n_epochs, 3000u);
  EXPECT_EQ(c.n_rank, 8u);
}

TEST(TrainConfig, ManualDefaults) {
  const auto c = TrainConfig::manual_defaults();
  EXPECT_EQ(c.alpha1, 4.34e-3);
  EXPECT_EQ(c.m1, 72u);
  EXPECT_EQ(c.gamma1, 0.9913);
  EXPECT_EQ(c.s1, 7u);
  EXPECT_EQ(c.p_val, 1u);
}

TEST(TrainConfig, ValidateAndJson) {
  TrainConfig c;
  c.gamma1 = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.m2 = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  apply_train_config_json(c, R"({"alpha1": 0.01, "n_epochs": 7, "optimizer": "adam", "seed": 9})");
  EXPECT_EQ(c.alpha1, 0.01);
  EXPECT_EQ(c.n_epochs, 7u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.optimizer, OptimizerKind::kAdam);
  EXPECT_EQ(c.m1, 35u);
  EXPECT_THROW(apply_train_config_json(c, R"({"alpha9": 1})"), std::invalid_argument);
  EXPECT_THROW(apply_train_config_json(c, R"({"optimizer": "lbfgs"})"), std::invalid_argument);
  EXPECT_ANY_THROW(apply_train_config_json(c, "{oops"));
}

TEST(Schedule, StepDecayIsExact) {
  EXPECT_EQ(learning_rate(3.06e-4, 0.757, 0, 513), 3.06e-4);
  EXPECT_EQ(learning_rate(3.06e-4, 0.757, 512, 513), 3.06e-4);
  EXPECT_EQ(learning_rate(3.06e-4, 0.757, 513, 513), 3.06e-4 * 0.757);
  EXPECT_EQ(learning_rate(3.06e-4, 0.757, 1540, 513), 3.06e-4 * std::pow(0.757, 3.0));
  EXPECT_EQ(learning_rate(1.0, 1.0, 100000, 1), 1.0);
}

TEST(RankingRewards, FourDistinct) {
  const auto r = ranking_rewards({0.1, 0.2, 0.3, 0.4});
  const auto want = shaped(4);
  ASSERT_EQ(r.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r[i], want[i], 1e-15);
  EXPECT_NEAR(r[0], 0.4805, 1e-4);
  EXPECT_NEAR(r[1], 0.0195, 1e-4);
  EXPECT_DOUBLE_EQ(r[2], -0.25);
  EXPECT_DOUBLE_EQ(r[3], -0.25);
}

TEST(RankingRewards, ZeroSumAndRankOnly) {
  Rng rng(3);
  for (std::size_t n : {2u, 3u, 8u, 17u}) {
    std::vector<double> l(n);
    for (auto& v : l) v = uniform(rng, 0.0, 5.0);
    const auto r = ranking_rewards(l);
    double s = 0;
    for (double v : r) s += v;
    EXPECT_NEAR(s, 0.0, 1e-12);

    std::vector<double> scaled, cubed;
    for (double v : l) {
      scaled.push_back(1000 * v);
      cubed.push_back(v * v * v + std::exp(v));
    }
    EXPECT_EQ(ranking_rewards(scaled), r);
    EXPECT_EQ(ranking_rewards(cubed), r);
  }
}

TEST(RankingRewards, PermutationEquivariant) {
  const std::vector<double> l{0.5, 0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.4};
  const auto r = ranking_rewards(l);
  const std::vector<std::size_t> perm{3, 7, 0, 5, 1, 6, 2, 4};
  std::vector<double> lp;
  for (auto i : perm) lp.push_back(l[i]);
  const auto rp = ranking_rewards(lp);
  for (std::size_t k = 0; k < perm.size(); ++k) EXPECT_EQ(rp[k], r[perm[k]]);
  const auto want = shaped(8);
  EXPECT_NEAR(r[1], want[0], 1e-15);
  EXPECT_NEAR(r[2], want[7], 1e-15);
}

TEST(RankingRewards, TiesShareMean) {
  const auto want = shaped(4);
  const auto r = ranking_rewards({0.3, 0.1, 0.1, 0.5});
  EXPECT_NEAR(r[1], 0.5 * (want[0] + want[1]), 1e-15);
  EXPECT_EQ(r[1], r[2]);
  EXPECT_NEAR(r[0], want[2], 1e-15);
  for (double v : ranking_rewards({2.0, 2.0, 2.0, 2.0, 2.0})) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(ranking_rewards({1.0}), std::invalid_argument);
}

TEST(WeightStep, ZeroRateLeavesWeights) {
  auto sa = default_superarch(3, {{1, {20}}}, tiny_config());
  const Tensor x = random_x(8, 3, 1);
  const Tensor y = Tensor::zeros({8, 1, 20});
  const auto before = all_weights(sa);
  WeightOptimizer opt(sa.parameters(), OptimizerKind::kSgd, 10.0);
  Rng rng(1);
  const double loss = weight_step(sa, x, y, 0.0, 1.0, opt, rng);
  EXPECT_GT(loss, 0.0);
  EXPECT_EQ(all_weights(sa), before);
  for (const auto& t : sa.parameters()) EXPECT_FALSE(t.has_grad());
}

TEST(WeightStep, NeverTouchesLogits) {
  auto sa = default_superarch(3, {{1, {20}}}, tiny_config());
  sa.groups[1].logits = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  const auto before = all_logits(sa);
  WeightOptimizer opt(sa.parameters(), OptimizerKind::kAdam, 10.0);
  Rng rng(2);
  for (int i = 0; i < 5; ++i) weight_step(sa, random_x(8, 3, i), Tensor::zeros({8, 1, 20}), 0.01, 1.0, opt, rng);
  EXPECT_EQ(all_logits(sa), before);
}

TEST(WeightStep, LinearLayerConvexDescent) {
  // one fully connected layer, residuals < delta so the quadratic branch is active
  LayerParams p;
  p.kernel = Tensor({2, 3}, {0.1f, -0.2f, 0.05f, 0.0f, 0.3f, -0.1f}, true);
  p.bias = Tensor::zeros({2}, true);
  const Tensor x = random_x(16, 3, 4);
  const Tensor y({16, 2}, std::vector<float>(32, 0.25f));
  WeightOptimizer opt(p.tensors(), OptimizerKind::kSgd, 0.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 50; ++s) {
    const Tensor loss = huber_loss(fully_connected(x, p), y, 1.0f);
    EXPECT_LT(loss.item(), prev);
    prev = loss.item();
    backward(loss);
    opt.step(0.2);
  }
}

TEST(WeightStep, TinyNetworkDescendsOnFixedBatch) {
  auto sa = default_superarch(3, {{1, {20}}}, tiny_config());
  const Tensor x = random_x(16, 3, 5);
  std::vector<float> yv(16 * 20);
  for (std::size_t i = 0; i < yv.size(); ++i) yv[i] = 0.3f * std::sin(0.1f * i);
  const Tensor y({16, 1, 20}, yv);
  const Architecture a{{1, 2, 3, 4, 5}};
  WeightOptimizer opt(sa.parameters(), OptimizerKind::kSgd, 10.0);
  double prev = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 20; ++s) {
    const double l = weight_step(sa, a, x, y, 1e-2, 1.0, opt);
    EXPECT_LT(l, prev);
    prev = l;
  }
}

TEST(WeightStep, ZeroSelectionBlocksGradient) {
  auto sa = default_superarch(3, {{1, {20}}}, tiny_config());
  const Architecture a{{0, 2, 2, 2, 2}};
  const Tensor loss = huber_loss(forward(sa, a, random_x(4, 3, 6)), Tensor::zeros({4, 1, 20}), 1.0f);
  backward(loss);
  for (const auto& op : sa.groups[0].ops) {
    for (const auto& t : op.params.tensors()) {
      for (float g : t.grad()) EXPECT_EQ(g, 0.0f);
    }
  }
  EXPECT_TRUE(sa.groups[1].ops[2].params.kernel.has_grad());
  for (auto t : sa.parameters()) t.zero_grad();
}

TEST(WeightStep, NanLossAborts) {
  auto sa = default_superarch(3, {{1, {20}}}, tiny_config());
  std::vector<float> yv(4 * 20, 0.0f);
  yv[7] = std::numeric_limits<float>::quiet_NaN();
  WeightOptimizer opt(sa.parameters(), OptimizerKind::kSgd, 10.0);
  try {
    weight_step(sa, Architecture{{1, 1, 1, 1, 1}}, random_x(4, 3, 7), Tensor({4, 1, 20}, yv), 0.1,
                1.0, opt);
    FAIL() << "expected an exception";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[1,1,1,1,1]"), std::string::npos);
  }
}

TEST(ArchStep, ZeroRateAndWeightsUntouched) {
  auto sa = default_superarch(3, {{1, {20}}}, tiny_config());
  const auto w = all_weights(sa);
  const auto b = all_logits(sa);
  Rng rng(8);
  const auto r = arch_step(sa, random_x(8, 3, 8), Tensor::zeros({8, 1, 20}), 0.0, 8, 1.0, rng);
  EXPECT_EQ(r.losses.size(), 8u);
  EXPECT_EQ(all_logits(sa), b);
  arch_step(sa, random_x(8, 3, 8), Tensor::zeros({8, 1, 20}), 0.5, 8, 1.0, rng);
  EXPECT_NE(all_logits(sa), b);
  EXPECT_EQ(all_weights(sa), w);
  for (const auto& t : sa.parameters()) EXPECT_FALSE(t.has_grad());
}

TEST(ArchStep, EqualLossesLeaveLogits) {
  auto sa = default_superarch(3, {{1, {20}}}, tiny_config());
  for (auto& g : sa.groups) {
    for (auto& op : g.ops) {
      for (auto t : op.params.tensors()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0f);
    }
  }
  const auto b = all_logits(sa);
  Rng rng(9);
  for (int i = 0; i < 5; ++i) {
    const auto r = arch_step(sa, random_x(8, 3, 9), Tensor::zeros({8, 1, 20}), 1.0, 8, 1.0, rng);
    for (double v : r.rewards) EXPECT_EQ(v, 0.0);
  }
  EXPECT_EQ(all_logits(sa), b);
}

TEST(ArchStep, PlantedOpProbabilityRises) {
  // one group, {zero, conv1}; the conv is planted
  SuperArchConfig c;
  c.channels = 2;
  c.stem_hidden = 8;
  c.n_nodes = 2;
  c.kernel_menu = {1};
  c.include_mod_transposed = false;
  auto sa = default_superarch(2, {{1, {4}}}, c);
  for (auto& w : sa.groups[0].ops[1].params.kernel.mutable_data()) w *= 4.0f;
  const Tensor x = random_x(16, 2, 10);
  Tensor y;
  {
    NoGradGuard guard;
    y = forward(sa, Architecture{{1}}, x).clone();
  }
  Rng rng(10);
  double prev = op_probs(sa.groups[0])[1];
  const double start = prev;
  for (int s = 0; s < 100; ++s) {
    arch_step(sa, x, y, 0.2, 8, 1.0, rng);
    const double p = op_probs(sa.groups[0])[1];
    EXPECT_GE(p, prev);
    prev = p;
  }
  EXPECT_GT(prev, start + 0.1);
}

TEST(ArchStep, PlantedSearchMostlyFindsPlanted) {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 4; ++seed) wins += dense::testing::planted_search_succeeds(seed, 200, 0.7);
  EXPECT_GE(wins, 3);
}

namespace {

Dataset small_dataset(std::size_t n = 200) {
  return generate_dataset(find_simulation("scalars"), n, 3);
}

}  // namespace

TEST(TrainDense, ZeroEpochsReturnsInitial) {
  const auto ds = small_dataset();
  auto sa = default_superarch(5, {ds.output}, tiny_config());
  TrainConfig cfg;
  cfg.n_epochs = 0;
  const auto r = train_dense(sa, ds, cfg);
  EXPECT_TRUE(r.report.history.empty());
  EXPECT_FALSE(r.report.best_epoch.has_value());
  EXPECT_EQ(all_weights(r.model), all_weights(sa));
  EXPECT_EQ(all_logits(r.model), all_logits(sa));
}

TEST(TrainDense, EmptySplitsThrow) {
  auto ds = small_dataset();
  auto sa = default_superarch(5, {ds.output}, tiny_config());
  ds.split.val.clear();
  TrainConfig cfg;
  cfg.n_epochs = 1;
  EXPECT_THROW(train_dense(sa, ds, cfg), std::invalid_argument);
}

TEST(TrainDense, BestSnapshotIsHistoryMinimum) {
  const auto ds = small_dataset();
  auto sa = default_superarch(5, {ds.output}, tiny_config());
  TrainConfig cfg;
  cfg.n_epochs = 6;
  cfg.alpha1 = 5e-3;
  cfg.alpha2 = 0.2;
  cfg.m2 = 16;
  cfg.optimizer = OptimizerKind::kAdam;
  const auto r = train_dense(sa, ds, cfg);
  ASSERT_EQ(r.report.history.size(), 6u);
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& h : r.report.history) {
    EXPECT_TRUE(std::isfinite(h.train_loss));
    lo = std::min(lo, h.val_loss);
  }
  EXPECT_EQ(r.report.best_val_loss, lo);
  EXPECT_EQ(r.report.history[*r.report.best_epoch].val_loss, lo);
  EXPECT_EQ(r.report.final_entropies.size(), 5u);
  EXPECT_NE(all_logits(r.model), all_logits(sa));
  EXPECT_EQ(all_weights(sa), all_weights(default_superarch(5, {ds.output}, tiny_config())));
}

TEST(TrainDense, SeedReproducible) {
  const auto ds = small_dataset();
  auto sa = default_superarch(5, {ds.output}, tiny_config());
  TrainConfig cfg;
  cfg.n_epochs = 2;
  cfg.m2 = 16;
  const auto a = train_dense(sa, ds, cfg);
  const auto b = train_dense(sa, ds, cfg);
  EXPECT_EQ(all_weights(a.model), all_weights(b.model));
  EXPECT_EQ(all_logits(a.model), all_logits(b.model));
  EXPECT_EQ(a.report.history[1].val_loss, b.report.history[1].val_loss);
}

TEST(TrainManual, SingleOpSpaceMatchesDense) {
  const auto ds = small_dataset();
  const auto sa = manual_superarch(5, {ds.output}, tiny_config());
  for (const auto& g : sa.groups) ASSERT_EQ(g.ops.size(), 1u);
  TrainConfig cfg = TrainConfig::manual_defaults();
  cfg.n_epochs = 3;
  cfg.m2 = 20;
  const auto m = train_manual(sa, sa.mode_architecture(), ds, cfg);
  const auto d = train_dense(sa, ds, cfg);
  EXPECT_EQ(all_weights(m.model), all_weights(d.model));
  ASSERT_EQ(m.report.history.size(), d.report.history.size());
  for (std::size_t e = 0; e < 3; ++e) {
    EXPECT_EQ(m.report.history[e].train_loss, d.report.history[e].train_loss);
    EXPECT_NEAR(m.report.history[e].val_loss, d.report.history[e].val_loss, 1e-12);
  }
}

TEST(TrainManual, ValidationCurveDecreases) {
  const auto ds = small_dataset(300);
  const auto sa = manual_superarch(5, {ds.output}, tiny_config());
  TrainConfig cfg = TrainConfig::manual_defaults();
  cfg.n_epochs = 8;
  cfg.optimizer = OptimizerKind::kAdam;
  const auto r = train_manual(sa, sa.mode_architecture(), ds, cfg);
  for (const auto& h : r.report.history) EXPECT_TRUE(std::isfinite(h.val_loss));
  EXPECT_LT(r.report.history.back().val_loss, r.report.history.front().val_loss);
  const auto val = normalized_split(ds, SplitKind::kVal);
  const double reloaded = split_loss(r.model, sa.mode_architecture(), val.X, val.Y, 1.0);
  EXPECT_NEAR(reloaded, r.report.best_val_loss, 1e-6 * (1 + reloaded));
  EXPECT_THROW(train_manual(sa, Architecture{{0, 0}}, ds, cfg), std::invalid_argument);
}

TEST(Evaluate, PerfectEmulatorIsZero) {
  const auto sa = manual_superarch(3, {{1, {12}}}, tiny_config());
  const Tensor x = random_x(40, 3, 11);
  Tensor y;
  {
    NoGradGuard guard;
    y = forward(sa, sa.mode_architecture(), x).clone();
  }
  Rng rng(1);
  const auto r = evaluate(sa, x, y, rng, 4);
  EXPECT_EQ(r.expected_loss, 0.0);
  EXPECT_EQ(r.mode_loss, 0.0);
}

TEST(Evaluate, ModeLossBitReproducible) {
  auto sa = default_superarch(3, {{1, {30}}}, tiny_config());
  sa.groups[0].logits[3] = 1.0;
  const Tensor x = random_x(700, 3, 12);
  const Tensor y = Tensor::zeros({700, 1, 30});
  Rng a(1), b(2);
  const auto ra = evaluate(sa, x, y, a, 3);
  const auto rb = evaluate(sa.clone(), x, y, b, 5);
  EXPECT_EQ(ra.mode_loss, rb.mode_loss);
  EXPECT_TRUE(std::isfinite(ra.expected_loss));
}

TEST(Report, CsvHeaderAndRows) {
  TrainReport r;
  r.history.push_back({0, 0.5, 0.25, 1e-3, 2e-3, 0.1});
  r.history.push_back({1, 0.125, 0.0625, 1e-3, 2e-3, 0.1});
  std::ostringstream out;
  write_report_csv(out, r);
  EXPECT_EQ(out.str(),
            "epoch,train_loss,val_loss,lr1,lr2\n0,0.5,0.25,0.001,0.002\n1,0.125,0.0625,0.001,0.002\n");
}
