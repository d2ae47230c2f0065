#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dense/model.hpp"
#include "dense/superarch.hpp"

using namespace dense;

namespace {

SuperArchitecture small_1d(std::size_t channels = 4, std::uint64_t seed = 3) {
  SuperArchConfig c;
  c.channels = channels;
  c.stem_hidden = 16;
  c.init_seed = seed;
  return default_superarch(3, {{1, {250}}}, c);
}

Tensor random_inputs(std::size_t n, std::size_t p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n * p);
  for (auto& x : v) x = static_cast<float>(uniform(rng, -1.0, 1.0));
  return Tensor({n, p}, std::move(v));
}

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST(Schedule, SpectralSizes) {
  // round(4 * 62.5^(i/5)) evaluated by hand: 4, 9.12, 20.91, 47.84, 109.4, 250
  const std::vector<std::size_t> want{4, 9, 21, 48, 109, 250};
  EXPECT_EQ(node_size_schedule(4, 250, 6), want);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(want[i], static_cast<std::size_t>(std::lround(4.0 * std::pow(62.5, i / 5.0))));
  }
}

TEST(Schedule, ImageIsCappedAt64) {
  auto sa = default_superarch(5, {{1, {64, 64}}}, {.channels = 4, .stem_hidden = 8});
  ASSERT_EQ(sa.nodes.size(), 6u);
  EXPECT_EQ(sa.nodes.front().size, (std::vector<std::size_t>{4, 4}));
  EXPECT_EQ(sa.nodes.back().size, (std::vector<std::size_t>{64, 64}));
  const std::vector<std::size_t> want{4, 7, 12, 21, 37, 64};
  EXPECT_EQ(node_size_schedule(4, 64, 6), want);

  auto big = default_superarch(5, {{1, {128, 128}}}, {.channels = 2, .stem_hidden = 8});
  EXPECT_EQ(big.nodes.back().size, (std::vector<std::size_t>{64, 64}));
}

TEST(Schedule, SizesNonDecreasing) {
  for (std::size_t target : {4u, 5u, 6u, 17u, 250u, 1000u}) {
    const auto s = node_size_schedule(4, target, 6);
    EXPECT_EQ(s.front(), 4u);
    EXPECT_EQ(s.back(), target);
    for (std::size_t i = 1; i < s.size(); ++i) EXPECT_GE(s[i], s[i - 1]);
  }
}

TEST(Construction, Errors) {
  EXPECT_THROW(default_superarch(3, {{1, {3}}}), std::invalid_argument);
  EXPECT_THROW(default_superarch(3, {{1, {8, 8, 8}}}), std::invalid_argument);
  EXPECT_THROW(default_superarch(0, {{1, {8}}}), std::invalid_argument);
  SuperArchConfig even;
  even.kernel_menu = {2};
  EXPECT_THROW(default_superarch(3, {{1, {8}}}, even), std::invalid_argument);
}

TEST(Construction, DefaultMenu) {
  auto sa = small_1d();
  ASSERT_EQ(sa.groups.size(), 5u);
  for (const auto& g : sa.groups) {
    ASSERT_EQ(g.ops.size(), 6u);
    EXPECT_EQ(g.ops[0].name(), "zero");
    EXPECT_EQ(g.ops[1].name(), "conv1");
    EXPECT_EQ(g.ops[4].name(), "conv7");
    EXPECT_EQ(g.ops[5].name(), "mtconv3");
    EXPECT_EQ(g.logits, std::vector<double>(6, 0.0));
    std::size_t zeros = 0;
    for (const auto& op : g.ops) zeros += op.kind == OpKind::kZero;
    EXPECT_EQ(zeros, 1u);
  }
  EXPECT_EQ(sa.architecture_count(), 7776u);
  EXPECT_EQ(sa.output_shape(), (Shape{1, 250}));
}

TEST(Construction, StemShapes) {
  auto sa = default_superarch(3, {{1, {250}}});
  EXPECT_EQ(sa.stem_hidden.kernel.shape(), (Shape{128, 3}));
  EXPECT_EQ(sa.stem_out.kernel.shape(), (Shape{256, 128}));
  auto img = default_superarch(5, {{1, {64, 64}}});
  EXPECT_EQ(img.stem_out.kernel.shape(), (Shape{64 * 16, 128}));
}

TEST(Construction, SameSeedSameWeights) {
  auto a = small_1d(4, 9);
  auto b = small_1d(4, 9);
  auto c = small_1d(4, 10);
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  const auto pc = c.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(values(pa[i]), values(pb[i]));
    differs = differs || values(pa[i]) != values(pc[i]);
  }
  EXPECT_TRUE(differs);
}

TEST(OpProbs, Examples) {
  Group g;
  g.logits = {0, 0, 0};
  for (double p : op_probs(g)) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  g.logits = {std::log(2.0), 0.0};
  auto p = op_probs(g);
  EXPECT_NEAR(p[0], 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(p[1], 1.0 / 3.0, 1e-15);
}

TEST(OpProbs, ShiftInvarianceAndStability) {
  Group g;
  g.logits = {0.3, -1.2, 2.5, 0.0};
  const auto p = op_probs(g);
  for (double c : {-50.0, 7.0, 800.0}) {
    Group h;
    for (double b : g.logits) h.logits.push_back(b + c);
    const auto q = op_probs(h);
    double sum = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      EXPECT_NEAR(q[j], p[j], 1e-12);
      EXPECT_GT(q[j], 0.0);
      sum += q[j];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Sampling, DegenerateLogits) {
  auto sa = small_1d();
  for (auto& g : sa.groups) g.logits[2] = 20.0;
  Rng rng(1);
  std::size_t hits = 0;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) hits += sample_architecture(sa, rng).selection[0] == 2;
  EXPECT_GT(static_cast<double>(hits) / n, 0.999);
}

TEST(Sampling, UniformWithinThreeSigma) {
  auto sa = small_1d();
  Rng rng(2);
  const std::size_t n = 100000;
  std::vector<std::vector<std::size_t>> counts(5, std::vector<std::size_t>(6, 0));
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = sample_architecture(sa, rng);
    for (std::size_t g = 0; g < 5; ++g) counts[g][a.selection[g]]++;
  }
  const double p = 1.0 / 6.0;
  const double sigma = std::sqrt(n * p * (1.0 - p));
  for (const auto& c : counts) {
    for (auto k : c) EXPECT_LT(std::abs(static_cast<double>(k) - n * p), 3.0 * sigma);
  }
}

TEST(Sampling, SeedDeterminism) {
  auto sa = small_1d();
  Rng a(77), b(77);
  for (int i = 0; i < 100; ++i) {
    const auto x = sample_architecture(sa, a);
    EXPECT_EQ(x, sample_architecture(sa, b));
    EXPECT_NO_THROW(sa.validate(x));
  }
}

TEST(LogLikelihoodGrad, ClosedForm) {
  SuperArchitecture sa;
  Group g;
  g.ops.resize(2);
  g.logits = {0.0, 0.0};
  sa.groups.push_back(g);
  const auto grad = log_likelihood_grad(Architecture{{0}}, sa);
  EXPECT_DOUBLE_EQ(grad[0][0], 0.5);
  EXPECT_DOUBLE_EQ(grad[0][1], -0.5);
}

TEST(LogLikelihoodGrad, SumsToZeroPerGroup) {
  auto sa = small_1d();
  Rng rng(4);
  for (auto& g : sa.groups) {
    for (auto& b : g.logits) b = uniform(rng, -2.0, 2.0);
  }
  for (int t = 0; t < 50; ++t) {
    const auto grad = log_likelihood_grad(sample_architecture(sa, rng), sa);
    for (const auto& row : grad) {
      double s = 0.0;
      for (double v : row) s += v;
      EXPECT_NEAR(s, 0.0, 1e-15);
    }
  }
}

TEST(LogLikelihoodGrad, MatchesFiniteDifferences) {
  auto sa = small_1d();
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    for (auto& g : sa.groups) {
      for (auto& b : g.logits) b = uniform(rng, -3.0, 3.0);
    }
    const auto a = sample_architecture(sa, rng);
    const auto grad = log_likelihood_grad(a, sa);
    for (std::size_t i = 0; i < sa.groups.size(); ++i) {
      for (std::size_t j = 0; j < sa.groups[i].logits.size(); ++j) {
        const double h = 1e-6;
        auto plus = sa;
        auto minus = sa;
        plus.groups[i].logits[j] += h;
        minus.groups[i].logits[j] -= h;
        const double num = (log_likelihood(a, plus) - log_likelihood(a, minus)) / (2 * h);
        const double err = std::abs(num - grad[i][j]) / std::max({std::abs(num), std::abs(grad[i][j]), 1e-3});
        EXPECT_LT(err, 1e-5) << "group " << i << " op " << j;
      }
    }
  }
}

TEST(LogLikelihoodGrad, ScoreHasZeroMean) {
  auto sa = small_1d();
  sa.groups[0].logits = {1.0, -0.5, 0.2, 0.0, 2.0, -1.0};
  const auto p = op_probs(sa.groups[0]);
  Rng rng(6);
  const std::size_t n = 100000;
  std::vector<double> mean(6, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const auto g = log_likelihood_grad(sample_architecture(sa, rng), sa);
    for (std::size_t j = 0; j < 6; ++j) mean[j] += g[0][j];
  }
  for (std::size_t j = 0; j < 6; ++j) {
    // score entry j is a centred Bernoulli(p_j)
    const double sigma = std::sqrt(p[j] * (1.0 - p[j]) / n);
    EXPECT_LT(std::abs(mean[j] / n), 3.0 * sigma) << j;
  }
}

TEST(Forward, ZeroSelectionIsSkipChain) {
  auto sa = small_1d();
  const Tensor x = random_inputs(3, 3, 11);
  const Architecture zeros{std::vector<std::size_t>(5, 0)};
  const Tensor out = forward(sa, zeros, x);
  ASSERT_EQ(out.shape(), (Shape{3, 1, 250}));

  // stem, then upsample straight to each node size, then the 1x1 head
  Tensor h = fully_connected(relu(fully_connected(x, sa.stem_hidden)), sa.stem_out);
  Tensor node = reshape(h, {3, 4, 4});
  for (std::size_t i = 1; i < sa.nodes.size(); ++i) node = nn_upsample(node, sa.nodes[i].size);
  const Tensor want = conv(node, sa.head);
  EXPECT_EQ(values(out), values(want));

  // independent of every candidate op's weights
  for (auto& g : sa.groups) {
    for (auto& op : g.ops) {
      for (auto& t : op.params.tensors()) {
        for (auto& v : t.mutable_data()) v = 123.0f;
      }
    }
  }
  EXPECT_EQ(values(forward(sa, zeros, x)), values(out));
}

TEST(Forward, BatchedEqualsStacked) {
  auto sa = small_1d();
  const Tensor x = random_inputs(5, 3, 12);
  Rng rng(8);
  for (int t = 0; t < 5; ++t) {
    const auto a = sample_architecture(sa, rng);
    const auto all = values(forward(sa, a, x));
    for (std::size_t n = 0; n < 5; ++n) {
      const Tensor row({1, 3}, {x.data()[n * 3], x.data()[n * 3 + 1], x.data()[n * 3 + 2]});
      const auto one = values(forward(sa, a, row));
      for (std::size_t j = 0; j < one.size(); ++j) {
        EXPECT_NEAR(all[n * 250 + j], one[j], 1e-5f * (1.0f + std::abs(one[j])));
      }
    }
  }
}

TEST(Forward, FiniteAtInitAllShapes) {
  Rng rng(13);
  const std::vector<std::pair<std::size_t, OutputSpec>> cases{
      {3, {1, {250}}}, {5, {1, {64, 64}}}, {5, {15, {}}}, {2, {3, {8}}}};
  for (const auto& [p, o] : cases) {
    auto sa = default_superarch(p, {o}, {.channels = 4, .stem_hidden = 16});
    const Tensor x = random_inputs(2, p, 14);
    for (int t = 0; t < 10; ++t) {
      const auto a = sample_architecture(sa, rng);
      const Tensor y = forward(sa, a, x);
      Shape want{2};
      const auto s = sa.output_shape();
      want.insert(want.end(), s.begin(), s.end());
      EXPECT_EQ(y.shape(), want);
      for (float v : y.data()) ASSERT_TRUE(std::isfinite(v));
    }
  }
}

TEST(Forward, ShapeMismatchThrows) {
  auto sa = small_1d();
  const Architecture a{std::vector<std::size_t>(5, 1)};
  EXPECT_THROW(forward(sa, a, random_inputs(2, 4, 1)), std::invalid_argument);
  EXPECT_THROW(forward(sa, Architecture{{0, 0}}, random_inputs(2, 3, 1)), std::invalid_argument);
  EXPECT_THROW(forward(sa, Architecture{{0, 0, 0, 0, 9}}, random_inputs(2, 3, 1)),
               std::invalid_argument);
}

TEST(Forward, ScalarOutputsUseDenseHead) {
  auto sa = default_superarch(5, {{15, {}}}, {.channels = 4, .stem_hidden = 8});
  EXPECT_EQ(sa.nodes.back().size, (std::vector<std::size_t>{16}));
  EXPECT_EQ(sa.head.kernel.shape(), (Shape{15, 64}));
  EXPECT_EQ(sa.output_shape(), (Shape{15}));
}

TEST(Snapshot, CloneIsIndependent) {
  auto sa = small_1d();
  auto c = sa.clone();
  sa.parameters()[0].mutable_data()[0] += 1.0f;
  sa.groups[0].logits[0] = 5.0;
  EXPECT_NE(values(sa.parameters()[0]), values(c.parameters()[0]));
  EXPECT_EQ(c.groups[0].logits[0], 0.0);
}

TEST(Snapshot, RestoreRoundTrip) {
  auto sa = small_1d();
  const auto snap = sa.snapshot();
  for (auto t : sa.parameters()) {
    for (auto& v : t.mutable_data()) v *= 2.0f;
  }
  sa.groups[1].logits[3] = -1.0;
  sa.restore(snap);
  EXPECT_EQ(sa.snapshot().weights, snap.weights);
  EXPECT_EQ(sa.snapshot().logits, snap.logits);
}

TEST(ModelFile, RoundTripIsBitExact) {
  Emulator e;
  e.arch = small_1d();
  e.arch.groups[2].logits = {0.1, -0.25, 1.0 / 3.0, 4.5, 0.0, -7.125};
  e.arch.parameters().back().mutable_data()[0] = 0.3f;
  e.norm.input_bounds = {{0, 2}, {0.25, 0.75}, {0.03, 0.1}};
  e.norm.out_mean = {0.75};
  e.norm.out_std = {0.2};
  e.sim_name = "spectral";
  e.seed = 42;

  std::stringstream first;
  write_model(first, e);
  const std::string bytes = first.str();
  std::stringstream in(bytes);
  const Emulator back = read_model(in);
  std::stringstream second;
  write_model(second, back);
  EXPECT_EQ(second.str(), bytes);
  EXPECT_EQ(back.sim_name, "spectral");
  EXPECT_EQ(back.seed, 42u);
  EXPECT_EQ(back.arch.groups[2].logits, e.arch.groups[2].logits);

  const Tensor x = random_inputs(4, 3, 3);
  Rng rng(1);
  const auto a = sample_architecture(e.arch, rng);
  EXPECT_EQ(values(back.arch.parameters().back()), values(e.arch.parameters().back()));
  EXPECT_EQ(values(forward(back.arch, a, x)), values(forward(e.arch, a, x)));
}

TEST(ModelFile, RejectsGarbage) {
  std::stringstream bad("not a model\nend\n");
  EXPECT_THROW(read_model(bad), std::runtime_error);

  Emulator e;
  e.arch = small_1d();
  e.norm.input_bounds = {{0, 1}, {0, 1}, {0, 1}};
  e.norm.out_mean = {0};
  e.norm.out_std = {1};
  std::stringstream s;
  write_model(s, e);
  std::string bytes = s.str();
  bytes.resize(bytes.size() - 10);
  std::stringstream cut(bytes);
  EXPECT_THROW(read_model(cut), std::runtime_error);
}
