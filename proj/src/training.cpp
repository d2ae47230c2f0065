#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dense/manifest.hpp"
#include "dense/training.hpp"

namespace dense {
namespace {

constexpr std::uint64_t kArchStreamSalt = 0x9e3779b97f4a7c15ULL;
constexpr std::size_t kEvalChunk = 512;

std::string arch_str(const Architecture& a) {
  std::string s;
  for (auto j : a.selection) s += (s.empty() ? "" : ",") + std::to_string(j);
  return "[" + s + "]";
}

Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& perm, std::size_t begin,
                 std::size_t end) {
  return gather_rows(t, std::span<const std::size_t>(perm.data() + begin, end - begin));
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

TrainResult run_training(const SuperArchitecture& initial, const std::optional<Architecture>& fixed,
                         const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.rows(SplitKind::kTrain).empty()) throw std::invalid_argument("training split is empty");
  if (ds.rows(SplitKind::kVal).empty()) throw std::invalid_argument("validation split is empty");
  const auto train = normalized_split(ds, SplitKind::kTrain);
  const auto val = normalized_split(ds, SplitKind::kVal);

  TrainResult result{initial.clone(), {}};
  auto& sa = result.model;
  if (fixed) sa.validate(*fixed);
  WeightOptimizer opt(sa.parameters(), cfg.optimizer, cfg.clip_norm);
  Rng data_rng(cfg.seed);
  Rng arch_rng(cfg.seed ^ kArchStreamSalt);

  auto& report = result.report;
  report.best_val_loss = std::numeric_limits<double>::infinity();
  ParameterSnapshot best = sa.snapshot();
  const std::size_t n_train = train.X.dim(0);
  const std::size_t n_val = val.X.dim(0);
  std::size_t t = 0;
  const auto t_start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 0; epoch < cfg.n_epochs; ++epoch) {
    const auto e_start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr1 = learning_rate(cfg.alpha1, cfg.gamma1, t, cfg.s1);

    const auto perm = shuffled(n_train, data_rng);
    double train_sum = 0.0;
    for (std::size_t b = 0; b < n_train; b += cfg.m1) {
      const std::size_t e = std::min(n_train, b + cfg.m1);
      const Tensor x = take_rows(train.X, perm, b, e);
      const Tensor y = take_rows(train.Y, perm, b, e);
      const double lr = learning_rate(cfg.alpha1, cfg.gamma1, t, cfg.s1);
      const Architecture a = fixed ? *fixed : sample_architecture(sa, arch_rng);
      train_sum += weight_step(sa, a, x, y, lr, cfg.huber_delta, opt) * static_cast<double>(e - b);
      ++t;
    }
    rec.train_loss = train_sum / static_cast<double>(n_train);

    rec.lr2 = learning_rate(cfg.alpha2, cfg.gamma2, epoch, cfg.s2);
    double val_sum = 0.0;
    for (std::size_t pass = 0; pass < cfg.p_val; ++pass) {
      const auto vperm = shuffled(n_val, data_rng);
      for (std::size_t b = 0; b < n_val; b += cfg.m2) {
        const std::size_t e = std::min(n_val, b + cfg.m2);
        const Tensor x = take_rows(val.X, vperm, b, e);
        const Tensor y = take_rows(val.Y, vperm, b, e);
        double loss;
        if (fixed) {
          NoGradGuard guard;
          loss = huber_loss(forward(sa, *fixed, x), y, static_cast<float>(cfg.huber_delta)).item();
        } else {
          loss = arch_step(sa, x, y, rec.lr2, cfg.n_rank, cfg.huber_delta, arch_rng).mean_loss;
        }
        val_sum += loss * static_cast<double>(e - b);
      }
    }
    rec.val_loss = val_sum / static_cast<double>(n_val * cfg.p_val);
    if (!std::isfinite(rec.val_loss)) {
      throw std::runtime_error("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    if (rec.val_loss < report.best_val_loss) {
      report.best_val_loss = rec.val_loss;
      report.best_epoch = epoch;
      best = sa.snapshot();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e_start).count();
    report.history.push_back(rec);
  }
  sa.restore(best);
  report.final_entropies = group_entropies(sa);
  report.total_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

}  // namespace

TrainConfig TrainConfig::manual_defaults() {
  TrainConfig c;
  c.alpha1 = 4.34e-3;
  c.m1 = 72;
  c.gamma1 = 0.9913;
  c.s1 = 7;
  c.p_val = 1;
  return c;
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  require(alpha1 >= 0.0 && std::isfinite(alpha1), "alpha1 must be finite and >= 0");
  require(alpha2 >= 0.0 && std::isfinite(alpha2), "alpha2 must be finite and >= 0");
  require(m1 > 0 && m2 > 0, "minibatch sizes must be positive");
  require(s1 > 0 && s2 > 0, "decay periods must be positive");
  require(gamma1 > 0.0 && gamma1 <= 1.0, "gamma1 must lie in (0, 1]");
  require(gamma2 > 0.0 && gamma2 <= 1.0, "gamma2 must lie in (0, 1]");
  require(p_val > 0, "p_val must be positive");
  require(n_rank >= 2, "n_rank must be at least 2");
  require(huber_delta > 0.0, "huber_delta must be positive");
}

double learning_rate(double alpha, double gamma, std::size_t t, std::size_t period) {
  return alpha * std::pow(gamma, static_cast<double>(t / period));
}

WeightOptimizer::WeightOptimizer(std::vector<Tensor> params, OptimizerKind kind, double clip_norm)
    : params_(std::move(params)), kind_(kind), clip_norm_(clip_norm) {
  if (kind_ == OptimizerKind::kAdam) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0f);
      v_.emplace_back(p.size(), 0.0f);
    }
    t_.assign(params_.size(), 0);
  }
}

void WeightOptimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void WeightOptimizer::step(double lr) {
  double sq = 0.0;
  for (const auto& p : params_) {
    for (float g : p.grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw std::runtime_error("non-finite gradient norm");
  const double scale = (clip_norm_ > 0.0 && norm > clip_norm_) ? clip_norm_ / norm : 1.0;

  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.mutable_data();
    const auto g = p.grad();
    if (kind_ == OptimizerKind::kSgd) {
      const float step = static_cast<float>(lr * scale);
      for (std::size_t k = 0; k < w.size(); ++k) w[k] -= step * g[k];
    } else {
      constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
      const auto n = static_cast<double>(++t_[i]);
      const double c1 = 1.0 - std::pow(b1, n);
      const double c2 = 1.0 - std::pow(b2, n);
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = scale * g[k];
        m[k] = static_cast<float>(b1 * m[k] + (1.0 - b1) * gk);
        v[k] = static_cast<float>(b2 * v[k] + (1.0 - b2) * gk * gk);
        w[k] -= static_cast<float>(lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps));
      }
    }
  }
  zero_grad();
}

double weight_step(const SuperArchitecture& sa, const Architecture& a, const Tensor& x,
                   const Tensor& y, double lr, double huber_delta, WeightOptimizer& opt) {
  const Tensor loss = huber_loss(forward(sa, a, x), y, static_cast<float>(huber_delta));
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw std::runtime_error("non-finite training loss (" + std::to_string(value) +
                             ") for architecture " + arch_str(a) + " at lr " + std::to_string(lr));
  }
  opt.zero_grad();
  backward(loss);
  opt.step(lr);
  return value;
}

double weight_step(const SuperArchitecture& sa, const Tensor& x, const Tensor& y, double lr,
                   double huber_delta, WeightOptimizer& opt, Rng& rng) {
  return weight_step(sa, sample_architecture(sa, rng), x, y, lr, huber_delta, opt);
}

std::vector<double> ranking_rewards(const std::vector<double>& losses) {
  const std::size_t n = losses.size();
  if (n < 2) throw std::invalid_argument("ranking_rewards needs at least two losses");
  const double top = std::log(static_cast<double>(n) / 2.0 + 1.0);
  std::vector<double> by_rank(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    by_rank[i] = std::max(0.0, top - std::log(static_cast<double>(i + 1)));
    total += by_rank[i];
  }
  for (auto& u : by_rank) u = u / total - 1.0 / static_cast<double>(n);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  std::vector<double> rewards(n);
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && losses[order[j]] == losses[order[i]]) ++j;
    double shared = 0.0;
    for (std::size_t k = i; k < j; ++k) shared += by_rank[k];
    // a fully tied population carries no ranking information
    shared = j - i == n ? 0.0 : shared / static_cast<double>(j - i);
    for (std::size_t k = i; k < j; ++k) rewards[order[k]] = shared;
    i = j;
  }
  return rewards;
}

ArchStepResult arch_step(SuperArchitecture& sa, const Tensor& x, const Tensor& y, double lr,
                         std::size_t n_rank, double huber_delta, Rng& rng) {
  ArchStepResult r;
  {
    NoGradGuard guard;
    for (std::size_t i = 0; i < n_rank; ++i) {
      r.archs.push_back(sample_architecture(sa, rng));
      r.losses.push_back(
          huber_loss(forward(sa, r.archs.back(), x), y, static_cast<float>(huber_delta)).item());
    }
  }
  for (double l : r.losses) r.mean_loss += l;
  r.mean_loss /= static_cast<double>(n_rank);
  r.rewards = ranking_rewards(r.losses);

  std::vector<std::vector<double>> step(sa.groups.size());
  for (std::size_t g = 0; g < sa.groups.size(); ++g) step[g].assign(sa.groups[g].logits.size(), 0.0);
  for (std::size_t i = 0; i < n_rank; ++i) {
    if (r.rewards[i] == 0.0) continue;
    const auto grad = log_likelihood_grad(r.archs[i], sa);
    for (std::size_t g = 0; g < grad.size(); ++g) {
      for (std::size_t j = 0; j < grad[g].size(); ++j) step[g][j] += r.rewards[i] * grad[g][j];
    }
  }
  const double c = lr / static_cast<double>(n_rank);
  for (std::size_t g = 0; g < sa.groups.size(); ++g) {
    for (std::size_t j = 0; j < step[g].size(); ++j) sa.groups[g].logits[j] += c * step[g][j];
  }
  return r;
}

TrainResult train_dense(const SuperArchitecture& initial, const Dataset& ds,
                        const TrainConfig& cfg) {
  return run_training(initial, std::nullopt, ds, cfg);
}

TrainResult train_manual(const SuperArchitecture& initial, const Architecture& fixed,
                         const Dataset& ds, const TrainConfig& cfg) {
  return run_training(initial, fixed, ds, cfg);
}

SuperArchitecture manual_superarch(std::size_t input_dim, std::vector<OutputSpec> outputs,
                                   SuperArchConfig config) {
  config.kernel_menu = {3};
  config.include_zero = false;
  config.include_mod_transposed = false;
  return default_superarch(input_dim, std::move(outputs), config);
}

double split_loss(const SuperArchitecture& sa, const Architecture& a, const Tensor& x,
                  const Tensor& y, double huber_delta) {
  NoGradGuard guard;
  const std::size_t n = x.dim(0);
  if (n == 0) throw std::invalid_argument("split_loss on an empty split");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double sum = 0.0;
  for (std::size_t b = 0; b < n; b += kEvalChunk) {
    const std::size_t e = std::min(n, b + kEvalChunk);
    const double l = huber_loss(forward(sa, a, take_rows(x, idx, b, e)), take_rows(y, idx, b, e),
                                static_cast<float>(huber_delta))
                         .item();
    sum += l * static_cast<double>(e - b);
  }
  return sum / static_cast<double>(n);
}

EvalResult evaluate(const SuperArchitecture& sa, const Tensor& x, const Tensor& y, Rng& rng,
                    std::size_t n_samples, double huber_delta) {
  EvalResult r;
  r.n_samples = n_samples;
  for (std::size_t i = 0; i < n_samples; ++i) {
    r.expected_loss += split_loss(sa, sample_architecture(sa, rng), x, y, huber_delta);
  }
  if (n_samples > 0) r.expected_loss /= static_cast<double>(n_samples);
  r.mode_loss = split_loss(sa, sa.mode_architecture(), x, y, huber_delta);
  return r;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,train_loss,val_loss,lr1,lr2\n";
  for (const auto& r : report.history) {
    out << r.epoch << ',' << manifest::format_double(r.train_loss) << ','
        << manifest::format_double(r.val_loss) << ',' << manifest::format_double(r.lr1) << ','
        << manifest::format_double(r.lr2) << '\n';
  }
}

}  // namespace dense
