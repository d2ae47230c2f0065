#pragma once

// Two-step search loop: weight updates on training minibatches with one
// sampled architecture per step, then REINFORCE updates of the network
// variables on validation minibatches with rank-based rewards.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dense/model.hpp"
#include "dense/rng.hpp"
#include "dense/simsuite.hpp"
#include "dense/superarch.hpp"

namespace dense {

enum class OptimizerKind { kSgd, kAdam };

struct TrainConfig {
  std::size_t n_epochs = 3000;
  double alpha1 = 3.06e-4;
  std::size_t m1 = 35;
  double gamma1 = 0.757;
  std::size_t s1 = 513;  // weight steps per decay
  double alpha2 = 4.88e-3;
  std::size_t m2 = 142;
  double gamma2 = 0.701;
  std::size_t s2 = 918;  // epochs per decay
  std::size_t p_val = 2;
  std::size_t n_rank = 8;
  double huber_delta = 1.0;
  double clip_norm = 10.0;  // <= 0 disables clipping
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 0;

  static TrainConfig dense_defaults() { return {}; }
  static TrainConfig manual_defaults();
  // Throws std::invalid_argument on non-positive rates/sizes or gamma
  // outside (0, 1].
  void validate() const;
};

// Applies the keys present in a JSON object onto cfg. Unknown keys throw.
void apply_train_config_json(TrainConfig& cfg, const std::string& json_text);

double learning_rate(double alpha, double gamma, std::size_t t, std::size_t period);

// Gradient descent over a fixed parameter list. Parameters without a
// gradient in the current step are left alone.
class WeightOptimizer {
 public:
  WeightOptimizer(std::vector<Tensor> params, OptimizerKind kind, double clip_norm);
  void step(double lr);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  OptimizerKind kind_;
  double clip_norm_;
  std::vector<std::vector<float>> m_, v_;
  std::vector<std::size_t> t_;
};

double weight_step(const SuperArchitecture& sa, const Architecture& a, const Tensor& x,
                   const Tensor& y, double lr, double huber_delta, WeightOptimizer& opt);

// Samples the architecture from rng first.
double weight_step(const SuperArchitecture& sa, const Tensor& x, const Tensor& y, double lr,
                   double huber_delta, WeightOptimizer& opt, Rng& rng);

std::vector<double> ranking_rewards(const std::vector<double>& losses);

struct ArchStepResult {
  std::vector<Architecture> archs;
  std::vector<double> losses;
  std::vector<double> rewards;
  double mean_loss = 0.0;
};

ArchStepResult arch_step(SuperArchitecture& sa, const Tensor& x, const Tensor& y, double lr,
                         std::size_t n_rank, double huber_delta, Rng& rng);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr1 = 0.0;
  double lr2 = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> history;
  std::optional<std::size_t> best_epoch;  // snapshot id
  double best_val_loss = 0.0;
  std::vector<double> final_entropies;
  double total_seconds = 0.0;
};

struct TrainResult {
  SuperArchitecture model;  // best snapshot
  TrainReport report;
};

TrainResult train_dense(const SuperArchitecture& initial, const Dataset& ds,
                        const TrainConfig& cfg);

// Trains the given fixed selection only; no network-variable updates.
TrainResult train_manual(const SuperArchitecture& initial, const Architecture& fixed,
                         const Dataset& ds, const TrainConfig& cfg);

// Conventional network: every group holds one conv with kernel 3.
SuperArchitecture manual_superarch(std::size_t input_dim, std::vector<OutputSpec> outputs,
                                   SuperArchConfig config = {});

struct EvalResult {
  double expected_loss = 0.0;  // mean over sampled architectures
  double mode_loss = 0.0;
  std::size_t n_samples = 0;
};

// Huber loss over a whole normalized split.
double split_loss(const SuperArchitecture& sa, const Architecture& a, const Tensor& x,
                  const Tensor& y, double huber_delta);

EvalResult evaluate(const SuperArchitecture& sa, const Tensor& x, const Tensor& y, Rng& rng,
                    std::size_t n_samples = 32, double huber_delta = 1.0);

void write_report_csv(std::ostream& out, const TrainReport& report);

}  // namespace dense
