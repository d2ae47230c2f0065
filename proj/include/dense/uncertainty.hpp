#pragma once

// Predictive mean and variance from forward passes with independently
// sampled architectures.

#include <iosfwd>
#include <optional>
#include <span>

#include "dense/model.hpp"
#include "dense/superarch.hpp"

namespace dense {

struct UncertainPrediction {
  Tensor mean;      // [N, output...]
  Tensor variance;  // same shape, >= 0
  std::size_t n_samples = 0;
};

inline constexpr std::size_t kDefaultUncertaintySamples = 64;

// Unbiased (n - 1) variance in the network's normalized output units.
UncertainPrediction predict_uncertain(const SuperArchitecture& sa, const Tensor& x,
                                      std::size_t n_samples, Rng& rng);

// Raw parameters in, raw outputs out; variance is scaled by out_std^2.
UncertainPrediction predict_uncertain(const Emulator& model, const Tensor& params,
                                      std::size_t n_samples, Rng& rng);

// Mixture mean and variance over every architecture weighted by pi(a|b).
// Throws std::invalid_argument when the space exceeds max_architectures.
UncertainPrediction exact_mixture(const SuperArchitecture& sa, const Tensor& x,
                                  std::size_t max_architectures = 4096);

struct CoverageReport {
  double coverage = 0.0;  // fraction with |y - mean| <= 2 sigma
  std::size_t n_elements = 0;
  double mean_std = 0.0;
};

// y in the same units as the prediction. sigma = sqrt(variance + floor).
CoverageReport coverage_report(const UncertainPrediction& pred, const Tensor& y,
                               double variance_floor = 0.0);

CoverageReport coverage_report(const SuperArchitecture& sa, const Tensor& x, const Tensor& y,
                               std::size_t n_samples, Rng& rng, double variance_floor = 0.0);

// Rows: index,mean,std[,simulator] for sample `row` of the prediction.
void write_uncertainty_csv(std::ostream& out, const UncertainPrediction& pred, std::size_t row,
                           std::optional<std::span<const double>> truth = std::nullopt);

}  // namespace dense
