#pragma once

// Non-deep-learning reference emulators scored with the same normalized
// Huber metric as the searched networks.

#include <vector>

#include "dense/simsuite.hpp"

namespace dense {

struct SplitLosses {
  double train = 0.0;
  double val = 0.0;
  double test = 0.0;
};

// Inverse-distance weighted k nearest neighbours on normalized inputs.
class KnnRegressor {
 public:
  KnnRegressor(Tensor train_x, Tensor train_y, std::size_t k);
  // x: [n, input_dim] normalized -> [n, output...] normalized.
  Tensor predict(const Tensor& x) const;

 private:
  Tensor train_x_;
  Tensor train_y_;
  std::size_t k_;
};

// Linear ridge regression from normalized inputs to flattened normalized
// outputs; the intercept is not penalized.
class RidgeRegressor {
 public:
  RidgeRegressor(const Tensor& train_x, const Tensor& train_y, double lambda);
  Tensor predict(const Tensor& x) const;

 private:
  std::size_t in_dim_ = 0;
  Shape out_shape_;                // per-sample
  std::vector<double> weights_;    // [in_dim, out]
  std::vector<double> intercept_;  // [out]
};

struct KnnBaseline {
  KnnRegressor model;
  SplitLosses losses;
};

struct RidgeBaseline {
  RidgeRegressor model;
  SplitLosses losses;
};

KnnBaseline knn_baseline(const Dataset& ds, std::size_t k = 5, double huber_delta = 1.0);
RidgeBaseline ridge_baseline(const Dataset& ds, double lambda = 1e-3, double huber_delta = 1.0);

}  // namespace dense
