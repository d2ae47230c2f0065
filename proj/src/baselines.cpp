#include "dense/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace dense {
namespace {

template <typename Model>
SplitLosses score(const Model& model, const Dataset& ds, double delta) {
  auto loss = [&](SplitKind kind) {
    if (ds.rows(kind).empty()) return 0.0;
    const auto data = normalized_split(ds, kind);
    return static_cast<double>(
        huber_loss(model.predict(data.X), data.Y, static_cast<float>(delta)).item());
  };
  return {loss(SplitKind::kTrain), loss(SplitKind::kVal), loss(SplitKind::kTest)};
}

}  // namespace

KnnRegressor::KnnRegressor(Tensor train_x, Tensor train_y, std::size_t k)
    : train_x_(std::move(train_x)), train_y_(std::move(train_y)), k_(k) {
  if (k_ == 0) throw std::invalid_argument("k must be positive");
  if (k_ > train_x_.dim(0)) {
    throw std::invalid_argument("k = " + std::to_string(k_) + " exceeds the " +
                                std::to_string(train_x_.dim(0)) + " training samples");
  }
}

Tensor KnnRegressor::predict(const Tensor& x) const {
  const std::size_t n_train = train_x_.dim(0);
  const std::size_t p = train_x_.dim(1);
  if (x.rank() != 2 || x.dim(1) != p) throw std::invalid_argument("knn: input width mismatch");
  const std::size_t out = train_y_.size() / n_train;
  const std::size_t n = x.dim(0);
  std::vector<float> pred(n * out, 0.0f);
  auto tx = train_x_.data();
  auto ty = train_y_.data();
  auto xd = x.data();
  std::vector<std::pair<double, std::size_t>> dist(n_train);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < n_train; ++t) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        const double diff = static_cast<double>(xd[i * p + j]) - tx[t * p + j];
        d2 += diff * diff;
      }
      dist[t] = {d2, t};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
    std::vector<double> acc(out, 0.0);
    if (dist[0].first == 0.0) {
      // Exact hit: reproduce the stored sample.
      const std::size_t t = dist[0].second;
      for (std::size_t o = 0; o < out; ++o) acc[o] = ty[t * out + o];
    } else {
      double wsum = 0.0;
      for (std::size_t m = 0; m < k_; ++m) {
        const double w = 1.0 / std::sqrt(dist[m].first);
        wsum += w;
        const std::size_t t = dist[m].second;
        for (std::size_t o = 0; o < out; ++o) acc[o] += w * ty[t * out + o];
      }
      for (auto& v : acc) v /= wsum;
    }
    for (std::size_t o = 0; o < out; ++o) pred[i * out + o] = static_cast<float>(acc[o]);
  }
  Shape shape = train_y_.shape();
  shape[0] = n;
  return Tensor(std::move(shape), std::move(pred));
}

RidgeRegressor::RidgeRegressor(const Tensor& train_x, const Tensor& train_y, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("ridge lambda must be non-negative");
  const std::size_t n = train_x.dim(0);
  in_dim_ = train_x.dim(1);
  out_shape_.assign(train_y.shape().begin() + 1, train_y.shape().end());
  const std::size_t out = train_y.size() / n;
  Eigen::MatrixXd X(n, in_dim_);
  Eigen::MatrixXd Y(n, out);
  auto xd = train_x.data();
  auto yd = train_y.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < in_dim_; ++j) X(i, j) = xd[i * in_dim_ + j];
    for (std::size_t o = 0; o < out; ++o) Y(i, o) = yd[i * out + o];
  }
  const Eigen::RowVectorXd x_mean = X.colwise().mean();
  const Eigen::RowVectorXd y_mean = Y.colwise().mean();
  X.rowwise() -= x_mean;
  Y.rowwise() -= y_mean;
  Eigen::MatrixXd gram = X.transpose() * X;
  gram.diagonal().array() += lambda;
  const Eigen::MatrixXd W = gram.ldlt().solve(X.transpose() * Y);
  const Eigen::RowVectorXd b = y_mean - x_mean * W;
  weights_.resize(in_dim_ * out);
  for (std::size_t j = 0; j < in_dim_; ++j) {
    for (std::size_t o = 0; o < out; ++o) weights_[j * out + o] = W(j, o);
  }
  intercept_.assign(b.data(), b.data() + out);
}

Tensor RidgeRegressor::predict(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_dim_) throw std::invalid_argument("ridge: input width mismatch");
  const std::size_t n = x.dim(0);
  const std::size_t out = intercept_.size();
  std::vector<float> pred(n * out);
  auto xd = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      double v = intercept_[o];
      for (std::size_t j = 0; j < in_dim_; ++j) v += xd[i * in_dim_ + j] * weights_[j * out + o];
      pred[i * out + o] = static_cast<float>(v);
    }
  }
  Shape shape{n};
  shape.insert(shape.end(), out_shape_.begin(), out_shape_.end());
  return Tensor(std::move(shape), std::move(pred));
}

KnnBaseline knn_baseline(const Dataset& ds, std::size_t k, double huber_delta) {
  if (ds.split.train.empty()) throw std::invalid_argument("training split is empty");
  const auto train = normalized_split(ds, SplitKind::kTrain);
  KnnRegressor model(train.X, train.Y, k);
  auto losses = score(model, ds, huber_delta);
  return {std::move(model), losses};
}

RidgeBaseline ridge_baseline(const Dataset& ds, double lambda, double huber_delta) {
  if (ds.split.train.empty()) throw std::invalid_argument("training split is empty");
  const auto train = normalized_split(ds, SplitKind::kTrain);
  RidgeRegressor model(train.X, train.Y, lambda);
  auto losses = score(model, ds, huber_delta);
  return {std::move(model), losses};
}

}  // namespace dense
