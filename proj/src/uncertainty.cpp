#include "dense/uncertainty.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "dense/manifest.hpp"

namespace dense {
namespace {

// Weighted running moments in double, one slot per output element.
struct Moments {
  std::vector<double> mean;
  std::vector<double> m2;
  double weight = 0.0;

  void add(std::span<const float> v, double w) {
    if (mean.empty()) {
      mean.assign(v.size(), 0.0);
      m2.assign(v.size(), 0.0);
    }
    weight += w;
    const double r = w / weight;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = v[i] - mean[i];
      mean[i] += r * d;
      m2[i] += w * d * (v[i] - mean[i]);
    }
  }
};

Tensor to_tensor(const Shape& shape, const std::vector<double>& v) {
  return Tensor(shape, std::vector<float>(v.begin(), v.end()));
}

}  // namespace

UncertainPrediction predict_uncertain(const SuperArchitecture& sa, const Tensor& x,
                                      std::size_t n_samples, Rng& rng) {
  if (n_samples < 2) throw std::invalid_argument("predict_uncertain needs at least 2 samples");
  NoGradGuard guard;
  Moments m;
  Shape shape;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const Tensor y = forward(sa, sample_architecture(sa, rng), x);
    shape = y.shape();
    m.add(y.data(), 1.0);
  }
  std::vector<double> var(m.m2.size());
  for (std::size_t i = 0; i < var.size(); ++i) {
    var[i] = std::max(0.0, m.m2[i] / static_cast<double>(n_samples - 1));
  }
  return {to_tensor(shape, m.mean), to_tensor(shape, var), n_samples};
}

UncertainPrediction predict_uncertain(const Emulator& model, const Tensor& params,
                                      std::size_t n_samples, Rng& rng) {
  auto p = predict_uncertain(model.arch, normalize_inputs(model.norm, params), n_samples, rng);
  p.mean = denormalize_outputs(model.norm, p.mean);
  // per-channel scale of the variance
  const std::size_t n = p.variance.dim(0);
  const std::size_t channels = model.norm.out_std.size();
  const std::size_t per_channel = p.variance.size() / (n * channels);
  auto v = p.variance.mutable_data();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double s = model.norm.out_std[(i / per_channel) % channels];
    v[i] = static_cast<float>(v[i] * s * s);
  }
  return p;
}

UncertainPrediction exact_mixture(const SuperArchitecture& sa, const Tensor& x,
                                  std::size_t max_architectures) {
  const std::size_t count = sa.architecture_count();
  if (count > max_architectures) {
    throw std::invalid_argument("exact_mixture: " + std::to_string(count) +
                                " architectures exceed the limit of " +
                                std::to_string(max_architectures));
  }
  NoGradGuard guard;
  std::vector<std::vector<double>> probs;
  for (const auto& g : sa.groups) probs.push_back(op_probs(g));
  Moments m;
  Shape shape;
  Architecture a{std::vector<std::size_t>(sa.groups.size(), 0)};
  for (std::size_t k = 0; k < count; ++k) {
    std::size_t rest = k;
    double w = 1.0;
    for (std::size_t g = 0; g < sa.groups.size(); ++g) {
      a.selection[g] = rest % probs[g].size();
      rest /= probs[g].size();
      w *= probs[g][a.selection[g]];
    }
    if (w == 0.0) continue;
    const Tensor y = forward(sa, a, x);
    shape = y.shape();
    m.add(y.data(), w);
  }
  std::vector<double> var(m.m2.size());
  for (std::size_t i = 0; i < var.size(); ++i) var[i] = std::max(0.0, m.m2[i] / m.weight);
  return {to_tensor(shape, m.mean), to_tensor(shape, var), count};
}

CoverageReport coverage_report(const UncertainPrediction& pred, const Tensor& y,
                               double variance_floor) {
  if (y.shape() != pred.mean.shape()) {
    throw std::invalid_argument("coverage_report: target shape " + shape_str(y.shape()) +
                                " does not match prediction " + shape_str(pred.mean.shape()));
  }
  CoverageReport r;
  r.n_elements = y.size();
  if (r.n_elements == 0) return r;
  std::size_t inside = 0;
  double std_sum = 0.0;
  const auto mu = pred.mean.data();
  const auto var = pred.variance.data();
  const auto t = y.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double sigma = std::sqrt(static_cast<double>(var[i]) + variance_floor);
    std_sum += sigma;
    inside += std::abs(static_cast<double>(t[i]) - mu[i]) <= 2.0 * sigma;
  }
  r.coverage = static_cast<double>(inside) / static_cast<double>(r.n_elements);
  r.mean_std = std_sum / static_cast<double>(r.n_elements);
  return r;
}

CoverageReport coverage_report(const SuperArchitecture& sa, const Tensor& x, const Tensor& y,
                               std::size_t n_samples, Rng& rng, double variance_floor) {
  return coverage_report(predict_uncertain(sa, x, n_samples, rng), y, variance_floor);
}

void write_uncertainty_csv(std::ostream& out, const UncertainPrediction& pred, std::size_t row,
                           std::optional<std::span<const double>> truth) {
  const std::size_t n = pred.mean.dim(0);
  if (row >= n) throw std::out_of_range("prediction row out of range");
  const std::size_t per = pred.mean.size() / n;
  if (truth && truth->size() != per) throw std::invalid_argument("truth length mismatch");
  out << "index,mean,std" << (truth ? ",simulator" : "") << '\n';
  for (std::size_t j = 0; j < per; ++j) {
    const std::size_t i = row * per + j;
    out << j << ',' << manifest::format_double(pred.mean.data()[i]) << ','
        << manifest::format_double(std::sqrt(static_cast<double>(pred.variance.data()[i])));
    if (truth) out << ',' << manifest::format_double((*truth)[j]);
    out << '\n';
  }
}

}  // namespace dense
