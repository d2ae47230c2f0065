#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "dense/manifest.hpp"
#include "dense/serialize.hpp"
#include "dense/simsuite.hpp"

namespace dense {
namespace {

constexpr const char* kDatasetMagic = "dense-dataset 1";
constexpr const char* kManifestEnd = "end";

// Channels and plane size of a [n, C, S...] or [n, C] tensor.
std::pair<std::size_t, std::size_t> channel_layout(const Tensor& Y) {
  if (Y.rank() < 2) throw std::invalid_argument("outputs must be [n, channels, ...]");
  const std::size_t channels = Y.dim(1);
  return {channels, Y.size() / (Y.dim(0) * channels)};
}

}  // namespace

const std::vector<std::size_t>& Dataset::rows(SplitKind kind) const {
  switch (kind) {
    case SplitKind::kTrain:
      return split.train;
    case SplitKind::kVal:
      return split.val;
    case SplitKind::kTest:
      return split.test;
  }
  throw std::logic_error("bad split kind");
}

Split make_split(std::size_t n, Rng& rng) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  const std::size_t n_train = n * 50 / 100;
  const std::size_t n_val = n * 21 / 100;
  Split s;
  s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
               perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
  return s;
}

Dataset generate_dataset(const SimulationSpec& spec, std::size_t n, std::uint64_t seed) {
  if (n < 10) throw std::invalid_argument("dataset needs at least 10 samples");
  Rng rng(seed);
  const std::size_t p = spec.input_dim();
  const std::size_t out = spec.output_size();
  std::vector<float> xs(n * p);
  std::vector<float> ys(n * out);
  std::vector<double> params(p);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      // Round through float first so the stored inputs reproduce Y exactly.
      const float v = static_cast<float>(uniform(rng, spec.bounds[j].lo, spec.bounds[j].hi));
      xs[i * p + j] = v;
      params[j] = v;
    }
    const auto y = spec.evaluate(params);
    if (y.size() != out) throw std::runtime_error("simulator '" + spec.name + "' returned wrong size");
    for (std::size_t k = 0; k < out; ++k) {
      if (!std::isfinite(y[k])) {
        throw std::runtime_error("simulator '" + spec.name + "' produced a non-finite output");
      }
      ys[i * out + k] = static_cast<float>(y[k]);
    }
  }
  Dataset ds;
  ds.sim_name = spec.name;
  ds.seed = seed;
  ds.bounds = spec.bounds;
  ds.output = spec.output;
  ds.X = Tensor({n, p}, std::move(xs));
  Shape yshape{n};
  for (auto e : spec.output_shape()) yshape.push_back(e);
  ds.Y = Tensor(std::move(yshape), std::move(ys));
  ds.split = make_split(n, rng);
  ds.norm = compute_normalization(ds.bounds, ds.Y, ds.split.train);
  return ds;
}

Normalization compute_normalization(const std::vector<Bound>& bounds, const Tensor& Y,
                                    std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("normalization needs at least one row");
  const auto [channels, plane] = channel_layout(Y);
  Normalization norm;
  norm.input_bounds = bounds;
  norm.out_mean.assign(channels, 0.0);
  norm.out_std.assign(channels, 0.0);
  auto y = Y.data();
  const double count = static_cast<double>(rows.size() * plane);
  for (std::size_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (auto r : rows) {
      const float* v = y.data() + (r * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) s += v[k];
    }
    const double mean = s / count;
    double ss = 0.0;
    for (auto r : rows) {
      const float* v = y.data() + (r * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) ss += (v[k] - mean) * (v[k] - mean);
    }
    norm.out_mean[c] = mean;
    norm.out_std[c] = std::max(std::sqrt(ss / count), kStdFloor);
  }
  return norm;
}

Tensor normalize_inputs(const Normalization& norm, const Tensor& X) {
  const std::size_t p = norm.input_bounds.size();
  if (X.rank() != 2 || X.dim(1) != p) throw std::invalid_argument("inputs must be [n, input_dim]");
  std::vector<float> out(X.size());
  auto x = X.data();
  for (std::size_t i = 0; i < X.dim(0); ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      const auto& b = norm.input_bounds[j];
      out[i * p + j] = static_cast<float>(2.0 * (x[i * p + j] - b.lo) / b.range() - 1.0);
    }
  }
  return Tensor(X.shape(), std::move(out));
}

namespace {

Tensor affine_channels(const Normalization& norm, const Tensor& Y, bool forward) {
  const auto [channels, plane] = channel_layout(Y);
  if (channels != norm.out_mean.size()) {
    throw std::invalid_argument("output channel count does not match normalization");
  }
  std::vector<float> out(Y.size());
  auto y = Y.data();
  const std::size_t n = Y.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < channels; ++c) {
      const double m = norm.out_mean[c];
      const double s = norm.out_std[c];
      const std::size_t base = (i * channels + c) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = y[base + k];
        out[base + k] = static_cast<float>(forward ? (v - m) / s : v * s + m);
      }
    }
  }
  return Tensor(Y.shape(), std::move(out));
}

}  // namespace

Tensor normalize_outputs(const Normalization& norm, const Tensor& Y) {
  return affine_channels(norm, Y, true);
}

Tensor denormalize_outputs(const Normalization& norm, const Tensor& Yn) {
  return affine_channels(norm, Yn, false);
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("gather_rows: no rows selected");
  const std::size_t stride = t.size() / t.dim(0);
  std::vector<float> out(rows.size() * stride);
  auto d = t.data();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= t.dim(0)) throw std::out_of_range("gather_rows: row index out of range");
    std::copy_n(d.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                out.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  Shape shape = t.shape();
  shape[0] = rows.size();
  return Tensor(std::move(shape), std::move(out));
}

SplitData normalized_split(const Dataset& ds, SplitKind kind) {
  const auto& rows = ds.rows(kind);
  if (rows.empty()) throw std::invalid_argument("requested split is empty");
  return {normalize_inputs(ds.norm, gather_rows(ds.X, rows)),
          normalize_outputs(ds.norm, gather_rows(ds.Y, rows))};
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << kDatasetMagic << '\n';
  manifest::Writer w(out);
  w.line("sim").put(ds.sim_name);
  w.line("n").put(ds.size());
  w.line("seed").put(ds.seed);
  w.line("input_dim").put(ds.bounds.size());
  w.line("bounds");
  for (const auto& b : ds.bounds) w.put(b.lo).put(b.hi);
  w.line("output_channels").put(ds.output.channels);
  w.line("output_size").put_all(ds.output.size);
  w.line("split_counts").put(ds.split.train.size()).put(ds.split.val.size()).put(ds.split.test.size());
  w.line("train").put_all(ds.split.train);
  w.line("val").put_all(ds.split.val);
  w.line("test").put_all(ds.split.test);
  w.line("out_mean").put_all(ds.norm.out_mean);
  w.line("out_std").put_all(ds.norm.out_std);
  w.line(kManifestEnd);
  w.end();
  write_tensor(out, ds.X);
  write_tensor(out, ds.Y);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset '" + path.string() + "'");
  manifest::Reader r(in, kManifestEnd);
  if (r.first_line() != kDatasetMagic) throw std::runtime_error("'" + path.string() + "' is not a dataset file");
  Dataset ds;
  ds.sim_name = r.str("sim");
  ds.seed = r.uint("seed");
  const auto bounds = r.doubles("bounds");
  if (bounds.size() != 2 * r.uint("input_dim")) throw std::runtime_error("dataset bounds malformed");
  for (std::size_t i = 0; i < bounds.size(); i += 2) ds.bounds.push_back({bounds[i], bounds[i + 1]});
  ds.output.channels = r.uint("output_channels");
  for (auto v : r.uints("output_size")) ds.output.size.push_back(v);
  for (auto v : r.uints("train")) ds.split.train.push_back(v);
  for (auto v : r.uints("val")) ds.split.val.push_back(v);
  for (auto v : r.uints("test")) ds.split.test.push_back(v);
  ds.norm.input_bounds = ds.bounds;
  ds.norm.out_mean = r.doubles("out_mean");
  ds.norm.out_std = r.doubles("out_std");
  ds.X = read_tensor(in);
  ds.Y = read_tensor(in);
  const std::size_t n = r.uint("n");
  if (ds.X.dim(0) != n || ds.Y.dim(0) != n || ds.X.dim(1) != ds.bounds.size()) {
    throw std::runtime_error("dataset tensors do not match the manifest");
  }
  if (ds.split.train.size() + ds.split.val.size() + ds.split.test.size() != n) {
    throw std::runtime_error("dataset split does not cover all samples");
  }
  return ds;
}

}  // namespace dense
