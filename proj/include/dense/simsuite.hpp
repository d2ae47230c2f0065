#pragma once

// Analytic stand-in simulators, dataset generation with the 50/21/29 split,
// and output normalization.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dense/superarch.hpp"
#include "dense/tensor.hpp"

namespace dense {

struct Bound {
  double lo = 0.0;
  double hi = 1.0;

  double range() const { return hi - lo; }
  bool operator==(const Bound&) const = default;
};

struct SimulationSpec {
  std::string name;
  std::vector<std::string> param_names;
  std::vector<Bound> bounds;
  OutputSpec output;
  // Flattened output in row-major [channels, size...] order.
  std::function<std::vector<double>(std::span<const double>)> evaluate;

  std::size_t input_dim() const { return bounds.size(); }
  std::size_t output_size() const;
  Shape output_shape() const;
};

// Throws std::out_of_range if any parameter lies outside its bounds.
void check_bounds(std::span<const double> params, std::span<const Bound> bounds);

// Two peaks on a smooth baseline, 250 grid points. Parameters: amplitude,
// center, width.
std::vector<double> toy_spectral(std::span<const double> params);
// 64x64 rotated elliptical Gaussian blob plus a concentric ring. Parameters:
// x offset, y offset, anisotropy, rotation, ring radius.
std::vector<double> toy_image(std::span<const double> params);
// Five parameters to fifteen scalars.
std::vector<double> toy_scalars(std::span<const double> params);

const SimulationSpec& find_simulation(const std::string& name);
std::vector<std::string> simulation_names();

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

enum class SplitKind { kTrain, kVal, kTest };

// floor(0.50 n) / floor(0.21 n) / remainder over a seeded shuffle.
Split make_split(std::size_t n, Rng& rng);

struct Normalization {
  std::vector<Bound> input_bounds;  // inputs map affinely onto [-1, 1]
  std::vector<double> out_mean;     // per output channel
  std::vector<double> out_std;

  bool operator==(const Normalization&) const = default;
};

inline constexpr double kStdFloor = 1e-8;

struct Dataset {
  std::string sim_name;
  std::uint64_t seed = 0;
  std::vector<Bound> bounds;
  OutputSpec output;
  Tensor X;  // [n, input_dim], raw parameters
  Tensor Y;  // [n, channels, size...], raw outputs
  Split split;
  Normalization norm;

  std::size_t size() const { return X.dim(0); }
  const std::vector<std::size_t>& rows(SplitKind kind) const;
};

Dataset generate_dataset(const SimulationSpec& spec, std::size_t n, std::uint64_t seed);

// Channel statistics over the given rows of Y (population std, floored).
Normalization compute_normalization(const std::vector<Bound>& bounds, const Tensor& Y,
                                    std::span<const std::size_t> rows);

// Inputs X: [n, p] in parameter units <-> [-1, 1].
Tensor normalize_inputs(const Normalization& norm, const Tensor& X);
// Outputs: [n, channels, ...] per-channel affine map.
Tensor normalize_outputs(const Normalization& norm, const Tensor& Y);
Tensor denormalize_outputs(const Normalization& norm, const Tensor& Yn);

// Selected rows of a [n, ...] tensor.
Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows);

// Normalized (inputs, outputs) for one split.
struct SplitData {
  Tensor X;
  Tensor Y;
};
SplitData normalized_split(const Dataset& ds, SplitKind kind);

void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace dense
