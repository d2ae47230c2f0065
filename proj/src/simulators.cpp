#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "dense/simsuite.hpp"

namespace dense {
namespace {

constexpr std::size_t kSpectralPoints = 250;
constexpr std::size_t kImageSide = 64;

const std::vector<Bound> kSpectralBounds{{0.0, 2.0}, {0.25, 0.75}, {0.03, 0.10}};
const std::vector<Bound> kImageBounds{
    {-0.2, 0.2}, {-0.2, 0.2}, {0.6, 1.6}, {0.0, std::numbers::pi}, {0.3, 0.7}};
const std::vector<Bound> kScalarBounds{{0.0, 1.0}, {0.0, 2.0}, {-1.0, 1.0}, {1.0, 3.0}, {-2.0, 0.0}};

// Bounds are checked with a small slack so float-rounded parameters that sat
// on a bound stay valid; values are then clamped.
constexpr double kBoundSlack = 1e-6;

std::vector<double> clamped(std::span<const double> params, std::span<const Bound> bounds) {
  check_bounds(params, bounds);
  std::vector<double> p(params.begin(), params.end());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::clamp(p[i], bounds[i].lo, bounds[i].hi);
  return p;
}

}  // namespace

std::size_t SimulationSpec::output_size() const { return shape_numel(output_shape()); }

Shape SimulationSpec::output_shape() const {
  Shape s{output.channels};
  s.insert(s.end(), output.size.begin(), output.size.end());
  return s;
}

void check_bounds(std::span<const double> params, std::span<const Bound> bounds) {
  if (params.size() != bounds.size()) {
    throw std::invalid_argument("expected " + std::to_string(bounds.size()) + " parameters, got " +
                                std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double slack = kBoundSlack * bounds[i].range();
    if (!(params[i] >= bounds[i].lo - slack && params[i] <= bounds[i].hi + slack)) {
      throw std::out_of_range("parameter " + std::to_string(i) + " = " + std::to_string(params[i]) +
                              " outside [" + std::to_string(bounds[i].lo) + ", " +
                              std::to_string(bounds[i].hi) + "]");
    }
  }
}

std::vector<double> toy_spectral(std::span<const double> params) {
  const auto p = clamped(params, kSpectralBounds);
  const double amp = p[0];
  const double mu = p[1];
  const double w = p[2];
  std::vector<double> s(kSpectralPoints);
  for (std::size_t j = 0; j < kSpectralPoints; ++j) {
    const double x = static_cast<double>(j) / static_cast<double>(kSpectralPoints - 1);
    const double baseline = 0.5 + 0.3 * x;
    const double main = std::exp(-(x - mu) * (x - mu) / (2.0 * w * w));
    const double side_w = 0.5 * w;
    const double side_x = x - mu - 0.8 * w;
    const double side = 0.3 * std::exp(-side_x * side_x / (2.0 * side_w * side_w));
    s[j] = baseline + amp * (main + side);
  }
  return s;
}

std::vector<double> toy_image(std::span<const double> params) {
  const auto p = clamped(params, kImageBounds);
  const double cx = p[0];
  const double cy = p[1];
  const double q = p[2];
  const double theta = p[3];
  const double radius = p[4];
  const double sx = 0.25 * q;
  const double sy = 0.25 / q;
  const double ring_w = 0.06;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double half = static_cast<double>(kImageSide) / 2.0;
  std::vector<double> img(kImageSide * kImageSide);
  for (std::size_t r = 0; r < kImageSide; ++r) {
    const double y = (static_cast<double>(r) + 0.5) / half - 1.0 - cy;
    for (std::size_t col = 0; col < kImageSide; ++col) {
      const double x = (static_cast<double>(col) + 0.5) / half - 1.0 - cx;
      const double u = c * x + s * y;
      const double v = -s * x + c * y;
      const double blob = std::exp(-0.5 * (u * u / (sx * sx) + v * v / (sy * sy)));
      const double rho = std::sqrt(x * x + y * y);
      const double ring = 0.5 * std::exp(-0.5 * (rho - radius) * (rho - radius) / (ring_w * ring_w));
      img[r * kImageSide + col] = blob + ring;
    }
  }
  return img;
}

std::vector<double> toy_scalars(std::span<const double> params) {
  const auto p = clamped(params, kScalarBounds);
  const double pi = std::numbers::pi;
  const double a = p[0], b = p[1], c = p[2], d = p[3], e = p[4];
  return {
      a + 2.0 * b - c,  // affine
      3.0 * d - e + 1.0,
      a - e,
      a * b,
      c * c,
      d * d * d - b,
      a * c * e,
      std::sin(pi * a),
      std::cos(pi * b * c),
      std::sin(d + e),
      std::exp(0.5 * a),
      std::tanh(2.0 * b - d),
      std::sqrt(1.0 + c * c + e * e),
      a * a + b * b + c * c + d * d + e * e,
      std::sin(pi * a) * std::cos(pi * e),
  };
}

const SimulationSpec& find_simulation(const std::string& name) {
  static const std::vector<SimulationSpec> registry{
      {"spectral", {"amplitude", "center", "width"}, kSpectralBounds, {1, {kSpectralPoints}},
       toy_spectral},
      {"image", {"offset_x", "offset_y", "anisotropy", "rotation", "ring_radius"}, kImageBounds,
       {1, {kImageSide, kImageSide}}, toy_image},
      {"scalars", {"a", "b", "c", "d", "e"}, kScalarBounds, {15, {}}, toy_scalars},
  };
  for (const auto& s : registry) {
    if (s.name == name) return s;
  }
  std::string known;
  for (const auto& s : registry) known += (known.empty() ? "" : ", ") + s.name;
  throw std::invalid_argument("unknown simulation '" + name + "' (known: " + known + ")");
}

std::vector<std::string> simulation_names() { return {"spectral", "image", "scalars"}; }

}  // namespace dense
