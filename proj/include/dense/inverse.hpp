#pragma once

// Inverse problems over a forward model (simulator or emulator): CMA-ES
// retrieval and affine-invariant ensemble MCMC with a band likelihood.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dense/model.hpp"
#include "dense/rng.hpp"
#include "dense/simsuite.hpp"

namespace dense {

using Point = std::vector<double>;
using Signal = std::vector<double>;

// Batched map from raw parameters to flattened raw outputs. Evaluation is
// const and may be called concurrently.
struct ForwardModel {
  std::vector<Bound> bounds;
  Shape output_shape;  // per sample, [channels, size...]
  bool is_emulator = false;
  Normalization norm;  // output statistics used by the retrieval objective
  std::function<std::vector<Signal>(const std::vector<Point>&)> evaluate_batch;

  std::size_t dim() const { return bounds.size(); }
  std::size_t output_size() const;
  Signal operator()(std::span<const double> params) const;
  std::vector<Signal> operator()(const std::vector<Point>& params) const;
};

ForwardModel simulator_forward(const SimulationSpec& spec, const Normalization& norm);
// Uses the modal architecture of the emulator.
ForwardModel emulator_forward(const Emulator& model);

// Mean squared error on per-channel standardized outputs.
using BatchObjective = std::function<std::vector<double>(const std::vector<Point>&)>;
BatchObjective retrieval_objective(const ForwardModel& fm, Signal observed);
double retrieval_error(const ForwardModel& fm, std::span<const double> observed,
                       std::span<const double> params);

Signal add_observation_noise(std::span<const double> signal, double level, Rng& rng);

// ---- CMA-ES ----

struct CmaOptions {
  std::size_t popsize = 32;
  std::size_t max_evals = 1200;
  std::uint64_t seed = 0;
  double sigma0 = 0.3;              // in units of the bound ranges
  std::optional<Point> x0;          // raw parameters; bound centers by default
  double min_sigma = 1e-12;
  double eigen_floor = 1e-20;       // relative to the largest eigenvalue
};

// Search state in unit-cube coordinates u = (x - lo) / range.
struct CmaState {
  Eigen::VectorXd mean;
  double sigma = 0.0;
  Eigen::MatrixXd C;
  Eigen::VectorXd p_sigma, p_c;
  std::size_t generation = 0;
  std::size_t lambda = 0;
  std::size_t mu = 0;
  Eigen::VectorXd weights;
  double mu_eff = 0.0;
};

class CmaEs {
 public:
  CmaEs(std::vector<Bound> bounds, const CmaOptions& opt);

  // Candidates in raw parameter units, reflected into the bounds.
  std::vector<Point> ask();
  // Values for the last ask(), same order. Non-finite values rank last;
  // throws std::runtime_error if every value is non-finite.
  void tell(const std::vector<double>& values);

  const CmaState& state() const { return s_; }
  double smallest_eigenvalue() const { return eig_min_; }

 private:
  void decompose();

  std::vector<Bound> bounds_;
  CmaOptions opt_;
  CmaState s_;
  Rng rng_;
  Eigen::MatrixXd B_;
  Eigen::VectorXd D_;
  Eigen::MatrixXd inv_sqrt_C_;
  std::vector<Eigen::VectorXd> last_u_;
  double c_sigma_, d_sigma_, c_c_, c1_, c_mu_, chi_n_;
  double eig_min_ = 0.0;
};

struct CmaGeneration {
  std::size_t generation = 0;
  std::size_t evals = 0;
  double best_value = 0.0;  // best so far
  double sigma = 0.0;
};

struct CmaResult {
  Point best_x;
  double best_value = 0.0;
  std::size_t evals = 0;
  std::vector<CmaGeneration> history;
  std::string stop_reason;  // "max_evals" or "sigma"
};

CmaResult cma_es_minimize(const BatchObjective& f, const std::vector<Bound>& bounds,
                          const CmaOptions& opt = {});
CmaResult cma_es_minimize(const std::function<double(std::span<const double>)>& f,
                          const std::vector<Bound>& bounds, const CmaOptions& opt = {});

struct RetrievalResult {
  Point params;
  double objective = 0.0;
  std::vector<double> rel_errors;  // |retrieved - truth| / range, empty without truth
  std::size_t evals = 0;
};

RetrievalResult retrieve(const ForwardModel& fm, const Signal& observed,
                         const CmaOptions& opt = {},
                         std::optional<std::span<const double>> truth = std::nullopt);

// ---- band likelihood and ensemble MCMC ----

struct Band {
  double width = 0.035;
  bool relative = true;  // |c - s| <= width*|s|, else |c - s| <= width
};

bool band_likelihood(std::span<const double> candidate, std::span<const double> center,
                     const Band& band);
// 0 inside the band, -inf outside.
double band_log_likelihood(std::span<const double> candidate, std::span<const double> center,
                           const Band& band);

using BatchLogLikelihood = std::function<std::vector<double>(const std::vector<Point>&)>;

struct McmcOptions {
  std::size_t n_walkers = 256;
  std::size_t n_samples = 200000;  // kept samples over all walkers
  std::size_t burn_in = 100;       // ensemble steps discarded first
  double a_stretch = 2.0;
  std::uint64_t seed = 0;
  std::size_t init_budget = 1000000;  // prior draws per walker
  std::vector<Point> fallback;        // jittered when prior rejection fails
  std::function<std::vector<Point>()> make_fallback;  // called if fallback is empty
  double fallback_jitter = 1e-3;      // fraction of the range
  bool keep_samples = true;
  // Called after every post-burn-in step with all walker positions.
  std::function<void(const std::vector<Point>&)> on_step;
};

struct McmcResult {
  std::vector<Point> samples;  // step-major, walker-minor
  std::size_t n_steps = 0;
  double acceptance = 0.0;
  std::size_t evaluations = 0;
};

// z with density proportional to 1/sqrt(z) on [1/a, a].
double draw_stretch(double a, Rng& rng);
// Y + z (X - Y)
Point stretch_proposal(std::span<const double> x, std::span<const double> y, double z);

McmcResult ensemble_mcmc(const BatchLogLikelihood& log_l, const std::vector<Bound>& bounds,
                         const McmcOptions& opt);
McmcResult ensemble_mcmc(const std::function<double(std::span<const double>)>& log_l,
                         const std::vector<Bound>& bounds, const McmcOptions& opt);

struct PosteriorOptions {
  McmcOptions mcmc;
  Band band;
  std::size_t bins = 20;
  CmaOptions fallback_cma;  // used only when prior rejection fails
};

struct PairCell {
  std::size_t i = 0, j = 0;
  std::size_t bin_i = 0, bin_j = 0;
  std::size_t count = 0;
};

struct PosteriorResult {
  McmcResult chain;
  std::vector<std::vector<std::size_t>> histograms;  // [param][bin]
  std::vector<PairCell> pairs;                       // i < j, every cell
  std::vector<double> mean;
  std::vector<double> stddev;
};

PosteriorResult posterior_sample(const ForwardModel& fm, const Signal& center,
                                 const PosteriorOptions& opt);

// Bins values on [lo, hi] into n equal cells; the top edge lands in the last.
std::size_t bin_index(double v, const Bound& b, std::size_t n);

void write_histograms_csv(std::ostream& out, const PosteriorResult& r,
                          const std::vector<Bound>& bounds,
                          const std::vector<std::string>& names);
void write_pairs_csv(std::ostream& out, const PosteriorResult& r, const std::vector<Bound>& bounds,
                     const std::vector<std::string>& names);
void write_chain_csv(std::ostream& out, const McmcResult& r, const std::vector<std::string>& names);

}  // namespace dense
