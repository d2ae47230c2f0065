#include "dense/inverse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "dense/manifest.hpp"

namespace dense {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t per_channel_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) n *= shape[i];
  return n;
}

void check_point(std::span<const double> p, std::size_t dim) {
  if (p.size() != dim) {
    throw std::invalid_argument("parameter vector has " + std::to_string(p.size()) +
                                " entries, expected " + std::to_string(dim));
  }
}

bool inside(std::span<const double> p, const std::vector<Bound>& bounds) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= bounds[i].lo && p[i] <= bounds[i].hi)) return false;
  }
  return true;
}

// Folds u back into [0, 1] by repeated mirroring.
double reflect_unit(double u) {
  double v = std::fmod(std::abs(u), 2.0);
  return v > 1.0 ? 2.0 - v : v;
}

void check_bounds_finite(const std::vector<Bound>& bounds) {
  if (bounds.empty()) throw std::invalid_argument("no parameters to search");
  for (const auto& b : bounds) {
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || !(b.hi > b.lo)) {
      throw std::invalid_argument("bounds must be finite with hi > lo");
    }
  }
}

}  // namespace

std::size_t ForwardModel::output_size() const {
  std::size_t n = 1;
  for (auto d : output_shape) n *= d;
  return n;
}

Signal ForwardModel::operator()(std::span<const double> params) const {
  return evaluate_batch({Point(params.begin(), params.end())}).front();
}

std::vector<Signal> ForwardModel::operator()(const std::vector<Point>& params) const {
  return evaluate_batch(params);
}

ForwardModel simulator_forward(const SimulationSpec& spec, const Normalization& norm) {
  ForwardModel fm;
  fm.bounds = spec.bounds;
  fm.output_shape = spec.output_shape();
  fm.norm = norm;
  fm.evaluate_batch = [spec](const std::vector<Point>& ps) {
    std::vector<Signal> out;
    out.reserve(ps.size());
    for (const auto& p : ps) {
      check_bounds(p, spec.bounds);
      out.push_back(spec.evaluate(p));
    }
    return out;
  };
  return fm;
}

ForwardModel emulator_forward(const Emulator& model) {
  ForwardModel fm;
  fm.bounds = model.norm.input_bounds;
  fm.is_emulator = true;
  fm.norm = model.norm;
  fm.output_shape = model.arch.output_shape();
  const std::size_t dim = fm.bounds.size();
  const auto bounds = fm.bounds;
  auto emu = std::make_shared<const Emulator>(model.clone());
  auto mode = std::make_shared<const Architecture>(model.arch.mode_architecture());
  fm.evaluate_batch = [emu, mode, dim, bounds](const std::vector<Point>& ps) {
    std::vector<Signal> result;
    if (ps.empty()) return result;
    std::vector<float> flat;
    flat.reserve(ps.size() * dim);
    for (const auto& p : ps) {
      check_point(p, dim);
      check_bounds(p, bounds);
      flat.insert(flat.end(), p.begin(), p.end());
    }
    const Tensor y = emu->predict(Tensor({ps.size(), dim}, std::move(flat)), *mode);
    const std::size_t per = y.size() / ps.size();
    const auto d = y.data();
    result.reserve(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) {
      result.emplace_back(d.begin() + i * per, d.begin() + (i + 1) * per);
    }
    return result;
  };
  return fm;
}

namespace {

double standardized_mse(std::span<const double> s, std::span<const double> obs,
                        const std::vector<double>& inv_std, std::size_t per) {
  double acc = 0.0;
  for (std::size_t e = 0; e < s.size(); ++e) {
    const double d = (s[e] - obs[e]) * inv_std[e / per];
    acc += d * d;
  }
  return acc / static_cast<double>(s.size());
}

std::vector<double> inverse_std(const ForwardModel& fm) {
  const std::size_t channels = fm.output_shape.empty() ? 1 : fm.output_shape[0];
  std::vector<double> inv(channels, 1.0);
  if (!fm.norm.out_std.empty()) {
    if (fm.norm.out_std.size() != channels) {
      throw std::invalid_argument("forward model normalization has " +
                                  std::to_string(fm.norm.out_std.size()) + " channels, output has " +
                                  std::to_string(channels));
    }
    for (std::size_t c = 0; c < channels; ++c) inv[c] = 1.0 / fm.norm.out_std[c];
  }
  return inv;
}

}  // namespace

BatchObjective retrieval_objective(const ForwardModel& fm, Signal observed) {
  if (observed.size() != fm.output_size()) {
    throw std::invalid_argument("observed signal has " + std::to_string(observed.size()) +
                                " elements, forward model produces " +
                                std::to_string(fm.output_size()));
  }
  const auto inv = inverse_std(fm);
  const std::size_t per = per_channel_size(fm.output_shape);
  return [fm, obs = std::move(observed), inv, per](const std::vector<Point>& ps) {
    const auto sig = fm(ps);
    std::vector<double> v(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) v[i] = standardized_mse(sig[i], obs, inv, per);
    return v;
  };
}

double retrieval_error(const ForwardModel& fm, std::span<const double> observed,
                       std::span<const double> params) {
  auto f = retrieval_objective(fm, Signal(observed.begin(), observed.end()));
  return f({Point(params.begin(), params.end())}).front();
}

Signal add_observation_noise(std::span<const double> signal, double level, Rng& rng) {
  if (!(level >= 0.0)) throw std::invalid_argument("noise level must be >= 0");
  Signal out(signal.begin(), signal.end());
  if (level == 0.0) return out;
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& v : out) v *= 1.0 + level * n(rng);
  return out;
}

// ---- CMA-ES ----

CmaEs::CmaEs(std::vector<Bound> bounds, const CmaOptions& opt)
    : bounds_(std::move(bounds)), opt_(opt), rng_(opt.seed) {
  check_bounds_finite(bounds_);
  if (opt.popsize < 4) throw std::invalid_argument("CMA-ES needs popsize >= 4");
  if (!(opt.sigma0 > 0.0)) throw std::invalid_argument("CMA-ES needs sigma0 > 0");
  const auto n = static_cast<Eigen::Index>(bounds_.size());
  const double nd = static_cast<double>(n);

  s_.lambda = opt.popsize;
  s_.mu = opt.popsize / 2;
  s_.weights.resize(static_cast<Eigen::Index>(s_.mu));
  for (std::size_t i = 0; i < s_.mu; ++i) {
    s_.weights[static_cast<Eigen::Index>(i)] =
        std::log((static_cast<double>(s_.lambda) + 1.0) / 2.0) - std::log(static_cast<double>(i + 1));
  }
  s_.weights /= s_.weights.sum();
  s_.mu_eff = 1.0 / s_.weights.squaredNorm();

  const double me = s_.mu_eff;
  c_sigma_ = (me + 2.0) / (nd + me + 5.0);
  d_sigma_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((me - 1.0) / (nd + 1.0)) - 1.0) + c_sigma_;
  c_c_ = (4.0 + me / nd) / (nd + 4.0 + 2.0 * me / nd);
  c1_ = 2.0 / ((nd + 1.3) * (nd + 1.3) + me);
  c_mu_ = std::min(1.0 - c1_, 2.0 * (me - 2.0 + 1.0 / me) / ((nd + 2.0) * (nd + 2.0) + me));
  chi_n_ = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));

  if (opt.x0 && opt.x0->size() != bounds_.size()) throw std::invalid_argument("x0 size mismatch");
  s_.mean.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = bounds_[static_cast<std::size_t>(i)];
    const double x = opt.x0 ? (*opt.x0)[static_cast<std::size_t>(i)] : 0.5 * (b.lo + b.hi);
    s_.mean[i] = reflect_unit((x - b.lo) / b.range());
  }
  s_.sigma = opt.sigma0;
  s_.C = Eigen::MatrixXd::Identity(n, n);
  s_.p_sigma = Eigen::VectorXd::Zero(n);
  s_.p_c = Eigen::VectorXd::Zero(n);
  decompose();
}

void CmaEs::decompose() {
  s_.C = 0.5 * (s_.C + s_.C.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s_.C);
  B_ = es.eigenvectors();
  Eigen::VectorXd ev = es.eigenvalues();
  const double floor = std::max(ev.maxCoeff(), 0.0) * opt_.eigen_floor;
  bool clamped = false;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (!(ev[i] > floor) || ev[i] <= 0.0) {
      ev[i] = std::max(floor, std::numeric_limits<double>::min());
      clamped = true;
    }
  }
  if (clamped) s_.C = B_ * ev.asDiagonal() * B_.transpose();
  eig_min_ = ev.minCoeff();
  D_ = ev.cwiseSqrt();
  inv_sqrt_C_ = B_ * D_.cwiseInverse().asDiagonal() * B_.transpose();
}

std::vector<Point> CmaEs::ask() {
  const auto n = s_.mean.size();
  std::normal_distribution<double> normal(0.0, 1.0);
  last_u_.assign(s_.lambda, Eigen::VectorXd());
  std::vector<Point> out(s_.lambda, Point(static_cast<std::size_t>(n)));
  for (std::size_t k = 0; k < s_.lambda; ++k) {
    Eigen::VectorXd z(n);
    for (Eigen::Index i = 0; i < n; ++i) z[i] = normal(rng_);
    Eigen::VectorXd u = s_.mean + s_.sigma * (B_ * D_.asDiagonal() * z);
    for (Eigen::Index i = 0; i < n; ++i) {
      u[i] = reflect_unit(u[i]);
      const auto& b = bounds_[static_cast<std::size_t>(i)];
      out[k][static_cast<std::size_t>(i)] = std::clamp(b.lo + u[i] * b.range(), b.lo, b.hi);
    }
    last_u_[k] = std::move(u);
  }
  return out;
}

void CmaEs::tell(const std::vector<double>& values) {
  if (values.size() != s_.lambda || last_u_.size() != s_.lambda) {
    throw std::invalid_argument("tell() needs one value per asked candidate");
  }
  std::vector<double> v(values);
  bool any_finite = false;
  for (auto& x : v) {
    if (std::isfinite(x)) {
      any_finite = true;
    } else {
      x = std::numeric_limits<double>::infinity();
    }
  }
  if (!any_finite) throw std::runtime_error("CMA-ES: objective is non-finite at every sampled point");
  std::vector<std::size_t> order(s_.lambda);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });

  const auto n = s_.mean.size();
  const Eigen::VectorXd old_mean = s_.mean;
  Eigen::VectorXd new_mean = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < s_.mu; ++k) {
    new_mean += s_.weights[static_cast<Eigen::Index>(k)] * last_u_[order[k]];
  }
  const Eigen::VectorXd y_w = (new_mean - old_mean) / s_.sigma;

  s_.p_sigma = (1.0 - c_sigma_) * s_.p_sigma +
               std::sqrt(c_sigma_ * (2.0 - c_sigma_) * s_.mu_eff) * (inv_sqrt_C_ * y_w);
  const double gen = static_cast<double>(s_.generation + 1);
  const double ps_norm = s_.p_sigma.norm();
  const bool hsig = ps_norm / std::sqrt(1.0 - std::pow(1.0 - c_sigma_, 2.0 * gen)) <
                    (1.4 + 2.0 / (static_cast<double>(n) + 1.0)) * chi_n_;
  s_.p_c = (1.0 - c_c_) * s_.p_c;
  if (hsig) s_.p_c += std::sqrt(c_c_ * (2.0 - c_c_) * s_.mu_eff) * y_w;

  Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < s_.mu; ++k) {
    const Eigen::VectorXd y = (last_u_[order[k]] - old_mean) / s_.sigma;
    rank_mu += s_.weights[static_cast<Eigen::Index>(k)] * y * y.transpose();
  }
  const double dh = hsig ? 0.0 : c_c_ * (2.0 - c_c_);
  s_.C = (1.0 - c1_ - c_mu_) * s_.C + c1_ * (s_.p_c * s_.p_c.transpose() + dh * s_.C) +
         c_mu_ * rank_mu;
  s_.sigma *= std::exp((c_sigma_ / d_sigma_) * (ps_norm / chi_n_ - 1.0));
  s_.mean = new_mean;
  ++s_.generation;
  last_u_.clear();
  decompose();
}

CmaResult cma_es_minimize(const BatchObjective& f, const std::vector<Bound>& bounds,
                          const CmaOptions& opt) {
  CmaEs es(bounds, opt);
  if (opt.max_evals < opt.popsize) {
    throw std::invalid_argument("max_evals must allow at least one generation");
  }
  CmaResult r;
  r.best_value = std::numeric_limits<double>::infinity();
  r.stop_reason = "max_evals";
  while (r.evals + opt.popsize <= opt.max_evals) {
    const auto xs = es.ask();
    const auto vals = f(xs);
    if (vals.size() != xs.size()) throw std::runtime_error("objective returned wrong count");
    r.evals += xs.size();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (std::isfinite(vals[k]) && vals[k] < r.best_value) {
        r.best_value = vals[k];
        r.best_x = xs[k];
      }
    }
    es.tell(vals);
    r.history.push_back({es.state().generation, r.evals, r.best_value, es.state().sigma});
    if (es.state().sigma < opt.min_sigma) {
      r.stop_reason = "sigma";
      break;
    }
  }
  return r;
}

CmaResult cma_es_minimize(const std::function<double(std::span<const double>)>& f,
                          const std::vector<Bound>& bounds, const CmaOptions& opt) {
  return cma_es_minimize(
      [&f](const std::vector<Point>& xs) {
        std::vector<double> v(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) v[i] = f(xs[i]);
        return v;
      },
      bounds, opt);
}

RetrievalResult retrieve(const ForwardModel& fm, const Signal& observed, const CmaOptions& opt,
                         std::optional<std::span<const double>> truth) {
  const auto obj = retrieval_objective(fm, observed);
  const auto cma = cma_es_minimize(obj, fm.bounds, opt);
  RetrievalResult r;
  r.params = cma.best_x;
  r.objective = cma.best_value;
  r.evals = cma.evals;
  if (truth) {
    check_point(*truth, fm.dim());
    for (std::size_t i = 0; i < fm.dim(); ++i) {
      r.rel_errors.push_back(std::abs(r.params[i] - (*truth)[i]) / fm.bounds[i].range());
    }
  }
  return r;
}

// ---- band likelihood ----

bool band_likelihood(std::span<const double> candidate, std::span<const double> center,
                     const Band& band) {
  if (candidate.size() != center.size()) {
    throw std::invalid_argument("band_likelihood: candidate has " +
                                std::to_string(candidate.size()) + " elements, center has " +
                                std::to_string(center.size()));
  }
  if (!(band.width > 0.0)) throw std::invalid_argument("band width must be > 0");
  for (std::size_t i = 0; i < center.size(); ++i) {
    const double tol = band.relative ? band.width * std::abs(center[i]) : band.width;
    if (!(std::abs(candidate[i] - center[i]) <= tol)) return false;
  }
  return true;
}

double band_log_likelihood(std::span<const double> candidate, std::span<const double> center,
                           const Band& band) {
  return band_likelihood(candidate, center, band) ? 0.0 : kNegInf;
}

// ---- ensemble MCMC ----

double draw_stretch(double a, Rng& rng) {
  const double t = (a - 1.0) * uniform01(rng) + 1.0;
  return t * t / a;
}

Point stretch_proposal(std::span<const double> x, std::span<const double> y, double z) {
  Point p(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) p[i] = y[i] + z * (x[i] - y[i]);
  return p;
}

namespace {

// Fills walkers with points of finite log-likelihood, drawn by `draw`.
// Gives up when `budget` consecutive draws fail.
bool fill_walkers(const BatchLogLikelihood& log_l, const std::function<Point()>& draw,
                  std::size_t budget, std::size_t want, std::vector<Point>& pos,
                  std::vector<double>& ll, std::size_t& evals) {
  constexpr std::size_t kChunk = 256;
  std::size_t misses = 0;
  while (pos.size() < want) {
    std::vector<Point> cand(kChunk);
    for (auto& c : cand) c = draw();
    const auto v = log_l(cand);
    evals += cand.size();
    for (std::size_t i = 0; i < cand.size() && pos.size() < want; ++i) {
      if (v[i] > kNegInf && !std::isnan(v[i])) {
        pos.push_back(std::move(cand[i]));
        ll.push_back(v[i]);
        misses = 0;
      } else if (++misses >= budget) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

McmcResult ensemble_mcmc(const BatchLogLikelihood& log_l, const std::vector<Bound>& bounds,
                         const McmcOptions& opt) {
  check_bounds_finite(bounds);
  const std::size_t dim = bounds.size();
  const std::size_t nw = opt.n_walkers;
  if (nw % 2 != 0 || nw < 2 * dim) {
    throw std::invalid_argument("n_walkers must be even and >= 2*dim (got " + std::to_string(nw) + ")");
  }
  if (!(opt.a_stretch > 1.0)) throw std::invalid_argument("a_stretch must be > 1");
  if (opt.n_samples == 0) throw std::invalid_argument("n_samples must be > 0");

  Rng rng(opt.seed);
  McmcResult r;
  std::vector<Point> pos;
  std::vector<double> ll;
  const auto prior_draw = [&]() {
    Point p(dim);
    for (std::size_t i = 0; i < dim; ++i) p[i] = uniform(rng, bounds[i].lo, bounds[i].hi);
    return p;
  };
  if (!fill_walkers(log_l, prior_draw, opt.init_budget, nw, pos, ll, r.evaluations)) {
    std::vector<Point> seeds = opt.fallback;
    if (seeds.empty() && opt.make_fallback) seeds = opt.make_fallback();
    if (seeds.empty()) {
      throw std::runtime_error("ensemble_mcmc: no valid initial walker found after " +
                               std::to_string(opt.init_budget) + " prior draws");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    std::size_t k = 0;
    const auto jitter_draw = [&]() {
      const auto& s = seeds[k++ % seeds.size()];
      Point p(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        const auto& b = bounds[i];
        const double u = (s[i] - b.lo) / b.range() + opt.fallback_jitter * normal(rng);
        p[i] = b.lo + reflect_unit(u) * b.range();
      }
      return p;
    };
    if (!fill_walkers(log_l, jitter_draw, opt.init_budget, nw, pos, ll, r.evaluations)) {
      throw std::runtime_error("ensemble_mcmc: no valid initial walker near the fallback points");
    }
  }

  const std::size_t half = nw / 2;
  const std::size_t kept_steps = (opt.n_samples + nw - 1) / nw;
  r.n_steps = opt.burn_in + kept_steps;
  if (opt.keep_samples) r.samples.reserve(opt.n_samples);
  std::size_t accepted = 0, proposed = 0;
  std::vector<Point> props(half);
  std::vector<double> zs(half), log_u(half);
  std::vector<std::size_t> eval_idx;
  std::vector<Point> eval_pts;

  for (std::size_t step = 0; step < r.n_steps; ++step) {
    for (std::size_t h = 0; h < 2; ++h) {
      const std::size_t self = h * half;
      const std::size_t other = (1 - h) * half;
      eval_idx.clear();
      eval_pts.clear();
      for (std::size_t k = 0; k < half; ++k) {
        const std::size_t partner = other + uniform_index(rng, half);
        zs[k] = draw_stretch(opt.a_stretch, rng);
        log_u[k] = std::log(uniform01(rng));
        props[k] = stretch_proposal(pos[self + k], pos[partner], zs[k]);
        if (inside(props[k], bounds)) {
          eval_idx.push_back(k);
          eval_pts.push_back(props[k]);
        }
      }
      std::vector<double> vals;
      if (!eval_pts.empty()) vals = log_l(eval_pts);
      r.evaluations += eval_pts.size();
      std::vector<double> new_ll(half, kNegInf);
      for (std::size_t e = 0; e < eval_idx.size(); ++e) {
        new_ll[eval_idx[e]] = std::isnan(vals[e]) ? kNegInf : vals[e];
      }
      for (std::size_t k = 0; k < half; ++k) {
        ++proposed;
        if (new_ll[k] == kNegInf) continue;
        const double q = static_cast<double>(dim - 1) * std::log(zs[k]) + new_ll[k] - ll[self + k];
        if (log_u[k] < q) {
          pos[self + k] = std::move(props[k]);
          ll[self + k] = new_ll[k];
          ++accepted;
        }
      }
    }
    if (step >= opt.burn_in) {
      if (opt.on_step) opt.on_step(pos);
      for (std::size_t w = 0; opt.keep_samples && w < nw && r.samples.size() < opt.n_samples; ++w) {
        r.samples.push_back(pos[w]);
      }
    }
  }
  r.acceptance = proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
  return r;
}

McmcResult ensemble_mcmc(const std::function<double(std::span<const double>)>& log_l,
                         const std::vector<Bound>& bounds, const McmcOptions& opt) {
  return ensemble_mcmc(
      [&log_l](const std::vector<Point>& xs) {
        std::vector<double> v(xs.size());
        for (std::size_t i = 0; i < xs.size(); ++i) v[i] = log_l(xs[i]);
        return v;
      },
      bounds, opt);
}

std::size_t bin_index(double v, const Bound& b, std::size_t n) {
  const double t = (v - b.lo) / b.range();
  if (!(t > 0.0)) return 0;
  return std::min(n - 1, static_cast<std::size_t>(t * static_cast<double>(n)));
}

PosteriorResult posterior_sample(const ForwardModel& fm, const Signal& center,
                                 const PosteriorOptions& opt) {
  if (center.size() != fm.output_size()) {
    throw std::invalid_argument("center signal has " + std::to_string(center.size()) +
                                " elements, forward model produces " +
                                std::to_string(fm.output_size()));
  }
  if (opt.bins == 0) throw std::invalid_argument("bins must be > 0");
  const Band band = opt.band;
  const BatchLogLikelihood log_l = [&fm, &center, band](const std::vector<Point>& ps) {
    const auto sig = fm(ps);
    std::vector<double> v(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i) v[i] = band_log_likelihood(sig[i], center, band);
    return v;
  };
  McmcOptions mo = opt.mcmc;
  if (mo.fallback.empty() && !mo.make_fallback) {
    mo.make_fallback = [&fm, &center, &opt]() {
      std::vector<Point> seeds;
      for (std::uint64_t k = 0; k < 4; ++k) {
        CmaOptions c = opt.fallback_cma;
        c.seed = opt.mcmc.seed * 4 + k;
        seeds.push_back(retrieve(fm, center, c).params);
      }
      return seeds;
    };
  }

  PosteriorResult r;
  r.chain = ensemble_mcmc(log_l, fm.bounds, mo);
  const std::size_t dim = fm.dim();
  const std::size_t nb = opt.bins;
  const auto& s = r.chain.samples;
  r.histograms.assign(dim, std::vector<std::size_t>(nb, 0));
  std::vector<std::vector<std::size_t>> idx(s.size(), std::vector<std::size_t>(dim));
  for (std::size_t k = 0; k < s.size(); ++k) {
    for (std::size_t i = 0; i < dim; ++i) {
      idx[k][i] = bin_index(s[k][i], fm.bounds[i], nb);
      ++r.histograms[i][idx[k][i]];
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = i + 1; j < dim; ++j) {
      std::vector<std::size_t> grid(nb * nb, 0);
      for (const auto& b : idx) ++grid[b[i] * nb + b[j]];
      for (std::size_t a = 0; a < nb; ++a) {
        for (std::size_t b = 0; b < nb; ++b) r.pairs.push_back({i, j, a, b, grid[a * nb + b]});
      }
    }
  }
  r.mean.assign(dim, 0.0);
  r.stddev.assign(dim, 0.0);
  for (const auto& p : s) {
    for (std::size_t i = 0; i < dim; ++i) r.mean[i] += p[i];
  }
  for (auto& m : r.mean) m /= static_cast<double>(s.size());
  for (const auto& p : s) {
    for (std::size_t i = 0; i < dim; ++i) r.stddev[i] += (p[i] - r.mean[i]) * (p[i] - r.mean[i]);
  }
  for (auto& v : r.stddev) v = std::sqrt(v / static_cast<double>(s.size()));
  return r;
}

namespace {

std::string param_name(const std::vector<std::string>& names, std::size_t i) {
  return i < names.size() ? names[i] : "p" + std::to_string(i);
}

double bin_center(const Bound& b, std::size_t k, std::size_t n) {
  return b.lo + (static_cast<double>(k) + 0.5) * b.range() / static_cast<double>(n);
}

}  // namespace

void write_histograms_csv(std::ostream& out, const PosteriorResult& r,
                          const std::vector<Bound>& bounds,
                          const std::vector<std::string>& names) {
  using manifest::format_double;
  out << "param,bin,lo,hi,count\n";
  for (std::size_t i = 0; i < r.histograms.size(); ++i) {
    const std::size_t n = r.histograms[i].size();
    const double w = bounds[i].range() / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      out << param_name(names, i) << ',' << k << ','
          << format_double(bounds[i].lo + static_cast<double>(k) * w) << ','
          << format_double(bounds[i].lo + static_cast<double>(k + 1) * w) << ','
          << r.histograms[i][k] << '\n';
    }
  }
}

void write_pairs_csv(std::ostream& out, const PosteriorResult& r, const std::vector<Bound>& bounds,
                     const std::vector<std::string>& names) {
  using manifest::format_double;
  const std::size_t n = r.histograms.empty() ? 0 : r.histograms[0].size();
  out << "param_i,param_j,value_i,value_j,count\n";
  for (const auto& c : r.pairs) {
    out << param_name(names, c.i) << ',' << param_name(names, c.j) << ','
        << format_double(bin_center(bounds[c.i], c.bin_i, n)) << ','
        << format_double(bin_center(bounds[c.j], c.bin_j, n)) << ',' << c.count << '\n';
  }
}

void write_chain_csv(std::ostream& out, const McmcResult& r, const std::vector<std::string>& names) {
  const std::size_t dim = r.samples.empty() ? names.size() : r.samples[0].size();
  out << "sample";
  for (std::size_t i = 0; i < dim; ++i) out << ',' << param_name(names, i);
  out << '\n';
  for (std::size_t k = 0; k < r.samples.size(); ++k) {
    out << k;
    for (double v : r.samples[k]) out << ',' << manifest::format_double(v);
    out << '\n';
  }
}

}  // namespace dense
