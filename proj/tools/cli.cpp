#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dense/baselines.hpp"
#include "dense/inverse.hpp"
#include "dense/manifest.hpp"
#include "dense/training.hpp"
#include "dense/uncertainty.hpp"

namespace dense::cli {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using manifest::format_double;
using Clock = std::chrono::steady_clock;

std::string known_sims() {
  std::string s;
  for (const auto& n : simulation_names()) s += (s.empty() ? "" : ", ") + n;
  return s;
}

const SimulationSpec& sim_or_usage(const std::string& name) {
  for (const auto& n : simulation_names()) {
    if (n == name) return find_simulation(name);
  }
  throw UsageError("unknown simulation '" + name + "' (known: " + known_sims() + ")");
}

// Table output goes to --out when given, else to the command's stdout.
class TableSink {
 public:
  TableSink(const std::string& path, std::ostream& fallback) : out_(&fallback) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw std::runtime_error("cannot write " + path);
      out_ = &file_;
    }
  }
  std::ostream& get() { return *out_; }

 private:
  std::ofstream file_;
  std::ostream* out_;
};

void need(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

Normalization unit_norm(const SimulationSpec& spec) {
  Normalization n;
  n.input_bounds = spec.bounds;
  n.out_mean.assign(spec.output.channels, 0.0);
  n.out_std.assign(spec.output.channels, 1.0);
  return n;
}

struct InverseSetup {
  const SimulationSpec* spec = nullptr;
  ForwardModel simulator;
  std::optional<ForwardModel> emulator;
  const ForwardModel& chosen(const std::string& forward) const {
    if (forward == "emulator") {
      if (!emulator) throw UsageError("--forward emulator needs --model");
      return *emulator;
    }
    return simulator;
  }
};

InverseSetup inverse_setup(const RunConfig& cfg) {
  InverseSetup s;
  std::optional<Emulator> model;
  if (!cfg.model.empty()) model = load_model(cfg.model);
  std::string sim = cfg.sim;
  if (sim.empty() && model) sim = model->sim_name;
  need(!sim.empty(), "--sim is required when the model does not name its simulation");
  s.spec = &sim_or_usage(sim);
  Normalization norm = unit_norm(*s.spec);
  if (model) {
    norm = model->norm;
  } else if (!cfg.dataset.empty()) {
    norm = load_dataset(cfg.dataset).norm;
  }
  s.simulator = simulator_forward(*s.spec, norm);
  if (model) {
    if (model->norm.input_bounds != s.spec->bounds) {
      throw UsageError("model bounds do not match simulation '" + sim + "'");
    }
    s.emulator = emulator_forward(*model);
  }
  return s;
}

std::string param_label(const SimulationSpec& spec, std::size_t i) {
  return i < spec.param_names.size() ? spec.param_names[i] : "p" + std::to_string(i);
}

// ---- commands ----

int cmd_generate(const RunConfig& cfg, std::ostream& out) {
  need(!cfg.sim.empty(), "generate needs --sim");
  need(!cfg.out.empty(), "generate needs --out");
  const auto& spec = sim_or_usage(cfg.sim);
  const auto ds = generate_dataset(spec, cfg.n, cfg.seed);
  save_dataset(cfg.out, ds);
  out << "sim,n,seed,train,val,test\n"
      << ds.sim_name << ',' << ds.size() << ',' << ds.seed << ',' << ds.split.train.size() << ','
      << ds.split.val.size() << ',' << ds.split.test.size() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
  need(!cfg.dataset.empty(), "train needs --dataset");
  need(!cfg.out.empty(), "train needs --out");
  const bool dense = cfg.mode == "dense";
  TrainConfig tc = dense ? TrainConfig::dense_defaults() : TrainConfig::manual_defaults();
  tc.seed = cfg.seed;
  if (cfg.epochs) tc.n_epochs = *cfg.epochs;
  if (!cfg.train_json.empty()) {
    try {
      apply_train_config_json(tc, cfg.train_json);
    } catch (const std::invalid_argument& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }
  tc.validate();
  const Dataset ds = load_dataset(cfg.dataset);
  SuperArchConfig sc;
  sc.channels = cfg.channels;
  sc.init_seed = cfg.seed;
  const std::size_t p = ds.bounds.size();
  const auto initial = dense ? default_superarch(p, {ds.output}, sc) : manual_superarch(p, {ds.output}, sc);
  const auto result = dense ? train_dense(initial, ds, tc)
                            : train_manual(initial, initial.mode_architecture(), ds, tc);
  save_model(cfg.out, Emulator{result.model, ds.norm, ds.sim_name, cfg.seed});
  const std::string report = cfg.report.empty() ? cfg.out + ".report.csv" : cfg.report;
  {
    std::ofstream f(report);
    if (!f) throw std::runtime_error("cannot write " + report);
    write_report_csv(f, result.report);
  }
  const auto& r = result.report;
  out << "mode,epochs,best_epoch,best_val_loss,seed\n"
      << cfg.mode << ',' << r.history.size() << ','
      << (r.best_epoch ? std::to_string(*r.best_epoch) : "initial") << ','
      << format_double(r.best_val_loss) << ',' << cfg.seed << '\n';
  return kExitOk;
}

SplitKind split_kind(const std::string& s) {
  if (s == "train") return SplitKind::kTrain;
  if (s == "val") return SplitKind::kVal;
  if (s == "test") return SplitKind::kTest;
  throw UsageError("--split must be train, val or test");
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out) {
  need(!cfg.model.empty() && !cfg.dataset.empty(), "evaluate needs --model and --dataset");
  const auto kind = split_kind(cfg.split);
  const Emulator model = load_model(cfg.model);
  const Dataset ds = load_dataset(cfg.dataset);
  const auto& rows = ds.rows(kind);
  need(!rows.empty(), "split '" + cfg.split + "' is empty");
  const Tensor x = normalize_inputs(model.norm, gather_rows(ds.X, rows));
  const Tensor y = normalize_outputs(model.norm, gather_rows(ds.Y, rows));
  Rng rng(cfg.seed);
  const auto ev = evaluate(model.arch, x, y, rng, cfg.samples ? cfg.samples : 32);
  TableSink sink(cfg.out, out);
  auto& o = sink.get();
  o << "method,split,loss\n";
  o << "dense_mode," << cfg.split << ',' << format_double(ev.mode_loss) << '\n';
  o << "dense_expected," << cfg.split << ',' << format_double(ev.expected_loss) << '\n';
  if (cfg.baselines) {
    const auto pick = [&](const SplitLosses& l) {
      return kind == SplitKind::kTrain ? l.train : kind == SplitKind::kVal ? l.val : l.test;
    };
    o << "knn," << cfg.split << ',' << format_double(pick(knn_baseline(ds).losses)) << '\n';
    o << "ridge," << cfg.split << ',' << format_double(pick(ridge_baseline(ds).losses)) << '\n';
  }
  return kExitOk;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  need(!cfg.model.empty(), "predict needs --model");
  need(cfg.params.empty() != !cfg.row.has_value(), "predict needs exactly one of --params or --row");
  const Emulator model = load_model(cfg.model);
  const std::size_t p = model.norm.input_bounds.size();
  std::vector<double> params;
  std::optional<std::vector<double>> truth;
  if (cfg.row) {
    need(!cfg.dataset.empty(), "--row needs --dataset");
    const Dataset ds = load_dataset(cfg.dataset);
    if (*cfg.row >= ds.size()) throw UsageError("--row out of range");
    const std::size_t per = ds.Y.size() / ds.size();
    params.assign(ds.X.data().begin() + *cfg.row * p, ds.X.data().begin() + (*cfg.row + 1) * p);
    truth.emplace(ds.Y.data().begin() + *cfg.row * per, ds.Y.data().begin() + (*cfg.row + 1) * per);
  } else {
    params = parse_list(cfg.params);
    if (params.size() != p) {
      throw UsageError("--params needs " + std::to_string(p) + " values");
    }
    for (const auto& n : simulation_names()) {
      if (n == model.sim_name) truth = find_simulation(n).evaluate(params);
    }
  }
  check_bounds(params, model.norm.input_bounds);
  const Tensor x({1, p}, std::vector<float>(params.begin(), params.end()));
  TableSink sink(cfg.out, out);
  if (cfg.uncertainty) {
    Rng rng(cfg.seed);
    const auto pred = predict_uncertain(model, x, cfg.samples ? cfg.samples : kDefaultUncertaintySamples, rng);
    if (truth) {
      write_uncertainty_csv(sink.get(), pred, 0, std::span<const double>(*truth));
    } else {
      write_uncertainty_csv(sink.get(), pred, 0);
    }
    return kExitOk;
  }
  const Tensor y = model.predict(x);
  auto& o = sink.get();
  o << "index,value" << (truth ? ",simulator" : "") << '\n';
  for (std::size_t j = 0; j < y.size(); ++j) {
    o << j << ',' << format_double(y.data()[j]);
    if (truth) o << ',' << format_double((*truth)[j]);
    o << '\n';
  }
  return kExitOk;
}

int cmd_retrieve(const RunConfig& cfg, std::ostream& out) {
  const auto setup = inverse_setup(cfg);
  const std::string forward = cfg.forward.empty() ? (setup.emulator ? "emulator" : "simulator") : cfg.forward;
  const ForwardModel& fm = setup.chosen(forward);
  Rng rng(cfg.seed);
  TableSink sink(cfg.out, out);
  auto& o = sink.get();
  o << "trial,param,truth,retrieved,rel_error\n";
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    Point truth(fm.dim());
    for (std::size_t i = 0; i < truth.size(); ++i) truth[i] = uniform(rng, fm.bounds[i].lo, fm.bounds[i].hi);
    const auto observed = add_observation_noise(setup.simulator(truth), cfg.noise, rng);
    CmaOptions opt;
    opt.popsize = cfg.popsize;
    opt.max_evals = cfg.evals;
    opt.seed = rng();
    const auto r = retrieve(fm, observed, opt, std::span<const double>(truth));
    for (std::size_t i = 0; i < truth.size(); ++i) {
      o << t << ',' << param_label(*setup.spec, i) << ',' << format_double(truth[i]) << ','
        << format_double(r.params[i]) << ',' << format_double(r.rel_errors[i]) << '\n';
    }
  }
  return kExitOk;
}

int cmd_posterior(const RunConfig& cfg, std::ostream& out) {
  need(!cfg.out.empty(), "posterior needs --out (output directory)");
  need(!cfg.center.empty(), "posterior needs --center");
  const auto setup = inverse_setup(cfg);
  const std::string forward = cfg.forward.empty() ? (setup.emulator ? "emulator" : "simulator") : cfg.forward;
  const ForwardModel& fm = setup.chosen(forward);
  const auto center_params = parse_list(cfg.center);
  if (center_params.size() != fm.dim()) throw UsageError("--center needs " + std::to_string(fm.dim()) + " values");
  check_bounds(center_params, fm.bounds);
  const auto center = setup.simulator(center_params);

  PosteriorOptions po;
  po.band = Band{cfg.band, !cfg.absolute_band};
  po.bins = cfg.bins;
  po.mcmc.n_walkers = cfg.walkers;
  po.mcmc.n_samples = cfg.samples ? cfg.samples : 200000;
  po.mcmc.burn_in = cfg.burn_in;
  po.mcmc.seed = cfg.seed;
  po.fallback_cma.popsize = cfg.popsize;
  po.fallback_cma.max_evals = cfg.evals;
  const auto r = posterior_sample(fm, center, po);

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < fm.dim(); ++i) names.push_back(param_label(*setup.spec, i));
  const auto write = [&](const std::string& file, const auto& fn) {
    std::ofstream f(fs::path(cfg.out) / file);
    if (!f) throw std::runtime_error("cannot write " + (fs::path(cfg.out) / file).string());
    fn(f);
  };
  write("histograms.csv", [&](std::ostream& f) { write_histograms_csv(f, r, fm.bounds, names); });
  write("pairs.csv", [&](std::ostream& f) { write_pairs_csv(f, r, fm.bounds, names); });
  write("chain.csv", [&](std::ostream& f) { write_chain_csv(f, r.chain, names); });
  write("run.txt", [&](std::ostream& f) {
    f << "forward " << forward << "\nsim " << setup.spec->name << "\nseed " << cfg.seed << "\nband "
      << format_double(cfg.band) << (cfg.absolute_band ? " absolute" : " relative") << "\nwalkers "
      << cfg.walkers << "\nsamples " << r.chain.samples.size() << "\nburn_in " << cfg.burn_in
      << "\nacceptance " << format_double(r.chain.acceptance) << '\n';
  });
  out << "param,mean,std\n";
  for (std::size_t i = 0; i < fm.dim(); ++i) {
    out << names[i] << ',' << format_double(r.mean[i]) << ',' << format_double(r.stddev[i]) << '\n';
  }
  return kExitOk;
}

std::string hardware_descriptor() {
  std::ifstream f("/proc/cpuinfo");
  std::string line, cpu = "unknown cpu";
  while (std::getline(f, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto c = line.find(':');
      if (c != std::string::npos) cpu = line.substr(c + 2);
      break;
    }
  }
  std::replace(cpu.begin(), cpu.end(), ',', ';');
  return cpu + " (" + std::to_string(std::thread::hardware_concurrency()) + " hw threads)";
}

int cmd_bench(const RunConfig& cfg, std::ostream& out) {
  need(!cfg.model.empty(), "bench needs --model");
  need(cfg.batch > 0 && cfg.repeats > 0, "--batch and --repeats must be > 0");
  const Emulator model = load_model(cfg.model);
  const auto& spec = sim_or_usage(cfg.sim.empty() ? model.sim_name : cfg.sim);
  const std::size_t p = spec.bounds.size();
  Rng rng(cfg.seed);
  std::vector<float> flat(cfg.batch * p);
  std::vector<Point> points(cfg.batch, Point(p));
  for (std::size_t k = 0; k < cfg.batch; ++k) {
    for (std::size_t i = 0; i < p; ++i) {
      points[k][i] = uniform(rng, spec.bounds[i].lo, spec.bounds[i].hi);
      flat[k * p + i] = static_cast<float>(points[k][i]);
    }
  }
  const Tensor x({cfg.batch, p}, std::move(flat));
  double emu_best = 1e300;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const auto t0 = Clock::now();
    const Tensor y = model.predict(x);
    emu_best = std::min(emu_best, std::chrono::duration<double>(Clock::now() - t0).count());
  }
  // rate-limited mode adds a fixed wait per simulator call
  const std::size_t n_sim = std::min<std::size_t>(cfg.batch, 200);
  const auto delay = std::chrono::duration<double, std::micro>(cfg.sim_delay_us);
  const auto t0 = Clock::now();
  double sink = 0;
  for (std::size_t k = 0; k < n_sim; ++k) {
    sink += spec.evaluate(points[k]).front();
    if (cfg.sim_delay_us > 0) {
      const auto until = Clock::now() + std::chrono::duration_cast<Clock::duration>(delay);
      while (Clock::now() < until) {
      }
    }
  }
  const double sim_per = std::chrono::duration<double>(Clock::now() - t0).count() / static_cast<double>(n_sim);
  const double emu_per = emu_best / static_cast<double>(cfg.batch);
  out << "key,value\n"
      << "hardware," << hardware_descriptor() << '\n'
      << "sim," << spec.name << '\n'
      << "batch," << cfg.batch << '\n'
      << "emulator_batch_seconds," << format_double(emu_best) << '\n'
      << "emulator_sample_seconds," << format_double(emu_per) << '\n'
      << "simulator_sample_seconds," << format_double(sim_per) << '\n'
      << "simulator_delay_us," << format_double(cfg.sim_delay_us) << '\n'
      << "speedup," << format_double(sim_per / emu_per) << '\n';
  if (!std::isfinite(sink)) out << "note,simulator returned non-finite output\n";
  return kExitOk;
}

}  // namespace

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw UsageError("not a number: '" + tok + "'");
    }
  }
  if (v.empty()) throw UsageError("empty value list");
  return v;
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config " + path + " must hold a JSON object");
  nlohmann::json rest = nlohmann::json::object();
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const auto& k = it.key();
      const auto& v = it.value();
      if (k == "sim") cfg.sim = v.get<std::string>();
      else if (k == "n") cfg.n = v.get<std::size_t>();
      else if (k == "seed") cfg.seed = v.get<std::uint64_t>();
      else if (k == "dataset") cfg.dataset = v.get<std::string>();
      else if (k == "model") cfg.model = v.get<std::string>();
      else if (k == "mode") cfg.mode = v.get<std::string>();
      else if (k == "epochs") cfg.epochs = v.get<std::size_t>();
      else if (k == "channels") cfg.channels = v.get<std::size_t>();
      else if (k == "out") cfg.out = v.get<std::string>();
      else if (k == "report") cfg.report = v.get<std::string>();
      else if (k == "split") cfg.split = v.get<std::string>();
      else if (k == "samples") cfg.samples = v.get<std::size_t>();
      else if (k == "uncertainty") cfg.uncertainty = v.get<bool>();
      else if (k == "baselines") cfg.baselines = v.get<bool>();
      else if (k == "params") cfg.params = v.get<std::string>();
      else if (k == "row") cfg.row = v.get<std::size_t>();
      else if (k == "forward") cfg.forward = v.get<std::string>();
      else if (k == "trials") cfg.trials = v.get<std::size_t>();
      else if (k == "noise") cfg.noise = v.get<double>();
      else if (k == "popsize") cfg.popsize = v.get<std::size_t>();
      else if (k == "evals") cfg.evals = v.get<std::size_t>();
      else if (k == "band") cfg.band = v.get<double>();
      else if (k == "absolute_band") cfg.absolute_band = v.get<bool>();
      else if (k == "walkers") cfg.walkers = v.get<std::size_t>();
      else if (k == "burn_in") cfg.burn_in = v.get<std::size_t>();
      else if (k == "bins") cfg.bins = v.get<std::size_t>();
      else if (k == "center") cfg.center = v.get<std::string>();
      else if (k == "batch") cfg.batch = v.get<std::size_t>();
      else if (k == "repeats") cfg.repeats = v.get<std::size_t>();
      else if (k == "sim_delay_us") cfg.sim_delay_us = v.get<double>();
      else rest[k] = v;
    }
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
  cfg.train_json = rest.empty() ? "" : rest.dump();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"dense: emulator architecture search, training and inverse problems"};
  app.require_subcommand(1);
  RunConfig cfg;

  const auto common = [&](CLI::App* s) {
    s->add_option("--seed", cfg.seed, "random seed");
    s->add_option("--out", cfg.out, "output path");
    s->add_option("--config", cfg.config, "JSON file; its keys override flags")->check(CLI::ExistingFile);
  };
  const auto inverse_flags = [&](CLI::App* s) {
    s->add_option("--sim", cfg.sim, "simulation name");
    s->add_option("--model", cfg.model, "emulator file")->check(CLI::ExistingFile);
    s->add_option("--dataset", cfg.dataset, "dataset for output scaling")->check(CLI::ExistingFile);
    s->add_option("--forward", cfg.forward, "simulator or emulator")
        ->check(CLI::IsMember({"simulator", "emulator"}));
    s->add_option("--popsize", cfg.popsize, "CMA-ES population");
    s->add_option("--evals", cfg.evals, "CMA-ES evaluation budget");
  };

  auto* gen = app.add_subcommand("generate", "sample a simulation into a dataset file");
  common(gen);
  gen->add_option("--sim", cfg.sim, "simulation name (" + known_sims() + ")");
  gen->add_option("--n", cfg.n, "number of samples");

  auto* train = app.add_subcommand("train", "train an emulator");
  common(train);
  train->add_option("--dataset", cfg.dataset, "dataset file")->check(CLI::ExistingFile);
  train->add_option("--mode", cfg.mode, "dense or manual")->check(CLI::IsMember({"dense", "manual"}));
  train->add_option("--epochs", cfg.epochs, "number of epochs");
  train->add_option("--channels", cfg.channels, "channels per node");
  train->add_option("--report", cfg.report, "per-epoch loss table (default <out>.report.csv)");

  auto* eval = app.add_subcommand("evaluate", "losses of a trained emulator on a split");
  common(eval);
  eval->add_option("--model", cfg.model, "emulator file")->check(CLI::ExistingFile);
  eval->add_option("--dataset", cfg.dataset, "dataset file")->check(CLI::ExistingFile);
  eval->add_option("--split", cfg.split, "train, val or test");
  eval->add_option("--samples", cfg.samples, "sampled architectures (default 32)");
  eval->add_flag("--baselines", cfg.baselines, "also score k-NN and ridge");

  auto* pred = app.add_subcommand("predict", "emulator output for one parameter vector");
  common(pred);
  pred->add_option("--model", cfg.model, "emulator file")->check(CLI::ExistingFile);
  pred->add_option("--params", cfg.params, "comma separated raw parameters");
  pred->add_option("--dataset", cfg.dataset, "dataset file for --row")->check(CLI::ExistingFile);
  pred->add_option("--row", cfg.row, "dataset row to predict");
  pred->add_flag("--uncertainty", cfg.uncertainty, "mean and std over sampled architectures");
  pred->add_option("--samples", cfg.samples, "sampled architectures (default 64)");

  auto* ret = app.add_subcommand("retrieve", "CMA-ES parameter retrieval on noisy synthetic trials");
  common(ret);
  inverse_flags(ret);
  ret->add_option("--trials", cfg.trials, "number of trials");
  ret->add_option("--noise", cfg.noise, "relative observation noise");

  auto* post = app.add_subcommand("posterior", "band-likelihood ensemble MCMC");
  common(post);
  inverse_flags(post);
  post->add_option("--center", cfg.center, "parameters of the central signal");
  post->add_option("--band", cfg.band, "band width");
  post->add_flag("--absolute", cfg.absolute_band, "absolute instead of relative band");
  post->add_option("--walkers", cfg.walkers, "ensemble size");
  post->add_option("--samples", cfg.samples, "kept samples (default 200000)");
  post->add_option("--burn-in", cfg.burn_in, "discarded ensemble steps");
  post->add_option("--bins", cfg.bins, "histogram bins per parameter");

  auto* bench = app.add_subcommand("bench", "emulator vs simulator throughput");
  common(bench);
  bench->add_option("--model", cfg.model, "emulator file")->check(CLI::ExistingFile);
  bench->add_option("--sim", cfg.sim, "simulation name (default: the model's)");
  bench->add_option("--batch", cfg.batch, "emulator batch size");
  bench->add_option("--repeats", cfg.repeats, "timed emulator repeats");
  bench->add_option("--sim-delay-us", cfg.sim_delay_us, "extra wait per simulator call");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }
  cfg.command = app.get_subcommands().front()->get_name();

  try {
    if (!cfg.config.empty()) apply_config_file(cfg, cfg.config);
    if (cfg.command != "train" && !cfg.train_json.empty()) {
      throw UsageError("config keys only valid for train: " + cfg.train_json);
    }
    if (cfg.mode != "dense" && cfg.mode != "manual") throw UsageError("mode must be dense or manual");
    if (cfg.command == "generate") return cmd_generate(cfg, out);
    if (cfg.command == "train") return cmd_train(cfg, out);
    if (cfg.command == "evaluate") return cmd_evaluate(cfg, out);
    if (cfg.command == "predict") return cmd_predict(cfg, out);
    if (cfg.command == "retrieve") return cmd_retrieve(cfg, out);
    if (cfg.command == "posterior") return cmd_posterior(cfg, out);
    if (cfg.command == "bench") return cmd_bench(cfg, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace dense::cli
