#pragma once

// Command-line front end. run() is the whole program minus process exit so
// tests can drive it in-process.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dense::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct RunConfig {
  std::string command;
  std::string sim;
  std::size_t n = 14000;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string model;
  std::string mode = "dense";
  std::optional<std::size_t> epochs;
  std::size_t channels = 64;
  std::string out;
  std::string report;
  std::string config;
  std::string train_json;  // train keys collected from the config file

  // evaluate / predict
  std::string split = "test";
  std::size_t samples = 0;  // 0: per-command default
  bool uncertainty = false;
  bool baselines = false;
  std::string params;
  std::optional<std::size_t> row;

  // inverse problems
  std::string forward;  // simulator | emulator
  std::size_t trials = 50;
  double noise = 0.01;
  std::size_t popsize = 32;
  std::size_t evals = 1200;
  double band = 0.035;
  bool absolute_band = false;
  std::size_t walkers = 256;
  std::size_t burn_in = 100;
  std::size_t bins = 20;
  std::string center;

  // bench
  std::size_t batch = 1000;
  std::size_t repeats = 5;
  double sim_delay_us = 0.0;
};

// Applies a JSON config file over cfg. Command keys are taken as-is; any
// other key is kept for the training config. Unknown keys fail in train.
void apply_config_file(RunConfig& cfg, const std::string& path);

std::vector<double> parse_list(const std::string& text);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dense::cli
