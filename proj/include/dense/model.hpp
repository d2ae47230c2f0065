#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "dense/simsuite.hpp"
#include "dense/superarch.hpp"

namespace dense {

// A trained super-architecture together with the normalization it was
// trained under, so it can map raw parameters to raw outputs.
struct Emulator {
  SuperArchitecture arch;
  Normalization norm;
  std::string sim_name;
  std::uint64_t seed = 0;

  // params: [n, input_dim] raw -> [n, channels, size...] raw.
  Tensor predict(const Tensor& params, const Architecture& a) const;
  Tensor predict(const Tensor& params) const { return predict(params, arch.mode_architecture()); }

  Emulator clone() const;
};

// Text manifest (structure, op menus, network variables, normalization)
// followed by every weight tensor as a tensor blob in parameters() order.
void save_model(const std::filesystem::path& path, const Emulator& model);
Emulator load_model(const std::filesystem::path& path);

void write_model(std::ostream& out, const Emulator& model);
Emulator read_model(std::istream& in);

}  // namespace dense
