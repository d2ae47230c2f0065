#include <fstream>
#include <stdexcept>

#include "dense/manifest.hpp"
#include "dense/model.hpp"
#include "dense/serialize.hpp"

namespace dense {
namespace {

constexpr const char* kModelMagic = "dense-model 1";
constexpr const char* kManifestEnd = "end";

std::uint64_t flag(bool b) { return b ? 1u : 0u; }

}  // namespace

Tensor Emulator::predict(const Tensor& params, const Architecture& a) const {
  NoGradGuard guard;
  return denormalize_outputs(norm, forward(arch, a, normalize_inputs(norm, params)));
}

Emulator Emulator::clone() const {
  Emulator e = *this;
  e.arch = arch.clone();
  return e;
}

void write_model(std::ostream& out, const Emulator& model) {
  const auto& sa = model.arch;
  const auto& c = sa.config;
  out << kModelMagic << '\n';
  manifest::Writer w(out);
  w.line("sim").put(model.sim_name.empty() ? std::string("-") : model.sim_name);
  w.line("seed").put(model.seed);
  w.line("input_dim").put(sa.input_dim);
  w.line("output_count").put(sa.outputs.size());
  for (std::size_t i = 0; i < sa.outputs.size(); ++i) {
    w.line("output." + std::to_string(i)).put(sa.outputs[i].channels).put_all(sa.outputs[i].size);
  }
  w.line("channels").put(c.channels);
  w.line("n_nodes").put(c.n_nodes);
  w.line("stem_hidden").put(c.stem_hidden);
  w.line("start_size").put(c.start_size);
  w.line("kernel_menu").put_all(c.kernel_menu);
  w.line("include_zero").put(flag(c.include_zero));
  w.line("include_mod_transposed").put(flag(c.include_mod_transposed));
  w.line("mod_transposed_kernel").put(c.mod_transposed_kernel);
  w.line("size_cap_2d").put(c.size_cap_2d);
  w.line("scalar_trunk_size").put(c.scalar_trunk_size);
  w.line("init_seed").put(c.init_seed);
  w.line("group_count").put(sa.groups.size());
  for (std::size_t i = 0; i < sa.groups.size(); ++i) {
    const std::string key = "group." + std::to_string(i);
    w.line(key + ".ops");
    for (const auto& op : sa.groups[i].ops) w.put(op.name());
    w.line(key + ".logits").put_all(sa.groups[i].logits);
  }
  w.line("in_bounds");
  for (const auto& b : model.norm.input_bounds) w.put(b.lo).put(b.hi);
  w.line("out_mean").put_all(model.norm.out_mean);
  w.line("out_std").put_all(model.norm.out_std);
  const auto params = sa.parameters();
  w.line("tensor_count").put(params.size());
  w.line(kManifestEnd);
  w.end();
  for (const auto& t : params) write_tensor(out, t);
}

Emulator read_model(std::istream& in) {
  manifest::Reader r(in, kManifestEnd);
  if (r.first_line() != kModelMagic) throw std::runtime_error("not a model file");
  Emulator model;
  model.sim_name = r.str("sim");
  if (model.sim_name == "-") model.sim_name.clear();
  model.seed = r.uint("seed");

  std::vector<OutputSpec> outputs;
  const std::size_t n_out = r.uint("output_count");
  for (std::size_t i = 0; i < n_out; ++i) {
    const auto v = r.uints("output." + std::to_string(i));
    if (v.empty()) throw std::runtime_error("model output entry is empty");
    OutputSpec o;
    o.channels = v.front();
    o.size.assign(v.begin() + 1, v.end());
    outputs.push_back(o);
  }
  SuperArchConfig c;
  c.channels = r.uint("channels");
  c.n_nodes = r.uint("n_nodes");
  c.stem_hidden = r.uint("stem_hidden");
  c.start_size = r.uint("start_size");
  c.kernel_menu.clear();
  for (auto k : r.uints("kernel_menu")) c.kernel_menu.push_back(k);
  c.include_zero = r.uint("include_zero") != 0;
  c.include_mod_transposed = r.uint("include_mod_transposed") != 0;
  c.mod_transposed_kernel = r.uint("mod_transposed_kernel");
  c.size_cap_2d = r.uint("size_cap_2d");
  c.scalar_trunk_size = r.uint("scalar_trunk_size");
  c.init_seed = r.uint("init_seed");
  model.arch = default_superarch(r.uint("input_dim"), std::move(outputs), c);

  auto& sa = model.arch;
  if (r.uint("group_count") != sa.groups.size()) throw std::runtime_error("model group count mismatch");
  for (std::size_t i = 0; i < sa.groups.size(); ++i) {
    const std::string key = "group." + std::to_string(i);
    const auto& names = r.tokens(key + ".ops");
    auto& g = sa.groups[i];
    if (names.size() != g.ops.size()) throw std::runtime_error("model op menu mismatch in " + key);
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (names[j] != g.ops[j].name()) throw std::runtime_error("model op menu mismatch in " + key);
    }
    g.logits = r.doubles(key + ".logits");
    if (g.logits.size() != g.ops.size()) throw std::runtime_error("model logits mismatch in " + key);
  }
  const auto bounds = r.doubles("in_bounds");
  if (bounds.size() != 2 * sa.input_dim) throw std::runtime_error("model input bounds malformed");
  for (std::size_t i = 0; i < bounds.size(); i += 2) {
    model.norm.input_bounds.push_back({bounds[i], bounds[i + 1]});
  }
  model.norm.out_mean = r.doubles("out_mean");
  model.norm.out_std = r.doubles("out_std");

  auto params = sa.parameters();
  if (r.uint("tensor_count") != params.size()) throw std::runtime_error("model tensor count mismatch");
  for (auto& p : params) {
    Tensor t = read_tensor(in);
    if (t.shape() != p.shape()) {
      throw std::runtime_error("model tensor shape " + shape_str(t.shape()) + " does not match " +
                               shape_str(p.shape()));
    }
    std::copy(t.data().begin(), t.data().end(), p.mutable_data().begin());
  }
  return model;
}

void save_model(const std::filesystem::path& path, const Emulator& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_model(out, model);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

Emulator load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model '" + path.string() + "'");
  return read_model(in);
}

}  // namespace dense
