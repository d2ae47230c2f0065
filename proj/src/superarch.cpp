#include "dense/superarch.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dense {
namespace {

LayerParams make_layer(Shape kernel_shape, std::size_t fan_in, double gain, Rng& rng,
                       bool with_fill = false) {
  const double bound = std::sqrt(gain / static_cast<double>(fan_in));
  std::vector<float> w(shape_numel(kernel_shape));
  for (auto& v : w) v = static_cast<float>(uniform(rng, -bound, bound));
  const std::size_t out = kernel_shape.front();
  LayerParams p;
  p.kernel = Tensor(std::move(kernel_shape), std::move(w), true);
  p.bias = Tensor::zeros({out}, true);
  if (with_fill) p.fill_constant = Tensor::zeros({1}, true);
  return p;
}

Shape conv_kernel_shape(std::size_t out, std::size_t in, std::size_t k, std::size_t d) {
  Shape s{out, in};
  for (std::size_t a = 0; a < d; ++a) s.push_back(k);
  return s;
}

std::size_t pow_size(std::size_t base, std::size_t d) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < d; ++i) r *= base;
  return r;
}

// He-uniform gain for layers feeding a ReLU, LeCun-uniform otherwise.
constexpr double kReluGain = 6.0;
constexpr double kLinearGain = 3.0;

}  // namespace

std::string CandidateOp::name() const {
  switch (kind) {
    case OpKind::kZero:
      return "zero";
    case OpKind::kConv:
      return "conv" + std::to_string(kernel_size);
    case OpKind::kModTransposedConv:
      return "mtconv" + std::to_string(kernel_size);
  }
  return "unknown";
}

std::size_t SuperArchitecture::output_channels() const {
  std::size_t c = 0;
  for (const auto& o : outputs) c += o.channels;
  return c;
}

Shape SuperArchitecture::output_shape() const {
  Shape s{output_channels()};
  const auto& size = outputs.front().size;
  s.insert(s.end(), size.begin(), size.end());
  return s;
}

std::vector<Tensor> SuperArchitecture::parameters() const {
  std::vector<Tensor> out;
  auto append = [&out](const LayerParams& p) {
    for (auto& t : p.tensors()) out.push_back(t);
  };
  append(stem_hidden);
  append(stem_out);
  for (const auto& g : groups) {
    for (const auto& op : g.ops) {
      if (op.kind != OpKind::kZero) append(op.params);
    }
  }
  append(head);
  return out;
}

std::size_t SuperArchitecture::architecture_count() const {
  std::size_t n = 1;
  for (const auto& g : groups) n *= g.ops.size();
  return n;
}

Architecture SuperArchitecture::mode_architecture() const {
  Architecture a;
  for (const auto& g : groups) {
    a.selection.push_back(static_cast<std::size_t>(
        std::max_element(g.logits.begin(), g.logits.end()) - g.logits.begin()));
  }
  return a;
}

void SuperArchitecture::validate(const Architecture& a) const {
  if (a.selection.size() != groups.size()) {
    throw std::invalid_argument("architecture has " + std::to_string(a.selection.size()) +
                                " selections for " + std::to_string(groups.size()) + " groups");
  }
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (a.selection[i] >= groups[i].ops.size()) {
      throw std::invalid_argument("architecture selection out of range in group " +
                                  std::to_string(i));
    }
  }
}

ParameterSnapshot SuperArchitecture::snapshot() const {
  ParameterSnapshot s;
  for (const auto& t : parameters()) s.weights.emplace_back(t.data().begin(), t.data().end());
  for (const auto& g : groups) s.logits.push_back(g.logits);
  return s;
}

void SuperArchitecture::restore(const ParameterSnapshot& s) {
  auto params = parameters();
  if (s.weights.size() != params.size() || s.logits.size() != groups.size()) {
    throw std::invalid_argument("snapshot does not match this super-architecture");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].mutable_data();
    if (dst.size() != s.weights[i].size()) throw std::invalid_argument("snapshot tensor size mismatch");
    std::copy(s.weights[i].begin(), s.weights[i].end(), dst.begin());
  }
  for (std::size_t i = 0; i < groups.size(); ++i) groups[i].logits = s.logits[i];
}

SuperArchitecture SuperArchitecture::clone() const {
  SuperArchitecture c = *this;
  auto copy_layer = [](LayerParams& p) {
    if (p.kernel.defined()) p.kernel = p.kernel.clone();
    if (p.bias.defined()) p.bias = p.bias.clone();
    if (p.fill_constant.defined()) p.fill_constant = p.fill_constant.clone();
  };
  copy_layer(c.stem_hidden);
  copy_layer(c.stem_out);
  for (auto& g : c.groups) {
    for (auto& op : g.ops) copy_layer(op.params);
  }
  copy_layer(c.head);
  return c;
}

std::vector<std::size_t> node_size_schedule(std::size_t start, std::size_t target,
                                            std::size_t n_nodes) {
  if (n_nodes < 2) throw std::invalid_argument("need at least two nodes");
  std::vector<std::size_t> sizes;
  const double ratio = static_cast<double>(target) / static_cast<double>(start);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    const double f = static_cast<double>(i) / static_cast<double>(n_nodes - 1);
    sizes.push_back(static_cast<std::size_t>(std::lround(static_cast<double>(start) * std::pow(ratio, f))));
  }
  sizes.back() = target;
  for (std::size_t i = 1; i < sizes.size(); ++i) sizes[i] = std::max(sizes[i], sizes[i - 1]);
  return sizes;
}

SuperArchitecture default_superarch(std::size_t input_dim, std::vector<OutputSpec> outputs,
                                    const SuperArchConfig& config) {
  if (input_dim == 0) throw std::invalid_argument("input_dim must be positive");
  if (outputs.empty()) throw std::invalid_argument("at least one output is required");
  const std::size_t d = outputs.front().spatial_dims();
  if (d > 2) throw std::invalid_argument("unsupported output dimensionality " + std::to_string(d));
  for (const auto& o : outputs) {
    if (o.channels == 0) throw std::invalid_argument("output channels must be positive");
    if (o.size != outputs.front().size) {
      throw std::invalid_argument("all outputs must share the same spatial size");
    }
    for (auto s : o.size) {
      if (s < config.start_size) {
        throw std::invalid_argument("output size " + std::to_string(s) +
                                    " is smaller than the start size " +
                                    std::to_string(config.start_size));
      }
    }
  }
  if (config.channels == 0 || config.stem_hidden == 0 || config.n_nodes < 2) {
    throw std::invalid_argument("invalid super-architecture config");
  }
  for (auto k : config.kernel_menu) {
    if (k % 2 == 0) throw std::invalid_argument("kernel sizes must be odd");
  }
  if (config.include_mod_transposed && config.mod_transposed_kernel % 2 == 0) {
    throw std::invalid_argument("kernel sizes must be odd");
  }

  SuperArchitecture sa;
  sa.input_dim = input_dim;
  sa.outputs = std::move(outputs);
  sa.config = config;
  Rng rng(config.init_seed);

  // Trunk geometry: scalar outputs ride on a 1-D trunk.
  const std::size_t trunk_d = d == 0 ? 1 : d;
  std::vector<std::vector<std::size_t>> axis_sizes(trunk_d);
  for (std::size_t a = 0; a < trunk_d; ++a) {
    std::size_t target = d == 0 ? config.scalar_trunk_size : sa.outputs.front().size[a];
    if (d == 2) target = std::min(target, config.size_cap_2d);
    target = std::max(target, config.start_size);
    axis_sizes[a] = node_size_schedule(config.start_size, target, config.n_nodes);
  }
  for (std::size_t i = 0; i < config.n_nodes; ++i) {
    NodeSpec n;
    n.channels = config.channels;
    for (std::size_t a = 0; a < trunk_d; ++a) n.size.push_back(axis_sizes[a][i]);
    sa.nodes.push_back(std::move(n));
  }

  const std::size_t start_plane = pow_size(config.start_size, trunk_d);
  sa.stem_hidden = make_layer({config.stem_hidden, input_dim}, input_dim, kReluGain, rng);
  sa.stem_out = make_layer({config.channels * start_plane, config.stem_hidden}, config.stem_hidden,
                           kLinearGain, rng);

  const std::size_t C = config.channels;
  for (std::size_t i = 0; i + 1 < sa.nodes.size(); ++i) {
    const bool grows = sa.nodes[i + 1].size != sa.nodes[i].size;
    Group g;
    if (config.include_zero) g.ops.push_back(CandidateOp{OpKind::kZero, 0, {}});
    for (auto k : config.kernel_menu) {
      g.ops.push_back(CandidateOp{OpKind::kConv, k,
                                  make_layer(conv_kernel_shape(C, C, k, trunk_d),
                                             C * pow_size(k, trunk_d), kLinearGain, rng)});
    }
    if (config.include_mod_transposed && grows) {
      const std::size_t k = config.mod_transposed_kernel;
      g.ops.push_back(CandidateOp{OpKind::kModTransposedConv, k,
                                  make_layer(conv_kernel_shape(C, C, k, trunk_d),
                                             C * pow_size(k, trunk_d), kLinearGain, rng, true)});
    }
    if (g.ops.empty()) throw std::invalid_argument("empty operation menu");
    g.logits.assign(g.ops.size(), 0.0);
    sa.groups.push_back(std::move(g));
  }

  const std::size_t out_c = sa.output_channels();
  if (d == 0) {
    const std::size_t flat = C * sa.nodes.back().size[0];
    sa.head = make_layer({out_c, flat}, flat, kLinearGain, rng);
  } else {
    sa.head = make_layer(conv_kernel_shape(out_c, C, 1, d), C, kLinearGain, rng);
  }
  return sa;
}

std::vector<double> op_probs(const Group& g) {
  std::vector<double> p(g.logits.size());
  if (p.empty()) return p;
  const double m = *std::max_element(g.logits.begin(), g.logits.end());
  double z = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) z += p[j] = std::exp(g.logits[j] - m);
  for (auto& v : p) v /= z;
  return p;
}

Architecture sample_architecture(const SuperArchitecture& sa, Rng& rng) {
  Architecture a;
  a.selection.reserve(sa.groups.size());
  for (const auto& g : sa.groups) {
    const auto p = op_probs(g);
    const double u = uniform01(rng);
    double acc = 0.0;
    std::size_t pick = p.size() - 1;
    for (std::size_t j = 0; j < p.size(); ++j) {
      acc += p[j];
      if (u < acc) {
        pick = j;
        break;
      }
    }
    a.selection.push_back(pick);
  }
  return a;
}

std::vector<std::vector<double>> log_likelihood_grad(const Architecture& a,
                                                     const SuperArchitecture& sa) {
  sa.validate(a);
  std::vector<std::vector<double>> grad;
  grad.reserve(sa.groups.size());
  for (std::size_t i = 0; i < sa.groups.size(); ++i) {
    auto p = op_probs(sa.groups[i]);
    for (auto& v : p) v = -v;
    p[a.selection[i]] += 1.0;
    grad.push_back(std::move(p));
  }
  return grad;
}

double log_likelihood(const Architecture& a, const SuperArchitecture& sa) {
  sa.validate(a);
  double ll = 0.0;
  for (std::size_t i = 0; i < sa.groups.size(); ++i) {
    const auto& b = sa.groups[i].logits;
    const double m = *std::max_element(b.begin(), b.end());
    double z = 0.0;
    for (double v : b) z += std::exp(v - m);
    ll += b[a.selection[i]] - m - std::log(z);
  }
  return ll;
}

Tensor forward(const SuperArchitecture& sa, const Architecture& a, const Tensor& x) {
  sa.validate(a);
  if (x.rank() != 2 || x.dim(1) != sa.input_dim) {
    throw std::invalid_argument("forward: expected input [N, " + std::to_string(sa.input_dim) +
                                "], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  Tensor h = relu(fully_connected(x, sa.stem_hidden));
  h = fully_connected(h, sa.stem_out);
  Shape node_shape{batch, sa.nodes.front().channels};
  node_shape.insert(node_shape.end(), sa.nodes.front().size.begin(), sa.nodes.front().size.end());
  Tensor node = reshape(h, node_shape);

  for (std::size_t i = 0; i < sa.groups.size(); ++i) {
    const auto& dst = sa.nodes[i + 1].size;
    const bool grows = dst != sa.nodes[i].size;
    Tensor skip = grows ? nn_upsample(node, dst) : node;
    const CandidateOp& op = sa.groups[i].ops[a.selection[i]];
    Tensor branch;
    switch (op.kind) {
      case OpKind::kZero:
        branch = zero_layer(node, skip.shape());
        break;
      case OpKind::kConv:
        branch = conv(relu(skip), op.params);
        break;
      case OpKind::kModTransposedConv:
        branch = mod_transposed_conv(relu(node), op.params, dst);
        break;
    }
    node = add(skip, branch);
  }

  if (sa.output_dims() == 0) {
    return fully_connected(reshape(node, {batch, node.size() / batch}), sa.head);
  }
  const auto& target = sa.outputs.front().size;
  if (target != sa.nodes.back().size) node = nn_upsample(node, target);
  return conv(node, sa.head);
}

std::vector<double> group_entropies(const SuperArchitecture& sa) {
  std::vector<double> h;
  for (const auto& g : sa.groups) {
    double e = 0.0;
    for (double p : op_probs(g)) {
      if (p > 0.0) e -= p * std::log(p);
    }
    h.push_back(e);
  }
  return h;
}

}  // namespace dense
