#pragma once

// The searchable emulator network: a fully connected stem followed by a chain
// of nodes. Between consecutive nodes an always-on skip path (identity, or
// nearest-neighbour upsampling when the size grows) is added to exactly one
// selected candidate operation from that pair's group. Selection
// probabilities are the softmax of per-group network variables.

#include <cstdint>
#include <string>
#include <vector>

#include "dense/rng.hpp"
#include "dense/tensor.hpp"

namespace dense {

// One emulator output: `channels` signals of extent `size` per spatial axis.
// An empty size means `channels` scalars (d = 0).
struct OutputSpec {
  std::size_t channels = 1;
  std::vector<std::size_t> size;

  std::size_t spatial_dims() const { return size.size(); }
  bool operator==(const OutputSpec&) const = default;
};

enum class OpKind { kZero, kConv, kModTransposedConv };

struct CandidateOp {
  OpKind kind = OpKind::kZero;
  std::size_t kernel_size = 0;
  LayerParams params;  // empty for the zero layer

  std::string name() const;
};

struct NodeSpec {
  std::size_t channels = 0;
  std::vector<std::size_t> size;
};

struct Group {
  std::vector<CandidateOp> ops;
  std::vector<double> logits;  // network variables b, one per op
};

struct SuperArchConfig {
  std::size_t channels = 64;
  std::size_t n_nodes = 6;
  std::size_t stem_hidden = 128;
  std::size_t start_size = 4;
  std::vector<std::size_t> kernel_menu{1, 3, 5, 7};
  bool include_zero = true;
  bool include_mod_transposed = true;
  std::size_t mod_transposed_kernel = 3;
  std::size_t size_cap_2d = 64;
  // Trunk length used when every output is scalar.
  std::size_t scalar_trunk_size = 16;
  std::uint64_t init_seed = 0;
};

struct Architecture {
  std::vector<std::size_t> selection;  // one op index per group

  bool operator==(const Architecture&) const = default;
};

// Deep copy of every weight and network variable.
struct ParameterSnapshot {
  std::vector<std::vector<float>> weights;
  std::vector<std::vector<double>> logits;
};

class SuperArchitecture {
 public:
  std::size_t input_dim = 0;
  std::vector<OutputSpec> outputs;
  SuperArchConfig config;
  LayerParams stem_hidden;
  LayerParams stem_out;
  std::vector<NodeSpec> nodes;
  std::vector<Group> groups;
  LayerParams head;

  // Spatial dimensionality of the outputs (0, 1 or 2).
  std::size_t output_dims() const { return outputs.front().spatial_dims(); }
  std::size_t output_channels() const;
  // Per-sample output shape: [channels, size...].
  Shape output_shape() const;

  // Every weight tensor in a fixed order (stem, groups, head).
  std::vector<Tensor> parameters() const;
  std::size_t architecture_count() const;
  Architecture mode_architecture() const;
  void validate(const Architecture& a) const;

  ParameterSnapshot snapshot() const;
  void restore(const ParameterSnapshot& s);
  // Copy with independent weight storage (plain copies share tensors).
  SuperArchitecture clone() const;
};

// Geometric size schedule round(start * (target/start)^(i/(n-1))).
std::vector<std::size_t> node_size_schedule(std::size_t start, std::size_t target,
                                            std::size_t n_nodes);

SuperArchitecture default_superarch(std::size_t input_dim, std::vector<OutputSpec> outputs,
                                    const SuperArchConfig& config = {});

std::vector<double> op_probs(const Group& g);

Architecture sample_architecture(const SuperArchitecture& sa, Rng& rng);

// d log pi(a|b) / d b for every group: 1{j = chosen} - p_ij.
std::vector<std::vector<double>> log_likelihood_grad(const Architecture& a,
                                                     const SuperArchitecture& sa);

double log_likelihood(const Architecture& a, const SuperArchitecture& sa);

// x: [N, input_dim] (normalized inputs). Returns [N, channels, size...] or
// [N, channels] for scalar outputs.
Tensor forward(const SuperArchitecture& sa, const Architecture& a, const Tensor& x);

// Entropy (nats) of each group's op distribution.
std::vector<double> group_entropies(const SuperArchitecture& sa);

}  // namespace dense
