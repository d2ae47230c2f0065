#pragma once

// Dense tensors with a small reverse-mode autodiff engine covering the layer
// set used by the emulator super-architecture.
//
// Layout is row-major. Layer ops take a leading batch axis; rank-(d+1)
// inputs to the convolution family and rank-1 inputs to fully_connected() are treated
// as a single unbatched sample.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dense {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first touched by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> propagate;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T{});
    return grad;
  }
};

bool grad_enabled();

}  // namespace detail

// Disables graph recording on this thread for its lifetime (inference).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> data, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  // Builds the result of a recorded op. The propagate callback is kept only
  // when some input requires a gradient.
  static BasicTensor from_op(Shape shape, std::vector<T> data,
                             std::vector<BasicTensor> inputs,
                             std::function<void(detail::Node<T>&)> propagate);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }

  std::span<const T> data() const { return node_->value; }
  // Only meant for parameter leaves (optimizer updates, loading).
  std::span<T> mutable_data() { return node_->value; }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool is_leaf() const { return !node_->propagate; }
  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.clear(); }

  // Detached deep copy (no graph history, same requires_grad flag).
  BasicTensor clone() const;

  const NodePtr& node() const { return node_; }

 private:
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Runs reverse-mode differentiation from a scalar (single-element) loss.
// Gradients of requires_grad leaves accumulate across calls.
template <typename T>
void backward(const BasicTensor<T>& loss);

template <typename T>
struct BasicLayerParams {
  BasicTensor<T> kernel;
  BasicTensor<T> bias;
  BasicTensor<T> fill_constant;  // defined only for modified transposed conv

  bool has_fill() const { return fill_constant.defined(); }
  std::size_t kernel_size() const;  // spatial extent k (convolutions only)
  std::vector<BasicTensor<T>> tensors() const;
};

using LayerParams = BasicLayerParams<float>;

// ---- ops -----------------------------------------------------------------

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor);

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);

// x: [N, n_in] or [n_in]; kernel: [n_out, n_in]; bias: [n_out].
template <typename T>
BasicTensor<T> fully_connected(const BasicTensor<T>& x, const BasicLayerParams<T>& p);

// Same-size cross-correlation, stride 1, zero padding (k-1)/2.
// x: [N, C_in, S...] with d = kernel.rank() - 2 spatial axes.
template <typename T>
BasicTensor<T> conv(const BasicTensor<T>& x, const BasicLayerParams<T>& p);

// Nearest-neighbour upsampling: output index j reads floor(j*S_in/S_out).
template <typename T>
BasicTensor<T> nn_upsample(const BasicTensor<T>& x, const std::vector<std::size_t>& out_size);

// Expands each spatial axis by stride ceil(S_out/S_in): real samples sit on
// the stride grid, all other positions take the scalar fill value, and the
// left-aligned expansion is cropped to out_size.
template <typename T>
BasicTensor<T> expand_fill(const BasicTensor<T>& x, const BasicTensor<T>& fill,
                           const std::vector<std::size_t>& out_size);

// expand_fill with the layer's fill constant followed by conv().
template <typename T>
BasicTensor<T> mod_transposed_conv(const BasicTensor<T>& x, const BasicLayerParams<T>& p,
                                   const std::vector<std::size_t>& out_size);

// Zeros of out_shape. Records x as an input so the graph stays connected,
// but sends it an all-zero gradient.
template <typename T>
BasicTensor<T> zero_layer(const BasicTensor<T>& x, const Shape& out_shape);

// Mean Huber loss over all elements.
template <typename T>
BasicTensor<T> huber_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, T delta);

}  // namespace dense
