#include "dense/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace dense {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool detail::grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw std::invalid_argument("tensor extents must be positive: " + shape_str(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor data size " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
  node_ = std::make_shared<detail::Node<T>>();
  node_->shape = std::move(shape);
  node_->value = std::move(data);
  node_->requires_grad = requires_grad;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> data(shape_numel(shape), value);
  return BasicTensor(std::move(shape), std::move(data), requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_op(Shape shape, std::vector<T> data,
                                       std::vector<BasicTensor> inputs,
                                       std::function<void(detail::Node<T>&)> propagate) {
  BasicTensor out(std::move(shape), std::move(data));
  bool any = false;
  if (detail::grad_enabled()) {
    for (const auto& in : inputs) any = any || in.requires_grad();
  }
  if (any) {
    out.node_->requires_grad = true;
    out.node_->inputs.reserve(inputs.size());
    for (auto& in : inputs) out.node_->inputs.push_back(in.node_);
    out.node_->propagate = std::move(propagate);
  }
  return out;
}

template <typename T>
T BasicTensor<T>::item() const {
  if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  return BasicTensor(node_->shape, node_->value, node_->requires_grad);
}

template <typename T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss");
  }
  using NodeT = detail::Node<T>;
  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> seen;
  // Iterative post-order DFS.
  std::vector<std::pair<NodeT*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (NodeT* node : order) {
    if (node->propagate) node->grad.assign(node->value.size(), T{});
  }
  loss.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* node = *it;
    if (node->propagate) node->propagate(*node);
  }
}

template <typename T>
std::size_t BasicLayerParams<T>::kernel_size() const {
  if (kernel.rank() < 3) throw std::logic_error("kernel_size() on a dense layer");
  return kernel.shape().back();
}

template <typename T>
std::vector<BasicTensor<T>> BasicLayerParams<T>::tensors() const {
  std::vector<BasicTensor<T>> out;
  for (const auto* t : {&kernel, &bias, &fill_constant}) {
    if (t->defined()) out.push_back(*t);
  }
  return out;
}

// ---- elementwise and structural ops ---------------------------------------

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return BasicTensor<T>::from_op(a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (auto& in : self.inputs) {
      if (!in->requires_grad) continue;
      auto& g = in->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  return BasicTensor<T>::from_op(x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

template <typename T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  T total{0};
  for (T v : x.data()) total += v;
  return BasicTensor<T>::from_op(Shape{1}, {total}, {x}, [](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return BasicTensor<T>::from_op(std::move(shape), std::move(out), {x},
                                 [](detail::Node<T>& self) {
                                   auto& g = self.inputs[0]->grad_buffer();
                                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                 });
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (auto& v : out) v = v > T{0} ? v : T{0};
  return BasicTensor<T>::from_op(x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    const auto& in = self.inputs[0];
    auto& g = in->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (in->value[i] > T{0}) g[i] += self.grad[i];
    }
  });
}

template <typename T>
BasicTensor<T> zero_layer(const BasicTensor<T>& x, const Shape& out_shape) {
  // The input is recorded but receives nothing: its gradient is exactly 0.
  return BasicTensor<T>::from_op(out_shape, std::vector<T>(shape_numel(out_shape), T{0}), {x},
                                 [](detail::Node<T>&) {});
}

template <typename T>
BasicTensor<T> huber_loss(const BasicTensor<T>& pred, const BasicTensor<T>& target, T delta) {
  if (!(delta > T{0})) throw std::invalid_argument("huber_loss: delta must be positive");
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("huber_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  }
  auto p = pred.data();
  auto t = target.data();
  const std::size_t n = p.size();
  // Accumulate in double so float losses do not drift with batch size.
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    const double a = std::abs(r);
    total += a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
  }
  const T mean = static_cast<T>(total / static_cast<double>(n));
  return BasicTensor<T>::from_op(
      Shape{1}, {mean}, {pred, target}, [delta, n](detail::Node<T>& self) {
        const auto& pn = self.inputs[0];
        const auto& tn = self.inputs[1];
        const T scale = self.grad[0] / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const T r = pn->value[i] - tn->value[i];
          const T dr = std::abs(r) <= delta ? r : (r > T{0} ? delta : -delta);
          if (pn->requires_grad) pn->grad_buffer()[i] += scale * dr;
          if (tn->requires_grad) tn->grad_buffer()[i] -= scale * dr;
        }
      });
}

#define DENSE_INSTANTIATE(T)                                                                \
  template class BasicTensor<T>;                                                            \
  template struct BasicLayerParams<T>;                                                      \
  template void backward<T>(const BasicTensor<T>&);                                         \
  template BasicTensor<T> add<T>(const BasicTensor<T>&, const BasicTensor<T>&);             \
  template BasicTensor<T> scale<T>(const BasicTensor<T>&, T);                               \
  template BasicTensor<T> sum<T>(const BasicTensor<T>&);                                    \
  template BasicTensor<T> reshape<T>(const BasicTensor<T>&, Shape);                         \
  template BasicTensor<T> relu<T>(const BasicTensor<T>&);                                   \
  template BasicTensor<T> zero_layer<T>(const BasicTensor<T>&, const Shape&);               \
  template BasicTensor<T> huber_loss<T>(const BasicTensor<T>&, const BasicTensor<T>&, T);

DENSE_INSTANTIATE(float)
DENSE_INSTANTIATE(double)

#undef DENSE_INSTANTIATE

}  // namespace dense
