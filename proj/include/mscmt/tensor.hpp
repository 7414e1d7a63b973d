#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "mscmt/errors.hpp"
#include "mscmt/rng.hpp"

namespace mscmt {

// Reverse-mode autodiff value. Feature maps are {C,H,W} row-major, dense
// vectors are {N}, losses are {1}. A tensor produced by an operation carries
// its parents and a closure that scatters this tensor's grad back to them;
// the DAG reachable from a loss is the recorded graph.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> values;
  std::vector<T> grad;  // same length as values, zero after creation
  bool requires_grad = false;

  std::vector<std::shared_ptr<Tensor<T>>> parents;
  std::function<void()> backward_fn;  // null on leaves

  int numel() const {
    int n = 1;
    for (int e : shape) n *= e;
    return n;
  }
  bool is_scalar() const { return numel() == 1; }
  bool is_map() const { return shape.size() == 3; }
  bool is_flat() const { return shape.size() == 1; }

  int channels() const { return shape.size() == 3 ? shape[0] : 1; }
  int height() const { return shape.size() == 3 ? shape[1] : 1; }
  int width() const { return shape.size() == 3 ? shape[2] : shape[0]; }

  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <typename T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape) {
  auto t = std::make_shared<Tensor<T>>();
  for (int e : shape)
    if (e <= 0) throw ShapeError("tensor extents must be positive");
  if (shape.empty()) throw ShapeError("tensor must have at least one axis");
  t->shape = std::move(shape);
  t->values.assign(static_cast<size_t>(t->numel()), T(0));
  t->grad.assign(t->values.size(), T(0));
  return t;
}

template <typename T>
TensorPtr<T> make_tensor(std::vector<int> shape, std::vector<T> values) {
  auto t = make_tensor<T>(std::move(shape));
  if (values.size() != t->values.size())
    throw ShapeError("tensor value count does not match shape");
  t->values = std::move(values);
  return t;
}

template <typename T>
TensorPtr<T> make_scalar(T value) {
  return make_tensor<T>({1}, {value});
}

// Thread-local recording switch; forward-only inference runs with it off.
inline bool& grad_recording_flag() {
  thread_local bool enabled = true;
  return enabled;
}
inline bool grad_recording() { return grad_recording_flag(); }

struct NoGradGuard {
  NoGradGuard() : prev_(grad_recording_flag()) { grad_recording_flag() = false; }
  ~NoGradGuard() { grad_recording_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Trainable weight array plus its SGD momentum buffer.
template <typename T>
struct Parameter {
  std::string name;
  TensorPtr<T> tensor;
  std::vector<T> momentum;

  Parameter(std::string n, TensorPtr<T> t)
      : name(std::move(n)), tensor(std::move(t)),
        momentum(tensor->values.size(), T(0)) {
    tensor->requires_grad = true;
  }

  std::vector<T>& values() { return tensor->values; }
  const std::vector<T>& values() const { return tensor->values; }
  std::vector<T>& grad() { return tensor->grad; }
};

template <typename T>
using ParameterPtr = std::shared_ptr<Parameter<T>>;

// Ordered, uniquely named parameter collection of one network.
template <typename T>
class ParamStore {
 public:
  ParameterPtr<T> create(const std::string& name, std::vector<int> shape) {
    if (index_.count(name))
      throw UsageError("duplicate parameter name: " + name);
    auto p = std::make_shared<Parameter<T>>(name, make_tensor<T>(std::move(shape)));
    index_[name] = params_.size();
    params_.push_back(p);
    return p;
  }

  ParameterPtr<T> at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw UsageError("unknown parameter: " + name);
    return params_[it->second];
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<ParameterPtr<T>>& all() const { return params_; }
  size_t size() const { return params_.size(); }

  size_t value_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += p->values().size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->tensor->zero_grad();
  }

 private:
  std::vector<ParameterPtr<T>> params_;
  std::unordered_map<std::string, size_t> index_;
};

namespace detail {

// Depth-first postorder over parents; the result is a topological order.
template <typename T>
void topo_sort(Tensor<T>* root, std::vector<Tensor<T>*>& order) {
  std::unordered_set<Tensor<T>*> seen;
  std::vector<std::pair<Tensor<T>*, size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Tensor<T>* parent = node->parents[next++].get();
      if (seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Populates grads of every leaf reachable from `loss`. Interior grads are
// cleared first, so repeated backward calls on one or several graphs
// accumulate additively into leaf (parameter) gradients only.
template <typename T>
void backward(const TensorPtr<T>& loss) {
  if (!loss) throw ShapeError("backward: null loss");
  if (!loss->is_scalar()) throw ShapeError("backward: loss must be scalar");
  std::vector<Tensor<T>*> order;
  detail::topo_sort(loss.get(), order);
  for (Tensor<T>* node : order)
    if (node->backward_fn) node->zero_grad();
  loss->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

// buffer <- momentum * buffer + grad; value <- value - lr * buffer; grad <- 0.
template <typename T>
void sgd_momentum_step(const std::vector<ParameterPtr<T>>& params, T lr, T momentum) {
  for (const auto& p : params) {
    T* v = p->values().data();
    T* g = p->grad().data();
    T* m = p->momentum.data();
    size_t n = p->values().size();
    for (size_t i = 0; i < n; ++i) {
      m[i] = momentum * m[i] + g[i];
      v[i] -= lr * m[i];
      g[i] = T(0);
    }
  }
}

// He-style init: gaussian with variance 2 / fan_in.
template <typename T>
void init_he(Parameter<T>& weight, int fan_in, Rng& rng) {
  double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (T& v : weight.values()) v = static_cast<T>(rng.gaussian() * stddev);
}

// Bias init: uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]. Exactly-zero
// biases would park dead-feature preactivations exactly on the relu kink,
// where finite differences and the subgradient legitimately disagree.
template <typename T>
void init_bias(Parameter<T>& bias, int fan_in, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (T& v : bias.values()) v = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
}

}  // namespace mscmt
