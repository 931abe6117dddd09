#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vetta/nn/rng.hpp"
#include "vetta/nn/tensor.hpp"

namespace vetta::nn {

/// Reverse-mode graph node. Values are immutable once the producing op returns.
template <class T>
struct Node {
  Tensor<T> value;
  std::vector<T> grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  std::vector<T>* param_grad = nullptr;
  bool requires_grad = false;
  const char* op = "leaf";

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Thread-local switch; inference paths run with gradients disabled so that
/// no backward closures are recorded.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node<T>>& node() const { return node_; }
  bool defined() const { return static_cast<bool>(node_); }

  /// Gradient accumulated in this node by the last backward() (empty if none).
  const std::vector<T>& grad() const { return node_->grad; }

  /// Seeds d(self)/d(self) = 1 and propagates; self must hold one element.
  void backward() const;

 private:
  std::shared_ptr<Node<T>> node_;
};

template <class T>
struct Param {
  Tensor<T> value;
  std::vector<T> grad;
};

/// Named parameters, iterated in sorted-name order.
template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor<T>& add(const std::string& name, Shape shape);
  Tensor<T>& add_uniform(const std::string& name, Shape shape, double lo, double hi, Rng& rng);
  Tensor<T>& add_constant(const std::string& name, Shape shape, T value);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Param<T>& at(const std::string& name);
  const Param<T>& at(const std::string& name) const;

  /// Graph leaf bound to this parameter's gradient accumulator.
  Var<T> var(const std::string& name);

  void zero_grad();
  std::size_t total_size() const;

  std::map<std::string, Param<T>>& entries() { return params_; }
  const std::map<std::string, Param<T>>& entries() const { return params_; }

  std::uint64_t seed() const { return seed_; }

 private:
  std::map<std::string, Param<T>> params_;
  std::uint64_t seed_;
};

template <class T>
Var<T> constant(Tensor<T> value);

}  // namespace vetta::nn
