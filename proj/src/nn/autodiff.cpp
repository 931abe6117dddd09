#include "vetta/nn/autodiff.hpp"

#include <sstream>
#include <unordered_set>

namespace vetta::nn {

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {
thread_local bool grad_enabled = true;
}

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set_enabled(bool on) { grad_enabled = on; }

template <class T>
void Var<T>::backward() const {
  if (!node_) throw std::logic_error("backward on undefined Var");
  if (node_->value.size() != 1) {
    throw std::logic_error("backward requires a scalar, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>& node = **it;
    if (node.grad.empty()) continue;
    if (node.backward) node.backward(node);
    if (node.param_grad) {
      auto& dst = *node.param_grad;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
    }
  }
}

template <class T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Shape shape) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Param<T>& p = params_[name];
  p.value = Tensor<T>(std::move(shape));
  p.grad.assign(p.value.size(), T(0));
  return p.value;
}

template <class T>
Tensor<T>& ParamStore<T>::add_uniform(const std::string& name, Shape shape, double lo, double hi,
                                      Rng& rng) {
  Tensor<T>& t = add(name, std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
Tensor<T>& ParamStore<T>::add_constant(const std::string& name, Shape shape, T value) {
  Tensor<T>& t = add(name, std::move(shape));
  std::fill(t.data.begin(), t.data.end(), value);
  return t;
}

template <class T>
Param<T>& ParamStore<T>::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <class T>
const Param<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

template <class T>
Var<T> ParamStore<T>::var(const std::string& name) {
  Param<T>& p = at(name);
  auto node = std::make_shared<Node<T>>();
  node->value = p.value;
  node->op = "param";
  if (GradMode::enabled()) {
    node->requires_grad = true;
    node->param_grad = &p.grad;
  }
  return Var<T>(std::move(node));
}

template <class T>
void ParamStore<T>::zero_grad() {
  for (auto& [name, p] : params_) std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <class T>
std::size_t ParamStore<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

template <class T>
Var<T> constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = "constant";
  return Var<T>(std::move(node));
}

template class Var<float>;
template class Var<double>;
template class ParamStore<float>;
template class ParamStore<double>;
template Var<float> constant(Tensor<float>);
template Var<double> constant(Tensor<double>);

}  // namespace vetta::nn
