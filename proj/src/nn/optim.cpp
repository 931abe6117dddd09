#include "vetta/nn/optim.hpp"

#include <cmath>

namespace vetta::nn {

double lr_at_step(std::uint64_t step, const Schedule& s) {
  if (s.warmup_steps > 0 && step < s.warmup_steps)
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  const double since = static_cast<double>(step - s.warmup_steps);
  return s.peak_lr * std::pow(s.decay_factor, -since / s.decay_period);
}

template <class T>
void adamw_step(ParamStore<T>& params, OptState<T>& opt, double lr) {
  for (const auto& [name, p] : params.entries()) {
    for (const T g : p.grad)
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient for parameter '" + name + "'");
  }
  if (lr < 0) lr = lr_at_step(opt.step, opt.schedule);
  ++opt.step;
  const auto& h = opt.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(opt.step));
  for (auto& [name, p] : params.entries()) {
    auto& m = opt.m[name];
    auto& v = opt.v[name];
    if (m.empty()) {
      m.assign(p.value.size(), T(0));
      v.assign(p.value.size(), T(0));
    }
    const T b1 = T(h.beta1), b2 = T(h.beta2), decay = T(lr * h.weight_decay);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const T g = p.grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      T& w = p.value[i];
      w -= decay * w;
      w -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + h.eps));
    }
  }
}

template void adamw_step(ParamStore<float>&, OptState<float>&, double);
template void adamw_step(ParamStore<double>&, OptState<double>&, double);

}  // namespace vetta::nn
