#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vetta/nn/autodiff.hpp"

namespace vetta::nn {

struct Schedule {
  double peak_lr = 5e-5;
  std::uint64_t warmup_steps = 1000;
  double decay_period = 50000;  // steps per decay by `decay_factor`
  double decay_factor = 10.0;
};

/// Linear warmup from 0 to peak, then continuous exponential decay by
/// `decay_factor` every `decay_period` steps.
double lr_at_step(std::uint64_t step, const Schedule& schedule);

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

template <class T>
struct OptState {
  std::map<std::string, std::vector<T>> m, v;
  std::uint64_t step = 0;
  AdamWHyper hyper;
  Schedule schedule;
};

/// One decoupled-weight-decay Adam update using each parameter's .grad.
/// `lr` overrides the schedule when non-negative. Throws NumericalError
/// naming the first parameter with a non-finite gradient.
template <class T>
void adamw_step(ParamStore<T>& params, OptState<T>& opt, double lr = -1.0);

}  // namespace vetta::nn
