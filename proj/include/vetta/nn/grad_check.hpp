#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vetta/nn/autodiff.hpp"

namespace vetta::nn {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t probes = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients of `loss` (a closure rebuilding the graph
/// from `params`) with central differences at `probes` randomly chosen
/// parameter entries. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckReport grad_check(const std::function<Var<double>()>& loss, ParamStore<double>& params,
                                  std::size_t probes, std::uint64_t seed, double h = 1e-5,
                                  double floor = 1e-6) {
  params.zero_grad();
  loss().backward();

  std::vector<std::pair<std::string, std::size_t>> all;
  for (const auto& [name, p] : params.entries())
    for (std::size_t i = 0; i < p.value.size(); ++i) all.emplace_back(name, i);

  Rng rng(seed);
  GradCheckReport report;
  const std::size_t n = std::min(probes, all.size());
  // Partial Fisher-Yates to draw distinct entries.
  for (std::size_t k = 0; k < n; ++k) {
    std::swap(all[k], all[k + rng.index(all.size() - k)]);
    const auto& [name, idx] = all[k];
    Param<double>& p = params.at(name);
    const double analytic = p.grad[idx];
    const double saved = p.value[idx];
    double plus, minus;
    {
      NoGradGuard ng;
      p.value[idx] = saved + h;
      plus = loss().value()[0];
      p.value[idx] = saved - h;
      minus = loss().value()[0];
    }
    p.value[idx] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double rel =
        std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    ++report.probes;
    if (rel >= report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param = name;
      report.worst_index = idx;
      report.worst_analytic = analytic;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace vetta::nn
