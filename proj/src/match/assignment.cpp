#include "vetta/match/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace vetta::match {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Rows <= cols. Returns col4row.
std::vector<long> solve_wide(const std::vector<double>& cost, std::size_t nr, std::size_t nc) {
  std::vector<double> u(nr, 0.0), v(nc, 0.0), spc(nc);
  std::vector<long> path(nc, -1), col4row(nr, -1), row4col(nc, -1);
  std::vector<char> sr(nr), sc(nc);
  std::vector<std::size_t> remaining(nc);
  for (std::size_t cur = 0; cur < nr; ++cur) {
    double min_val = 0;
    std::size_t i = cur;
    std::size_t n_rem = nc;
    for (std::size_t it = 0; it < nc; ++it) remaining[it] = nc - it - 1;
    std::fill(sr.begin(), sr.end(), 0);
    std::fill(sc.begin(), sc.end(), 0);
    std::fill(spc.begin(), spc.end(), kInf);
    long sink = -1;
    while (sink == -1) {
      sr[i] = 1;
      std::size_t idx_low = 0;
      double lowest = kInf;
      bool found = false;
      for (std::size_t it = 0; it < n_rem; ++it) {
        const std::size_t j = remaining[it];
        const double r = min_val + cost[i * nc + j] - u[i] - v[j];
        if (r < spc[j]) {
          path[j] = static_cast<long>(i);
          spc[j] = r;
        }
        if (!found || spc[j] < lowest || (spc[j] == lowest && row4col[j] == -1)) {
          lowest = spc[j];
          idx_low = it;
          found = true;
        }
      }
      min_val = lowest;
      if (!std::isfinite(min_val)) throw std::invalid_argument("linear_sum_assignment: infeasible cost matrix");
      const std::size_t j = remaining[idx_low];
      if (row4col[j] == -1) {
        sink = static_cast<long>(j);
      } else {
        i = static_cast<std::size_t>(row4col[j]);
      }
      sc[j] = 1;
      remaining[idx_low] = remaining[--n_rem];
    }
    u[cur] += min_val;
    for (std::size_t r = 0; r < nr; ++r)
      if (sr[r] && r != cur) u[r] += min_val - spc[static_cast<std::size_t>(col4row[r])];
    for (std::size_t c = 0; c < nc; ++c)
      if (sc[c]) v[c] -= min_val - spc[c];
    long j = sink;
    for (;;) {
      const long r = path[static_cast<std::size_t>(j)];
      row4col[static_cast<std::size_t>(j)] = r;
      std::swap(col4row[static_cast<std::size_t>(r)], j);
      if (static_cast<std::size_t>(r) == cur) break;
    }
  }
  return col4row;
}

double optimum_wide(const std::vector<double>& cost, std::size_t nr, std::size_t nc) {
  if (nr == 0) return 0.0;
  const auto c4r = solve_wide(cost, nr, nc);
  double s = 0;
  for (std::size_t r = 0; r < nr; ++r) s += cost[r * nc + static_cast<std::size_t>(c4r[r])];
  return s;
}

/// Lexicographically smallest optimal partner sequence for rows <= cols.
std::vector<std::size_t> refine_wide(const std::vector<double>& cost, std::size_t nr, std::size_t nc) {
  const double opt = optimum_wide(cost, nr, nc);
  double scale = 1.0;
  for (double c : cost) scale = std::max(scale, std::abs(c));
  const double tol = 1e-12 * scale * static_cast<double>(nr + 1);
  std::vector<std::size_t> chosen;
  std::vector<char> used(nc, 0);
  double fixed = 0;
  for (std::size_t r = 0; r < nr; ++r) {
    bool placed = false;
    for (std::size_t c = 0; c < nc && !placed; ++c) {
      if (used[c]) continue;
      // Remaining rows r+1.. against unused columns other than c.
      std::vector<std::size_t> cols;
      for (std::size_t k = 0; k < nc; ++k)
        if (!used[k] && k != c) cols.push_back(k);
      const std::size_t sub_r = nr - r - 1;
      std::vector<double> sub(sub_r * cols.size());
      for (std::size_t a = 0; a < sub_r; ++a)
        for (std::size_t b = 0; b < cols.size(); ++b) sub[a * cols.size() + b] = cost[(r + 1 + a) * nc + cols[b]];
      const double rest = optimum_wide(sub, sub_r, cols.size());
      if (fixed + cost[r * nc + c] + rest <= opt + tol) {
        chosen.push_back(c);
        used[c] = 1;
        fixed += cost[r * nc + c];
        placed = true;
      }
    }
    if (!placed) throw std::logic_error("linear_sum_assignment: refinement lost the optimum");
  }
  return chosen;
}

void check(const std::vector<double>& cost, std::size_t nr, std::size_t nc) {
  if (cost.size() != nr * nc) throw std::invalid_argument("linear_sum_assignment: cost size mismatch");
  for (double c : cost)
    if (!std::isfinite(c)) throw std::invalid_argument("linear_sum_assignment: non-finite cost");
}

std::vector<double> transpose(const std::vector<double>& cost, std::size_t nr, std::size_t nc) {
  std::vector<double> t(cost.size());
  for (std::size_t r = 0; r < nr; ++r)
    for (std::size_t c = 0; c < nc; ++c) t[c * nr + r] = cost[r * nc + c];
  return t;
}

Assignment from_partners(const std::vector<std::size_t>& partner, bool transposed) {
  Assignment a;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t k = 0; k < partner.size(); ++k)
    pairs.emplace_back(transposed ? partner[k] : k, transposed ? k : partner[k]);
  std::sort(pairs.begin(), pairs.end());
  for (const auto& [r, c] : pairs) {
    a.rows.push_back(r);
    a.cols.push_back(c);
  }
  return a;
}

}  // namespace

Assignment linear_sum_assignment_raw(const std::vector<double>& cost, std::size_t nr, std::size_t nc) {
  check(cost, nr, nc);
  if (nr == 0 || nc == 0) return {};
  const bool tr = nr > nc;
  const auto c4r = tr ? solve_wide(transpose(cost, nr, nc), nc, nr) : solve_wide(cost, nr, nc);
  std::vector<std::size_t> partner(c4r.begin(), c4r.end());
  return from_partners(partner, tr);
}

Assignment linear_sum_assignment(const std::vector<double>& cost, std::size_t nr, std::size_t nc) {
  check(cost, nr, nc);
  if (nr == 0 || nc == 0) return {};
  const bool tr = nr > nc;
  const auto partner = tr ? refine_wide(transpose(cost, nr, nc), nc, nr) : refine_wide(cost, nr, nc);
  return from_partners(partner, tr);
}

double assignment_cost(const std::vector<double>& cost, std::size_t nc, const Assignment& a) {
  double s = 0;
  for (std::size_t k = 0; k < a.rows.size(); ++k) s += cost[a.rows[k] * nc + a.cols[k]];
  return s;
}

}  // namespace vetta::match
