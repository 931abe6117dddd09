#pragma once

#include <cstddef>
#include <vector>

namespace vetta::match {

struct Assignment {
  std::vector<std::size_t> rows;  // ascending
  std::vector<std::size_t> cols;
};

/// Minimum-cost matching of min(n_rows, n_cols) pairs on a dense row-major
/// cost matrix (shortest augmenting paths). Among optimal matchings the one
/// whose partner sequence, read along the smaller side in index order, is
/// lexicographically smallest is returned. Empty input gives an empty result.
Assignment linear_sum_assignment(const std::vector<double>& cost, std::size_t n_rows, std::size_t n_cols);

/// Same without the tie-break refinement (any optimal matching).
Assignment linear_sum_assignment_raw(const std::vector<double>& cost, std::size_t n_rows, std::size_t n_cols);

double assignment_cost(const std::vector<double>& cost, std::size_t n_cols, const Assignment& a);

}  // namespace vetta::match
