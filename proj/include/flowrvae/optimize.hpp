// SPDX-License-Identifier: Apache-2.0
/**
 * @file   optimize.hpp
 * @brief  Derivative-free minimization (Nelder-Mead simplex).
 */
#pragma once

#include <functional>
#include <vector>

namespace flowrvae {

struct NelderMeadOptions {
  std::size_t max_evals = 4000;
  double initial_step = 0.5;
  /// Stop when both the spread of simplex values and the simplex diameter
  /// fall below these.
  double f_tol = 1e-10;
  double x_tol = 1e-8;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evals = 0;
  bool converged = false;
};

/// Minimizes f from x0 using the standard reflection (1), expansion (2),
/// contraction (1/2) and shrink (1/2) coefficients. Non-finite values are
/// treated as +infinity.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opts = {});

}  // namespace flowrvae
