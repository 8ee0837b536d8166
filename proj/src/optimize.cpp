// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace flowrvae {

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opts) {
  const std::size_t n = x0.size();
  if (n == 0) throw std::invalid_argument("nelder_mead: empty starting point");
  NelderMeadResult res;
  auto eval = [&](const std::vector<double>& x) {
    ++res.evals;
    const double v = f(x);
    return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
  };

  std::vector<std::vector<double>> pts(n + 1, x0);
  for (std::size_t i = 0; i < n; ++i) {
    const double step = x0[i] != 0.0 ? opts.initial_step * std::max(1.0, std::abs(x0[i])) : opts.initial_step;
    pts[i + 1][i] += step;
  }
  std::vector<double> vals(n + 1);
  for (std::size_t i = 0; i <= n; ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> idx(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  auto point = [&](double t, std::vector<double>& out) {
    // centroid + t * (centroid - worst)
    const auto& worst = pts[idx[n]];
    for (std::size_t j = 0; j < n; ++j) out[j] = centroid[j] + t * (centroid[j] - worst[j]);
  };

  while (res.evals < opts.max_evals) {
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });

    const double best = vals[idx[0]], worst = vals[idx[n]];
    double diameter = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        diameter = std::max(diameter, std::abs(pts[idx[i]][j] - pts[idx[0]][j]));
      }
    }
    if (std::isfinite(worst) && std::abs(worst - best) <= opts.f_tol * (1.0 + std::abs(best)) &&
        diameter <= opts.x_tol) {
      res.converged = true;
      break;
    }

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += pts[idx[i]][j];
    }
    for (auto& c : centroid) c /= static_cast<double>(n);

    point(1.0, trial);
    const double fr = eval(trial);
    const double second_worst = vals[idx[n - 1]];
    if (fr < best) {
      point(2.0, trial2);
      const double fe = eval(trial2);
      if (fe < fr) {
        pts[idx[n]] = trial2;
        vals[idx[n]] = fe;
      } else {
        pts[idx[n]] = trial;
        vals[idx[n]] = fr;
      }
      continue;
    }
    if (fr < second_worst) {
      pts[idx[n]] = trial;
      vals[idx[n]] = fr;
      continue;
    }
    // contraction: outside if the reflection improved on the worst point
    const bool outside = fr < worst;
    point(outside ? 0.5 : -0.5, trial2);
    const double fc = eval(trial2);
    if (fc < (outside ? fr : worst)) {
      pts[idx[n]] = trial2;
      vals[idx[n]] = fc;
      continue;
    }
    const auto& b = pts[idx[0]];
    for (std::size_t i = 1; i <= n; ++i) {
      auto& p = pts[idx[i]];
      for (std::size_t j = 0; j < n; ++j) p[j] = b[j] + 0.5 * (p[j] - b[j]);
      vals[idx[i]] = eval(p);
    }
  }

  const auto best = static_cast<std::size_t>(std::min_element(vals.begin(), vals.end()) - vals.begin());
  res.x = pts[best];
  res.value = vals[best];
  return res;
}

}  // namespace flowrvae
