// SPDX-License-Identifier: Apache-2.0
/**
 * @file   eval.hpp
 * @brief  Area metrics, precision/recall/F1, k-fold splits and reports.
 */
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrvae/detect.hpp"
#include "flowrvae/scoring.hpp"

namespace flowrvae {

/// Trapezoidal ROC area with equal scores grouped; equals the Mann-Whitney
/// statistic with half credit for ties. Throws std::invalid_argument unless
/// both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Average precision: sum over distinct descending thresholds of
/// precision * (recall increment). Throws std::invalid_argument without
/// positives.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

struct Prf {
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};
Prf prf(std::span<const int> decisions, std::span<const int> labels);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Seeded Fisher-Yates shuffle of 0..n-1 cut into k contiguous slices whose
/// sizes differ by at most one.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

struct MetricsReport {
  double recall = 0.0, precision = 0.0, f1 = 0.0, auprc = 0.0, auroc = 0.0;
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::size_t n_windows_evaluated = 0;
  double window_seconds = 60.0;
  int n_windows = 3;
  std::string arch = "rvae";

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

/// Metrics over host-windows: positives are botnet windows; background
/// windows count as negatives unless excluded. AUROC/AUPRC use the raw
/// scores, P/R/F1 the verdicts. An area metric is NaN (null in JSON) when its
/// class precondition fails.
MetricsReport evaluate(std::span<const ScoredWindow> scores, std::span<const Decision> decisions,
                       bool exclude_background = false);

/// Aligned text table, one row per report.
std::string format_table(std::span<const MetricsReport> reports);

/// Density histograms of normal and botnet scores on shared bin edges, as
/// CSV: bin_lo,bin_hi,density_normal,density_botnet.
std::string score_histogram_csv(std::span<const ScoredWindow> scores, std::size_t bins = 50);

}  // namespace flowrvae
