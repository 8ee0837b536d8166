// SPDX-License-Identifier: Apache-2.0
/**
 * @file   scoring.hpp
 * @brief  Reconstruction-error anomaly scores per host-window.
 */
#pragma once

#include <span>
#include <string>
#include <vector>

#include "flowrvae/features.hpp"
#include "flowrvae/models.hpp"

namespace flowrvae {

/// -sum_n [y_n log yhat_n + (1-y_n) log(1-yhat_n)] with yhat clamped to
/// [1e-7, 1-1e-7]. Higher is more anomalous. Throws NumericError on
/// non-finite input.
double anomaly_score(std::span<const double> y, std::span<const double> yhat);

struct ScoredWindow {
  std::string src_addr;
  std::int64_t window_index = 0;
  Timestamp first_seen;
  double score = 0.0;
  GroundTruth label = GroundTruth::Background;

  bool operator==(const ScoredWindow&) const = default;
};

/// Throws DataError unless the model was trained on exactly `names`.
void check_feature_layout(const Model& model, const std::vector<std::string>& names);

/// Scores the emitted elements of one sequence, in sequence order.
std::vector<ScoredWindow> score_sequence(Model& model, const Sequence& seq);

/// Scores every emitted element, sorted by (window_index, first_seen,
/// src_addr).
std::vector<ScoredWindow> score_dataset(Model& model, std::span<const Sequence> sequences);

/// CSV with header src_addr,window_index,first_seen,label,score.
void write_scores(const std::string& path, std::span<const ScoredWindow> scores);
std::vector<ScoredWindow> read_scores(const std::string& path);

}  // namespace flowrvae
