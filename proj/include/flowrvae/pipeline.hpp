// SPDX-License-Identifier: Apache-2.0
/**
 * @file   pipeline.hpp
 * @brief  End-to-end stages: featurize, train (optionally k-fold), score,
 *         fit the detector, classify, evaluate; plus the streaming detector
 *         and run manifests.
 */
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrvae/detect.hpp"
#include "flowrvae/eval.hpp"
#include "flowrvae/features.hpp"
#include "flowrvae/models.hpp"
#include "flowrvae/scoring.hpp"

namespace flowrvae {

/// How scoring builds sequences. Trailing: each window is scored with the
/// N-1 preceding windows as context, which the streaming detector can
/// reproduce exactly. Span: the non-overlapping spans used in training.
enum class Context { Trailing, Span };
std::string_view to_string(Context c);
Context context_from_string(std::string_view s);

struct PipelineConfig {
  PreprocessConfig pre;
  int stride = 0;
  Arch arch = Arch::Rvae;
  TrainConfig train;
  /// 0 or 1 disables k-fold model selection.
  std::size_t kfold = 0;
  FitOptions fit;
  TieRule tie_rule = TieRule::Malicious;
  Context context = Context::Trailing;
  bool exclude_background = false;

  SequenceConfig sequence_config() const { return {pre.n_windows, pre.l_max, stride}; }
  nlohmann::json to_json() const;
};

std::vector<Sequence> make_sequences(const FeatureTable& table, const SequenceConfig& cfg, Context ctx);

struct FoldSummary {
  std::size_t fold = 0;
  double auprc = 0.0;          // NaN when the validation fold has no botnet element
  double mean_score = 0.0;     // mean validation score
  std::size_t validation_sequences = 0;
  bool selected = false;
};

/// Trains on the table's span sequences. With cfg.kfold >= 2 the sequences
/// are split into folds, one model is trained per fold and the one with the
/// best validation AUPRC is returned; folds without botnet validation
/// elements rank below the rest, and among those the lowest mean validation
/// score wins.
TrainResult train_model(const FeatureTable& table, const PipelineConfig& cfg,
                        std::vector<FoldSummary>* folds = nullptr);

/// Throws DataError when the table was not produced with the model's
/// feature layout and normalizer.
void check_compatible(const Model& model, const FeatureTable& table);

std::vector<ScoredWindow> score_table(Model& model, const FeatureTable& table, Context ctx);

/// pdf_normal from non-botnet scores, pdf_botnet from botnet scores.
DetectorFit fit_detector(std::span<const ScoredWindow> scores, const FitOptions& opts, TieRule tie_rule);

std::vector<Decision> classify_all(std::span<const ScoredWindow> scores, const DetectorModel& det);

struct ExperimentResult {
  TrainResult trained;
  std::vector<FoldSummary> folds;
  DetectorFit detector;
  std::vector<ScoredWindow> train_scores;
  std::vector<ScoredWindow> test_scores;
  std::vector<Decision> decisions;
  MetricsReport report;
};

using SourceFactory = std::function<std::unique_ptr<FlowSource>()>;

/// preprocess -> train -> score -> fitpdf -> classify -> metrics. The test
/// split is normalized with the training statistics.
ExperimentResult run_experiment(const SourceFactory& train, const SourceFactory& test,
                                const PipelineConfig& cfg);

struct SweepEntry {
  double window_seconds = 0.0;
  MetricsReport report;
  std::string histogram_csv;
};

/// run_experiment once per window duration, otherwise identical config.
std::vector<SweepEntry> window_sweep(const SourceFactory& train, const SourceFactory& test,
                                     const std::vector<double>& durations, const PipelineConfig& cfg);

// Streaming --------------------------------------------------------------------

struct StreamRecord {
  std::string src_addr;
  std::int64_t window_index = 0;
  Timestamp first_seen;
  GroundTruth label = GroundTruth::Background;
  double score = 0.0;
  Decision decision;
  /// Stream time of emission minus the window's end, in seconds.
  double emit_latency = 0.0;

  nlohmann::json to_json() const;
};

/// Online detector. Flows must arrive in start-time order; a flow older than
/// the open window is dropped. When a flow opens a later window, the open
/// window is closed, scored with the previous N-1 windows as context and its
/// decisions returned. Only the last N-1 closed windows are retained.
class StreamDetector {
 public:
  StreamDetector(Model& model, DetectorModel detector, std::optional<Timestamp> t0 = std::nullopt);

  std::vector<StreamRecord> push(const FlowRecord& flow);
  /// Closes the open window at end of input.
  std::vector<StreamRecord> finish();

  std::size_t flows_accepted() const { return agg_.flows_accepted(); }
  std::size_t flows_dropped() const { return agg_.flows_dropped(); }
  std::size_t retained_windows() const { return history_.size(); }

 private:
  std::vector<StreamRecord> emit(std::vector<HostWindowAggregate> closed, std::optional<Timestamp> now);

  Model& model_;
  DetectorModel detector_;
  WindowAggregator agg_;
  std::map<std::int64_t, std::vector<FeatureRow>> history_;
};

/// Runs the detector over a source, calling `sink` per record in emission
/// order. Returns the number of dropped (late) flows.
std::size_t run_stream(Model& model, const DetectorModel& detector, FlowSource& source,
                       const std::function<void(const StreamRecord&)>& sink);

// Files ------------------------------------------------------------------------

/// The normalizer stored in a model file or a features file.
Normalizer load_normalizer(const std::string& path);

/// Decisions CSV: src_addr,window_index,first_seen,label,score,
/// likelihood_normal,likelihood_botnet,verdict,out_of_support.
void write_decisions(const std::string& path, std::span<const ScoredWindow> scores,
                     std::span<const Decision> decisions);
void read_decisions(const std::string& path, std::vector<ScoredWindow>& scores, std::vector<Decision>& decisions);

// Run manifests ----------------------------------------------------------------

inline constexpr const char* kVersion = "0.1.0";

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;

  /// {command, version, seed, config, config_hash, inputs:[{path, fnv1a64}],
  /// outputs:[{path, fnv1a64}]}. Files are hashed when this is called.
  nlohmann::json to_json() const;
  void write(const std::string& path) const;
};

}  // namespace flowrvae
