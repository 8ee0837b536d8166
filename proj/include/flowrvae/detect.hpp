// SPDX-License-Identifier: Apache-2.0
/**
 * @file   detect.hpp
 * @brief  Best-fit densities of normal and botnet anomaly scores and
 *         likelihood-comparison classification.
 *
 * Every family is a standard density f(y) shifted and scaled:
 * pdf(x) = f((x - loc) / scale) / scale. Parameters are fitted by maximum
 * likelihood (Nelder-Mead with restarts); the family with the smallest
 * histogram SSE is selected.
 */
#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace flowrvae {

enum class PdfFamily { Gamma, GenLogistic, FoldedCauchy, Mielke, Beta };

inline constexpr PdfFamily kAllFamilies[] = {PdfFamily::Gamma, PdfFamily::GenLogistic,
                                             PdfFamily::FoldedCauchy, PdfFamily::Mielke,
                                             PdfFamily::Beta};

std::string_view to_string(PdfFamily f);
PdfFamily pdf_family_from_string(std::string_view s);
/// Gamma: a. GenLogistic: c. FoldedCauchy: c. Mielke: k, s. Beta: a, b.
std::size_t shape_count(PdfFamily f);

/// Density at x; 0 outside the support (+inf where the density itself
/// diverges, e.g. Gamma with a < 1 at loc). Throws std::invalid_argument on
/// invalid parameters.
double pdf_eval(PdfFamily family, std::span<const double> shape, double loc, double scale, double x);

struct FittedPdf {
  PdfFamily family = PdfFamily::Gamma;
  std::vector<double> params;
  double loc = 0.0;
  double scale = 1.0;
  double sse = 0.0;
  std::size_t n_samples = 0;
  double log_likelihood = 0.0;
  double sample_min = 0.0, sample_max = 0.0;

  double pdf(double x) const { return pdf_eval(family, params, loc, scale, x); }
  nlohmann::json to_json() const;
  static FittedPdf from_json(const nlohmann::json& j);
};

struct FitOptions {
  std::size_t bins = 200;
  std::size_t min_samples = 100;
  std::size_t max_evals = 3000;
  /// A fit is degenerate (a limiting case of another family) when a shape
  /// parameter passes this bound or its reciprocal...
  double degenerate_shape = 1e6;
  /// ...or a support endpoint lies more than this many sample ranges
  /// outside the data.
  double degenerate_reach = 2.0;
};

/// Raised when a family cannot be fitted to a sample.
struct FitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Maximum-likelihood fit. Lower (and for Beta upper) support bounds are
/// kept strictly outside the sample range so every sample has positive
/// density. Throws DataError for too few, non-finite or constant samples and
/// FitError when the optimizer finds no finite likelihood. The returned sse
/// is computed with opts.bins.
FittedPdf fit_family(PdfFamily family, std::span<const double> samples, const FitOptions& opts = {});

/// Density histogram of the samples in `bins` equal-width bins over
/// [min, max]; sum over bins of (histogram density - pdf(bin center))^2.
double sse(const FittedPdf& fit, std::span<const double> samples, std::size_t bins = 200);

bool is_degenerate(const FittedPdf& fit, const FitOptions& opts = {});

struct BestFit {
  FittedPdf best;
  std::vector<FittedPdf> candidates;  // every family that fitted
  std::vector<std::string> warnings;  // families skipped, with reasons
};

/// Fits all families and returns the smallest SSE; ties go to fewer shape
/// parameters, then enumeration order. Degenerate fits rank after all
/// regular ones. Throws FitError if none fitted.
BestFit best_fit(std::span<const double> samples, const FitOptions& opts = {});

enum class Verdict { NonMalicious, Malicious };
std::string_view to_string(Verdict v);

/// Resolution of pdf_botnet == pdf_normal (including both zero).
enum class TieRule { Malicious, NonMalicious };
std::string_view to_string(TieRule t);
TieRule tie_rule_from_string(std::string_view s);

struct Decision {
  Verdict verdict = Verdict::NonMalicious;
  double likelihood_normal = 0.0;
  double likelihood_botnet = 0.0;
  bool out_of_support = false;  // both densities zero
};

inline constexpr int kDetectorFormatVersion = 1;

struct DetectorModel {
  FittedPdf pdf_normal;
  FittedPdf pdf_botnet;
  TieRule tie_rule = TieRule::Malicious;
  std::size_t bins = 200;
  std::vector<std::string> feature_names;

  nlohmann::json to_json() const;
  static DetectorModel from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static DetectorModel load(const std::string& path);
};

/// Malicious iff pdf_botnet(score) > pdf_normal(score); equality follows
/// the tie rule.
Decision classify(double score, const DetectorModel& det);

struct DetectorFit {
  DetectorModel model;
  BestFit normal;
  BestFit botnet;
};

DetectorFit fit_detector(std::span<const double> normal_scores, std::span<const double> botnet_scores,
                         const FitOptions& opts = {}, TieRule tie_rule = TieRule::Malicious);

}  // namespace flowrvae
