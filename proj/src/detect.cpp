// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/detect.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "flowrvae/errors.hpp"
#include "flowrvae/optimize.hpp"
#include "flowrvae/util.hpp"

namespace flowrvae {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

void validate(PdfFamily family, std::span<const double> shape, double scale) {
  if (shape.size() != shape_count(family)) {
    throw std::invalid_argument(std::string(to_string(family)) + " expects " +
                                std::to_string(shape_count(family)) + " shape parameters");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("scale must be positive");
  for (double v : shape) {
    if (!std::isfinite(v)) throw std::invalid_argument("shape parameters must be finite");
  }
  const bool ok = family == PdfFamily::FoldedCauchy ? shape[0] >= 0.0
                                                     : std::all_of(shape.begin(), shape.end(),
                                                                   [](double v) { return v > 0.0; });
  if (!ok) throw std::invalid_argument(std::string(to_string(family)) + " shape parameters out of range");
}

/// log f(y) of the standard density; -inf outside the open support.
double log_density(PdfFamily family, const double* p, double y) {
  switch (family) {
    case PdfFamily::Gamma:
      if (!(y > 0.0)) return -kInf;
      return (p[0] - 1.0) * std::log(y) - y - std::lgamma(p[0]);
    case PdfFamily::GenLogistic:
      return std::log(p[0]) - y - (p[0] + 1.0) * softplus(-y);
    case PdfFamily::FoldedCauchy: {
      if (!(y >= 0.0)) return -kInf;
      const double a = y - p[0], b = y + p[0];
      return std::log(1.0 / (1.0 + a * a) + 1.0 / (1.0 + b * b)) - std::log(std::numbers::pi);
    }
    case PdfFamily::Mielke: {
      if (!(y > 0.0)) return -kInf;
      const double ly = std::log(y);
      return std::log(p[0]) + (p[0] - 1.0) * ly - (1.0 + p[0] / p[1]) * softplus(p[1] * ly);
    }
    case PdfFamily::Beta:
      if (!(y > 0.0 && y < 1.0)) return -kInf;
      return (p[0] - 1.0) * std::log(y) + (p[1] - 1.0) * std::log1p(-y) - lbeta(p[0], p[1]);
  }
  return -kInf;
}

/// Standard density including closed support endpoints.
double density(PdfFamily family, const double* p, double y) {
  switch (family) {
    case PdfFamily::Gamma:
      if (y == 0.0) return std::pow(0.0, p[0] - 1.0) / std::tgamma(p[0]);
      break;
    case PdfFamily::Mielke:
      if (y == 0.0) return p[0] * std::pow(0.0, p[0] - 1.0);
      break;
    case PdfFamily::Beta:
      if (y == 0.0) return std::pow(0.0, p[0] - 1.0) / std::exp(lbeta(p[0], p[1]));
      if (y == 1.0) return std::pow(0.0, p[1] - 1.0) / std::exp(lbeta(p[0], p[1]));
      break;
    default:
      break;
  }
  return std::exp(log_density(family, p, y));
}

// Fitting works on standardized samples u = (x - mean) / sd so that every
// starting point and tolerance is scale-free.
struct Standardized {
  std::vector<double> u;
  double mean = 0.0, sd = 1.0;
  double umin = 0.0, umax = 0.0;
  double margin = 0.0;  // support bounds stay this far outside [umin, umax]
  double median = 0.0, iqr = 1.0, skew = 0.0;
};

Standardized standardize(std::span<const double> x) {
  Standardized s;
  const double n = static_cast<double>(x.size());
  s.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double m2 = 0.0;
  for (double v : x) m2 += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(m2 / n);
  s.u.resize(x.size());
  double m3 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s.u[i] = (x[i] - s.mean) / s.sd;
    m3 += s.u[i] * s.u[i] * s.u[i];
  }
  s.skew = m3 / n;
  auto sorted = s.u;
  std::sort(sorted.begin(), sorted.end());
  s.umin = sorted.front();
  s.umax = sorted.back();
  auto quantile = [&](double q) { return sorted[static_cast<std::size_t>(q * (n - 1))]; };
  s.median = quantile(0.5);
  s.iqr = std::max(quantile(0.75) - quantile(0.25), 1e-6);
  s.margin = s.iqr / n;
  return s;
}

struct Params {
  std::vector<double> shape;
  double loc = 0.0, scale = 1.0;
};

double lower_bound(const Standardized& s, double theta) { return s.umin - s.margin - std::exp(theta); }

double lower_theta(const Standardized& s, double loc) {
  return std::log(std::max(s.umin - s.margin - loc, 1e-6));
}

Params decode(PdfFamily f, const std::vector<double>& t, const Standardized& s) {
  switch (f) {
    case PdfFamily::Gamma:
      return {{std::exp(t[0])}, lower_bound(s, t[1]), std::exp(t[2])};
    case PdfFamily::GenLogistic:
      return {{std::exp(t[0])}, t[1], std::exp(t[2])};
    case PdfFamily::FoldedCauchy:
      return {{std::abs(t[0])}, lower_bound(s, t[1]), std::exp(t[2])};
    case PdfFamily::Mielke:
      return {{std::exp(t[0]), std::exp(t[1])}, lower_bound(s, t[2]), std::exp(t[3])};
    case PdfFamily::Beta: {
      const double loc = lower_bound(s, t[2]);
      const double upper = s.umax + s.margin + std::exp(t[3]);
      return {{std::exp(t[0]), std::exp(t[1])}, loc, upper - loc};
    }
  }
  return {};
}

std::vector<double> encode(PdfFamily f, const Params& p, const Standardized& s) {
  switch (f) {
    case PdfFamily::Gamma:
      return {std::log(p.shape[0]), lower_theta(s, p.loc), std::log(p.scale)};
    case PdfFamily::GenLogistic:
      return {std::log(p.shape[0]), p.loc, std::log(p.scale)};
    case PdfFamily::FoldedCauchy:
      return {p.shape[0], lower_theta(s, p.loc), std::log(p.scale)};
    case PdfFamily::Mielke:
      return {std::log(p.shape[0]), std::log(p.shape[1]), lower_theta(s, p.loc), std::log(p.scale)};
    case PdfFamily::Beta:
      return {std::log(p.shape[0]), std::log(p.shape[1]), lower_theta(s, p.loc),
              std::log(std::max(p.loc + p.scale - s.umax - s.margin, 1e-6))};
  }
  return {};
}

/// Mean negative log-likelihood of the standardized sample.
double mean_nll(PdfFamily f, const Params& p, const Standardized& s) {
  if (!(p.scale > 0.0) || !std::isfinite(p.scale) || !std::isfinite(p.loc)) return kInf;
  for (double v : p.shape) {
    if (!(v > 0.0 || (f == PdfFamily::FoldedCauchy && v == 0.0)) || !std::isfinite(v)) return kInf;
  }
  const double inv = 1.0 / p.scale;
  double ll = 0.0;
  for (double u : s.u) ll += log_density(f, p.shape.data(), (u - p.loc) * inv);
  const double n = static_cast<double>(s.u.size());
  return -(ll / n) + std::log(p.scale);
}

/// Moment-based and fixed starting points, in standardized units.
std::vector<Params> starting_points(PdfFamily f, const Standardized& s) {
  std::vector<Params> out;
  const double below = s.umin - s.margin;
  switch (f) {
    case PdfFamily::Gamma: {
      std::vector<double> shapes = {1.0, 3.0};
      if (s.skew > 0.05) shapes.insert(shapes.begin(), std::clamp(4.0 / (s.skew * s.skew), 0.2, 400.0));
      for (double a : shapes) {
        const double scale = 1.0 / std::sqrt(a);
        out.push_back({{a}, std::min(-a * scale, below - 0.01), scale});
      }
      break;
    }
    case PdfFamily::GenLogistic: {
      const double scale = std::sqrt(3.0) / std::numbers::pi;
      for (double c : {1.0, 0.3, 3.0}) out.push_back({{c}, s.median, scale});
      break;
    }
    case PdfFamily::FoldedCauchy: {
      const double scale = s.iqr / 2.0;
      const double loc = below - 0.01 * (s.umax - s.umin);
      for (double c : {std::max((s.median - loc) / scale, 0.0), 0.5, 2.0}) out.push_back({{c}, loc, scale});
      break;
    }
    case PdfFamily::Mielke: {
      const double loc = below - 0.1;
      for (auto [k, sh] : {std::pair{2.0, 3.0}, std::pair{1.0, 1.0}, std::pair{4.0, 6.0}}) {
        out.push_back({{k, sh}, loc, s.median - loc});
      }
      break;
    }
    case PdfFamily::Beta: {
      const double pad = 0.01 * (s.umax - s.umin);
      const double loc = below - pad, scale = s.umax + s.margin + pad - loc;
      const double m = (0.0 - loc) / scale, v = 1.0 / (scale * scale);
      const double common = m * (1.0 - m) / v - 1.0;
      if (common > 0.0) out.push_back({{m * common, (1.0 - m) * common}, loc, scale});
      out.push_back({{1.0, 1.0}, loc, scale});
      out.push_back({{2.0, 2.0}, loc, scale});
      break;
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(PdfFamily f) {
  switch (f) {
    case PdfFamily::Gamma: return "gamma";
    case PdfFamily::GenLogistic: return "genlogistic";
    case PdfFamily::FoldedCauchy: return "foldcauchy";
    case PdfFamily::Mielke: return "mielke";
    case PdfFamily::Beta: return "beta";
  }
  return "?";
}

PdfFamily pdf_family_from_string(std::string_view s) {
  for (auto f : kAllFamilies) {
    if (to_string(f) == s) return f;
  }
  throw DataError("unknown distribution family '" + std::string(s) + "'");
}

std::size_t shape_count(PdfFamily f) {
  return f == PdfFamily::Mielke || f == PdfFamily::Beta ? 2 : 1;
}

double pdf_eval(PdfFamily family, std::span<const double> shape, double loc, double scale, double x) {
  validate(family, shape, scale);
  if (std::isnan(x)) throw std::invalid_argument("pdf_eval: x is NaN");
  return density(family, shape.data(), (x - loc) / scale) / scale;
}

nlohmann::json FittedPdf::to_json() const {
  return {{"family", to_string(family)}, {"params", params}, {"loc", loc},
          {"scale", scale}, {"sse", sse}, {"n", n_samples}, {"log_likelihood", log_likelihood},
          {"sample_min", sample_min}, {"sample_max", sample_max}};
}

FittedPdf FittedPdf::from_json(const nlohmann::json& j) {
  FittedPdf f;
  f.family = pdf_family_from_string(j.at("family").get<std::string>());
  f.params = j.at("params").get<std::vector<double>>();
  f.loc = j.at("loc").get<double>();
  f.scale = j.at("scale").get<double>();
  f.sse = j.at("sse").get<double>();
  f.n_samples = j.at("n").get<std::size_t>();
  f.log_likelihood = j.value("log_likelihood", 0.0);
  f.sample_min = j.value("sample_min", 0.0);
  f.sample_max = j.value("sample_max", 0.0);
  try {
    validate(f.family, f.params, f.scale);
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("invalid fitted density: ") + e.what());
  }
  return f;
}

FittedPdf fit_family(PdfFamily family, std::span<const double> samples, const FitOptions& opts) {
  if (samples.size() < std::max<std::size_t>(opts.min_samples, 2)) {
    throw DataError("need at least " + std::to_string(std::max<std::size_t>(opts.min_samples, 2)) +
                    " samples to fit a density, got " + std::to_string(samples.size()));
  }
  for (double v : samples) {
    if (!std::isfinite(v)) throw DataError("non-finite sample in density fit");
  }
  const Standardized s = standardize(samples);
  if (!(s.sd > 0.0) || !std::isfinite(s.sd) || s.umax - s.umin <= 0.0) {
    throw DataError("samples have zero variance; density fit is degenerate");
  }

  auto objective = [&](const std::vector<double>& t) { return mean_nll(family, decode(family, t, s), s); };
  NelderMeadOptions nm;
  nm.max_evals = opts.max_evals;
  nm.f_tol = 1e-12;
  nm.x_tol = 1e-7;

  NelderMeadResult best;
  best.value = kInf;
  for (const auto& start : starting_points(family, s)) {
    auto r = nelder_mead(objective, encode(family, start, s), nm);
    if (r.value < best.value) best = std::move(r);
  }
  if (!std::isfinite(best.value)) {
    throw FitError(std::string(to_string(family)) + ": no parameters with finite likelihood");
  }
  // restart from the optimum to escape a collapsed simplex
  nm.initial_step = 0.1;
  for (int i = 0; i < 2; ++i) {
    auto r = nelder_mead(objective, best.x, nm);
    if (r.value < best.value) best = std::move(r);
  }

  const Params p = decode(family, best.x, s);
  FittedPdf fit;
  fit.family = family;
  fit.params = p.shape;
  fit.loc = s.mean + s.sd * p.loc;
  fit.scale = s.sd * p.scale;
  fit.n_samples = samples.size();
  fit.sample_min = s.mean + s.sd * s.umin;
  fit.sample_max = s.mean + s.sd * s.umax;
  fit.log_likelihood = -static_cast<double>(samples.size()) * (best.value + std::log(s.sd));
  try {
    validate(family, fit.params, fit.scale);
  } catch (const std::invalid_argument& e) {
    throw FitError(std::string(to_string(family)) + ": " + e.what());
  }
  fit.sse = sse(fit, samples, opts.bins);
  return fit;
}

double sse(const FittedPdf& fit, std::span<const double> samples, std::size_t bins) {
  if (samples.empty()) return 0.0;
  if (bins == 0) throw std::invalid_argument("sse: bins must be positive");
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *lo_it, hi = *hi_it;
  const double n = static_cast<double>(samples.size());
  if (!(hi > lo)) {
    // one bin of unit width holding every sample
    const double d = 1.0 - fit.pdf(lo);
    return d * d;
  }
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> counts(bins, 0.0);
  for (double x : samples) {
    auto b = static_cast<std::size_t>((x - lo) / width);
    counts[std::min(b, bins - 1)] += 1.0;
  }
  double total = 0.0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double center = lo + (static_cast<double>(b) + 0.5) * width;
    const double d = counts[b] / (n * width) - fit.pdf(center);
    total += d * d;
  }
  return total;
}

bool is_degenerate(const FittedPdf& fit, const FitOptions& opts) {
  for (double v : fit.params) {
    if (v > opts.degenerate_shape) return true;
    if (fit.family != PdfFamily::FoldedCauchy && v < 1.0 / opts.degenerate_shape) return true;
  }
  const double range = fit.sample_max - fit.sample_min;
  if (!(range > 0.0)) return false;
  const double reach = opts.degenerate_reach * range;
  if (fit.family != PdfFamily::GenLogistic && fit.sample_min - fit.loc > reach) return true;
  if (fit.family == PdfFamily::Beta && fit.loc + fit.scale - fit.sample_max > reach) return true;
  return false;
}

BestFit best_fit(std::span<const double> samples, const FitOptions& opts) {
  if (samples.size() < opts.min_samples) {
    throw DataError("need at least " + std::to_string(opts.min_samples) + " samples, got " +
                    std::to_string(samples.size()));
  }
  BestFit out;
  for (auto f : kAllFamilies) {
    try {
      out.candidates.push_back(fit_family(f, samples, opts));
    } catch (const FitError& e) {
      out.warnings.push_back(std::string("skipped ") + e.what());
    }
  }
  std::vector<FittedPdf> usable;
  for (const auto& c : out.candidates) {
    if (std::isfinite(c.sse)) usable.push_back(c);
  }
  if (usable.empty()) throw FitError("no distribution family could be fitted");
  // Degenerate fits only win when nothing else fitted.
  const bool any_regular = std::any_of(usable.begin(), usable.end(),
                                       [&](const FittedPdf& f) { return !is_degenerate(f, opts); });
  for (const auto& c : usable) {
    if (is_degenerate(c, opts)) {
      out.warnings.push_back(std::string(to_string(c.family)) + " fit is a limiting case of another family" +
                             (any_regular ? "; ranked last" : ""));
    }
  }
  auto rank = [&](const FittedPdf& f) {
    return std::tuple{any_regular && is_degenerate(f, opts), f.sse, shape_count(f.family),
                      static_cast<int>(f.family)};
  };
  out.best = *std::min_element(usable.begin(), usable.end(),
                               [&](const FittedPdf& a, const FittedPdf& b) { return rank(a) < rank(b); });
  return out;
}

std::string_view to_string(Verdict v) { return v == Verdict::Malicious ? "malicious" : "non-malicious"; }

std::string_view to_string(TieRule t) { return t == TieRule::Malicious ? "malicious" : "non-malicious"; }

TieRule tie_rule_from_string(std::string_view s) {
  if (s == "malicious") return TieRule::Malicious;
  if (s == "non-malicious") return TieRule::NonMalicious;
  throw std::invalid_argument("unknown tie rule '" + std::string(s) + "'");
}

nlohmann::json DetectorModel::to_json() const {
  return {{"format_version", kDetectorFormatVersion},
          {"pdf_normal", pdf_normal.to_json()},
          {"pdf_botnet", pdf_botnet.to_json()},
          {"tie_rule", to_string(tie_rule)},
          {"bins", bins},
          {"feature_names", feature_names}};
}

DetectorModel DetectorModel::from_json(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kDetectorFormatVersion) {
    throw DataError("unsupported detector format_version " + std::to_string(version));
  }
  DetectorModel d;
  d.pdf_normal = FittedPdf::from_json(j.at("pdf_normal"));
  d.pdf_botnet = FittedPdf::from_json(j.at("pdf_botnet"));
  try {
    d.tie_rule = tie_rule_from_string(j.at("tie_rule").get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
  d.bins = j.value("bins", std::size_t{200});
  d.feature_names = j.value("feature_names", std::vector<std::string>{});
  return d;
}

void DetectorModel::save(const std::string& path) const { write_text_file(path, to_json().dump(1) + "\n"); }

DetectorModel DetectorModel::load(const std::string& path) {
  try {
    return from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad detector file '" + path + "': " + e.what());
  }
}

Decision classify(double score, const DetectorModel& det) {
  Decision d;
  d.likelihood_normal = det.pdf_normal.pdf(score);
  d.likelihood_botnet = det.pdf_botnet.pdf(score);
  d.out_of_support = d.likelihood_normal == 0.0 && d.likelihood_botnet == 0.0;
  if (d.likelihood_botnet > d.likelihood_normal) {
    d.verdict = Verdict::Malicious;
  } else if (d.likelihood_botnet == d.likelihood_normal) {
    d.verdict = det.tie_rule == TieRule::Malicious ? Verdict::Malicious : Verdict::NonMalicious;
  } else {
    d.verdict = Verdict::NonMalicious;
  }
  return d;
}

DetectorFit fit_detector(std::span<const double> normal_scores, std::span<const double> botnet_scores,
                         const FitOptions& opts, TieRule tie_rule) {
  DetectorFit out;
  out.normal = best_fit(normal_scores, opts);
  out.botnet = best_fit(botnet_scores, opts);
  out.model.pdf_normal = out.normal.best;
  out.model.pdf_botnet = out.botnet.best;
  out.model.tie_rule = tie_rule;
  out.model.bins = opts.bins;
  return out;
}

}  // namespace flowrvae
