// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "flowrvae/rng.hpp"
#include "flowrvae/util.hpp"

namespace flowrvae {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw std::invalid_argument("scores and labels differ in length");
}

/// Indices sorted by descending score.
std::vector<std::size_t> descending(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  const auto pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
  const auto neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc needs both classes");
  const auto idx = descending(scores);
  double area = 0.0, tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    double dtp = 0.0, dfp = 0.0;
    std::size_t j = i;
    for (; j < idx.size() && scores[idx[j]] == scores[idx[i]]; ++j) {
      (labels[idx[j]] != 0 ? dtp : dfp) += 1.0;
    }
    area += dfp * (tp + 0.5 * dtp);
    tp += dtp;
    fp += dfp;
    i = j;
  }
  return area / (pos * neg);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  check_lengths(scores.size(), labels.size());
  const auto pos = static_cast<double>(std::count_if(labels.begin(), labels.end(), [](int l) { return l != 0; }));
  if (pos == 0) throw std::invalid_argument("pr_auc needs at least one positive");
  const auto idx = descending(scores);
  double ap = 0.0, tp = 0.0, seen = 0.0;
  for (std::size_t i = 0; i < idx.size();) {
    double dtp = 0.0;
    std::size_t j = i;
    for (; j < idx.size() && scores[idx[j]] == scores[idx[i]]; ++j) {
      if (labels[idx[j]] != 0) dtp += 1.0;
      seen += 1.0;
    }
    tp += dtp;
    ap += (tp / seen) * (dtp / pos);
    i = j;
  }
  return ap;
}

Prf prf(std::span<const int> decisions, std::span<const int> labels) {
  check_lengths(decisions.size(), labels.size());
  Prf r;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const bool d = decisions[i] != 0, l = labels[i] != 0;
    if (d && l) ++r.tp;
    else if (d) ++r.fp;
    else if (l) ++r.fn;
    else ++r.tn;
  }
  r.precision = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_split: k must be >= 2");
  if (n < k) throw std::invalid_argument("kfold_split: fewer items than folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<Fold> folds(k);
  std::size_t start = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    for (std::size_t i = 0; i < n; ++i) {
      (i >= start && i < start + size ? folds[f].validation : folds[f].train).push_back(order[i]);
    }
    start += size;
  }
  return folds;
}

namespace {

nlohmann::json real_or_null(double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); }

double real_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  return {{"recall", recall},
          {"precision", precision},
          {"f1", f1},
          {"auprc", real_or_null(auprc)},
          {"auroc", real_or_null(auroc)},
          {"counts", {{"TP", tp}, {"FP", fp}, {"TN", tn}, {"FN", fn}}},
          {"n_windows_evaluated", n_windows_evaluated},
          {"config", {{"T", window_seconds}, {"N", n_windows}, {"arch", arch}}}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.recall = j.at("recall").get<double>();
  r.precision = j.at("precision").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.auprc = real_from(j.at("auprc"));
  r.auroc = real_from(j.at("auroc"));
  const auto& c = j.at("counts");
  r.tp = c.at("TP").get<std::size_t>();
  r.fp = c.at("FP").get<std::size_t>();
  r.tn = c.at("TN").get<std::size_t>();
  r.fn = c.at("FN").get<std::size_t>();
  r.n_windows_evaluated = j.value("n_windows_evaluated", std::size_t{0});
  const auto& cfg = j.at("config");
  r.window_seconds = cfg.at("T").get<double>();
  r.n_windows = cfg.at("N").get<int>();
  r.arch = cfg.at("arch").get<std::string>();
  return r;
}

MetricsReport evaluate(std::span<const ScoredWindow> scores, std::span<const Decision> decisions,
                       bool exclude_background) {
  if (scores.size() != decisions.size()) throw std::invalid_argument("evaluate: scores and decisions differ in length");
  std::vector<double> s;
  std::vector<int> labels, verdicts;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (exclude_background && scores[i].label == GroundTruth::Background) continue;
    s.push_back(scores[i].score);
    labels.push_back(scores[i].label == GroundTruth::Botnet ? 1 : 0);
    verdicts.push_back(decisions[i].verdict == Verdict::Malicious ? 1 : 0);
  }
  MetricsReport r;
  const Prf p = prf(verdicts, labels);
  r.precision = p.precision;
  r.recall = p.recall;
  r.f1 = p.f1;
  r.tp = p.tp;
  r.fp = p.fp;
  r.tn = p.tn;
  r.fn = p.fn;
  r.n_windows_evaluated = s.size();
  const std::size_t pos = p.tp + p.fn;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.auroc = pos > 0 && pos < s.size() ? roc_auc(s, labels) : nan;
  r.auprc = pos > 0 ? pr_auc(s, labels) : nan;
  return r;
}

std::string format_table(std::span<const MetricsReport> reports) {
  auto fmt = [](double v) {
    if (std::isnan(v)) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return std::string(buf);
  };
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-6s %8s %3s %8s %9s %8s %8s %8s %8s %8s %8s %8s\n", "arch",
                "T(s)", "N", "Recall", "Precision", "F1", "AUPRC", "AUROC", "TP", "FP", "TN", "FN");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-6s %8s %3d %8s %9s %8s %8s %8s %8zu %8zu %8zu %8zu\n",
                  r.arch.c_str(), format_real(r.window_seconds).c_str(), r.n_windows,
                  fmt(r.recall).c_str(), fmt(r.precision).c_str(), fmt(r.f1).c_str(),
                  fmt(r.auprc).c_str(), fmt(r.auroc).c_str(), r.tp, r.fp, r.tn, r.fn);
    out += line;
  }
  return out;
}

std::string score_histogram_csv(std::span<const ScoredWindow> scores, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("score_histogram_csv: bins must be positive");
  std::string out = "bin_lo,bin_hi,density_normal,density_botnet\n";
  if (scores.empty()) return out;
  double lo = scores.front().score, hi = lo;
  for (const auto& s : scores) {
    lo = std::min(lo, s.score);
    hi = std::max(hi, s.score);
  }
  if (!(hi > lo)) hi = lo + 1.0;
  const double width = (hi - lo) / static_cast<double>(bins);
  std::vector<double> normal(bins, 0.0), botnet(bins, 0.0);
  double n_normal = 0.0, n_botnet = 0.0;
  for (const auto& s : scores) {
    const auto b = std::min(bins - 1, static_cast<std::size_t>((s.score - lo) / width));
    if (s.label == GroundTruth::Botnet) {
      botnet[b] += 1.0;
      n_botnet += 1.0;
    } else {
      normal[b] += 1.0;
      n_normal += 1.0;
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    out += format_real(lo + static_cast<double>(b) * width) + ',' +
           format_real(lo + static_cast<double>(b + 1) * width) + ',' +
           format_real(n_normal > 0 ? normal[b] / (n_normal * width) : 0.0) + ',' +
           format_real(n_botnet > 0 ? botnet[b] / (n_botnet * width) : 0.0) + '\n';
  }
  return out;
}

}  // namespace flowrvae
