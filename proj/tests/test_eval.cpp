// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <set>

#include "flowrvae/eval.hpp"
#include "flowrvae/rng.hpp"

using namespace flowrvae;

namespace {

// Fraction of (positive, negative) pairs ranked correctly, ties count half.
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

}  // namespace

TEST_CASE("roc auc examples") {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  CHECK(roc_auc(s, std::vector<int>{1, 1, 0, 0}) == 1.0);
  CHECK(roc_auc(s, std::vector<int>{1, 0, 1, 0}) == 0.75);
  CHECK(roc_auc(std::vector<double>{0.4, 0.4, 0.4}, std::vector<int>{1, 0, 1}) == 0.5);
  CHECK_THROWS_AS(roc_auc(s, std::vector<int>{1, 1, 1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(roc_auc(s, std::vector<int>{0, 0, 0, 0}), std::invalid_argument);
}

TEST_CASE("roc auc equals the pairwise oracle") {
  Rng rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(12)) / 4.0;  // many ties
      y[i] = rng.uniform() < 0.4;
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(roc_auc(s, y) == pairwise_auc(s, y));
  }
}

TEST_CASE("area metrics ignore a constant shift") {
  Rng rng(62);
  std::vector<double> s(300), t(300);
  std::vector<int> y(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    y[i] = rng.uniform() < 0.3;
    s[i] = std::round((rng.normal() + y[i]) * 8.0) / 8.0;
    t[i] = s[i] + 1000.0;
  }
  CHECK(roc_auc(s, y) == roc_auc(t, y));
  CHECK(pr_auc(s, y) == pr_auc(t, y));
}

TEST_CASE("pr auc examples") {
  CHECK(pr_auc(std::vector<double>{0.9, 0.8, 0.3}, std::vector<int>{1, 1, 0}) == 1.0);
  CHECK(pr_auc(std::vector<double>{0.9, 0.8}, std::vector<int>{0, 1}) == 0.5);
  // tied pair at the top: one threshold with precision 1/2, recall 1/2
  CHECK(pr_auc(std::vector<double>{0.5, 0.5, 0.1}, std::vector<int>{1, 0, 1}) ==
        doctest::Approx(0.5 * 0.5 + 2.0 / 3.0 * 0.5));
  CHECK_THROWS_AS(pr_auc(std::vector<double>{0.1, 0.2}, std::vector<int>{0, 0}), std::invalid_argument);
}

TEST_CASE("pr auc of random scores is the positive rate") {
  Rng rng(63);
  std::vector<double> s(10000);
  std::vector<int> y(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = rng.uniform();
    y[i] = rng.uniform() < 0.5;
  }
  CHECK(std::abs(pr_auc(s, y) - 0.5) < 0.05);
}

TEST_CASE("precision, recall and f1") {
  const std::vector<int> labels{1, 0, 1, 0, 1, 0};
  auto r = prf(labels, labels);
  CHECK(r.precision == 1.0);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == 1.0);
  r = prf(std::vector<int>(6, 1), labels);
  CHECK(r.precision == 0.5);
  CHECK(r.recall == 1.0);
  CHECK(r.f1 == doctest::Approx(2.0 / 3.0));
  r = prf(std::vector<int>(6, 0), labels);
  CHECK(r.precision == 0.0);
  CHECK(r.recall == 0.0);
  CHECK(r.f1 == 0.0);
  CHECK(r.tp + r.fp + r.tn + r.fn == 6);
  CHECK_THROWS(prf(std::vector<int>{1}, labels));
}

TEST_CASE("k-fold partitions") {
  const auto folds = kfold_split(10, 5, 3);
  REQUIRE(folds.size() == 5);
  for (const auto& f : folds) {
    CHECK(f.validation.size() == 2);
    CHECK(f.train.size() == 8);
  }
  const auto again = kfold_split(10, 5, 3);
  for (std::size_t i = 0; i < 5; ++i) CHECK(folds[i].validation == again[i].validation);

  for (std::size_t n : {7, 23, 100}) {
    const auto fs = kfold_split(n, 4, 9);
    std::set<std::size_t> seen;
    std::size_t lo = n, hi = 0;
    for (const auto& f : fs) {
      lo = std::min(lo, f.validation.size());
      hi = std::max(hi, f.validation.size());
      for (auto i : f.validation) CHECK(seen.insert(i).second);
      std::set<std::size_t> tr(f.train.begin(), f.train.end());
      for (auto i : f.validation) CHECK(!tr.count(i));
      CHECK(tr.size() + f.validation.size() == n);
    }
    CHECK(seen.size() == n);
    CHECK(hi - lo <= 1);
  }
  CHECK_THROWS(kfold_split(3, 5, 1));
  CHECK_THROWS(kfold_split(10, 1, 1));
}

TEST_CASE("evaluate over host-windows") {
  std::vector<ScoredWindow> s{{"a", 0, {}, 5.0, GroundTruth::Botnet},
                              {"b", 0, {}, 1.0, GroundTruth::Normal},
                              {"c", 0, {}, 2.0, GroundTruth::Background},
                              {"d", 1, {}, 4.0, GroundTruth::Botnet}};
  std::vector<Decision> d(4);
  d[0].verdict = Verdict::Malicious;
  d[2].verdict = Verdict::Malicious;
  auto r = evaluate(s, d);
  CHECK(r.tp == 1);
  CHECK(r.fp == 1);
  CHECK(r.fn == 1);
  CHECK(r.tn == 1);
  CHECK(r.auroc == 1.0);
  CHECK(r.n_windows_evaluated == 4);
  r = evaluate(s, d, true);
  CHECK(r.n_windows_evaluated == 3);
  CHECK(r.precision == 1.0);
  CHECK(r.f1 == doctest::Approx(2.0 * 0.5 / 1.5));

  const auto back = MetricsReport::from_json(r.to_json());
  CHECK(back.f1 == r.f1);
  CHECK(back.tp == r.tp);
  CHECK(r.to_json()["config"]["arch"] == "rvae");
  const auto table = format_table(std::vector<MetricsReport>{r, r});
  CHECK(table.find("F1") != std::string::npos);
}

TEST_CASE("undefined area metrics are null") {
  std::vector<ScoredWindow> s{{"a", 0, {}, 5.0, GroundTruth::Normal}, {"b", 0, {}, 1.0, GroundTruth::Normal}};
  const auto r = evaluate(s, std::vector<Decision>(2));
  CHECK(std::isnan(r.auroc));
  CHECK(r.to_json()["auroc"].is_null());
  CHECK(std::isnan(MetricsReport::from_json(r.to_json()).auroc));
}

TEST_CASE("score histogram csv") {
  std::vector<ScoredWindow> s;
  for (int i = 0; i < 20; ++i) s.push_back({"h", i, {}, static_cast<double>(i), i < 5 ? GroundTruth::Botnet : GroundTruth::Normal});
  const auto csv = score_histogram_csv(s, 4);
  CHECK(csv.rfind("bin_lo,bin_hi,density_normal,density_botnet\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
