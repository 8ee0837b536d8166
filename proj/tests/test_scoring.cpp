// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "flowrvae/errors.hpp"
#include "flowrvae/scoring.hpp"

using namespace flowrvae;

namespace {

Model small_model(std::size_t f, std::uint64_t seed) {
  Rng rng(seed);
  Model m;
  m.rvae = RvaeParams::init({f, 5, 3, 2}, rng);
  for (std::size_t i = 0; i < f; ++i) m.meta.feature_names.push_back("f" + std::to_string(i));
  return m;
}

Sequence random_sequence(std::size_t len, std::size_t f, std::int64_t window, Rng& rng) {
  Sequence s;
  for (std::size_t i = 0; i < len; ++i) {
    FeatureRow r;
    r.src_addr = "h" + std::to_string(window) + "." + std::to_string(i);
    r.window_index = window;
    r.first_seen = Timestamp{static_cast<std::int64_t>(i)};
    r.label = i % 2 ? GroundTruth::Botnet : GroundTruth::Normal;
    for (std::size_t j = 0; j < f; ++j) r.features.push_back(rng.uniform());
    s.elements.push_back(r);
  }
  return s;
}

// Entropy of y, the lower bound of the cross-entropy against any prediction.
double entropy(const std::vector<double>& y) {
  double h = 0.0;
  for (double v : y) {
    const double p = std::clamp(v, kLogClamp, 1.0 - kLogClamp);
    h -= v * std::log(p) + (1.0 - v) * std::log(1.0 - p);
  }
  return h;
}

}  // namespace

TEST_CASE("closed-form scores") {
  const std::vector<double> y(25, 0.3), half(25, 0.5);
  CHECK(anomaly_score(y, half) == doctest::Approx(25.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(anomaly_score(half, half) == doctest::Approx(17.328679513998633).epsilon(1e-12));
  CHECK(anomaly_score(std::vector<double>{1, 0}, std::vector<double>{0.9, 0.2}) ==
        doctest::Approx(-(std::log(0.9) + std::log(0.8))).epsilon(1e-12));
  CHECK(anomaly_score(std::vector<double>{1, 0}, std::vector<double>{0.9, 0.2}) == doctest::Approx(0.3285).epsilon(1e-4));
  const std::vector<double> bin{1, 0, 0, 1};
  CHECK(anomaly_score(bin, bin) < 1e-6);
  CHECK(anomaly_score(bin, bin) >= 0.0);
}

TEST_CASE("invalid score inputs") {
  CHECK_THROWS_AS(anomaly_score(std::vector<double>{NAN}, std::vector<double>{0.5}), NumericError);
  CHECK_THROWS_AS(anomaly_score(std::vector<double>{0.5}, std::vector<double>{INFINITY}), NumericError);
  CHECK_THROWS_AS(anomaly_score(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5}), ShapeError);
}

TEST_CASE("cross-entropy is bounded below by the entropy") {
  Rng rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> y(8), p(8);
    for (auto& v : y) v = rng.uniform() < 0.2 ? std::round(rng.uniform()) : rng.uniform();
    for (auto& v : p) v = rng.uniform();
    CHECK(anomaly_score(y, p) >= entropy(y) - 1e-12);
  }
}

TEST_CASE("scores depend only on the element's own sequence") {
  Model m = small_model(4, 1);
  Rng rng(2);
  std::vector<Sequence> seqs;
  for (int w = 0; w < 5; ++w) seqs.push_back(random_sequence(3, 4, w, rng));
  const auto base = score_dataset(m, seqs);
  REQUIRE(base.size() == 15);
  std::vector<Sequence> shuffled = seqs;
  rng.shuffle(shuffled);
  CHECK(score_dataset(m, shuffled) == base);
  for (const auto& s : base) {
    CHECK(std::isfinite(s.score));
    CHECK(s.score >= 0.0);
  }
}

TEST_CASE("duplicated sequences score identically") {
  Model m = small_model(4, 3);
  Rng rng(4);
  const Sequence s = random_sequence(4, 4, 0, rng);
  const auto a = score_sequence(m, s), b = score_sequence(m, s);
  CHECK(a == b);
}

TEST_CASE("only emitted elements are scored") {
  Model m = small_model(4, 5);
  Rng rng(6);
  Sequence s = random_sequence(3, 4, 0, rng);
  s.elements[2].window_index = 1;
  s.emit_window = 1;
  const auto out = score_sequence(m, s);
  REQUIRE(out.size() == 1);
  CHECK(out[0].src_addr == s.elements[2].src_addr);
}

TEST_CASE("feature layout is checked") {
  Model m = small_model(4, 7);
  CHECK_NOTHROW(check_feature_layout(m, {"f0", "f1", "f2", "f3"}));
  CHECK_THROWS_AS(check_feature_layout(m, {"f0", "f1", "f3", "f2"}), DataError);
  CHECK_THROWS_AS(check_feature_layout(m, {"f0"}), DataError);
}

TEST_CASE("scores file round trip") {
  std::vector<ScoredWindow> scores{{"10.0.0.1", 3, Timestamp{1313658000250000}, 0.1 + 0.2, GroundTruth::Botnet},
                                   {"10.0.0.2", 4, Timestamp{1313658060000001}, 17.5, GroundTruth::Background}};
  const auto path = (std::filesystem::temp_directory_path() / "flowrvae_scores.csv").string();
  write_scores(path, scores);
  CHECK(read_scores(path) == scores);
  std::filesystem::remove(path);
}
