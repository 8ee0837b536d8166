// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "flowrvae/errors.hpp"
#include "flowrvae/detect.hpp"
#include "flowrvae/rng.hpp"
#include "support/samplers.hpp"

using namespace flowrvae;
using flowrvae::testing::draw;

namespace {

// Trapezoid over u in (0,1) with x = loc + scale * g(u); g maps the unit
// interval onto the family's standard support so that heavy tails are
// covered without truncation.
double integrate(PdfFamily f, const std::vector<double>& shape, double loc, double scale) {
  const std::size_t n = 100000;
  const bool bounded = f == PdfFamily::Beta;
  const bool real_line = f == PdfFamily::GenLogistic;
  auto g = [&](double u, double& dg) {
    if (bounded) {
      dg = 1.0;
      return u;
    }
    if (real_line) {
      dg = 1.0 / (u * (1.0 - u));
      return std::log(u / (1.0 - u));
    }
    dg = 1.0 / ((1.0 - u) * (1.0 - u));
    return u / (1.0 - u);
  };
  double total = 0.0, prev = 0.0;
  for (std::size_t i = 0; i <= n; ++i) {
    double u = static_cast<double>(i) / n;
    // open ends: the integrand has a finite limit there for these params
    u = std::clamp(u, 1e-12, 1.0 - 1e-12);
    double dg = 0.0;
    const double y = g(u, dg);
    const double v = pdf_eval(f, shape, loc, scale, loc + scale * y) * scale * dg;
    if (i > 0) total += 0.5 * (v + prev) / n;
    prev = v;
  }
  return total;
}

std::vector<double> random_shape(PdfFamily f, Rng& rng) {
  switch (f) {
    case PdfFamily::Gamma: return {rng.uniform(1.0, 6.0)};
    case PdfFamily::GenLogistic: return {rng.uniform(1.0, 5.0)};
    case PdfFamily::FoldedCauchy: return {rng.uniform(0.0, 4.0)};
    case PdfFamily::Mielke: return {rng.uniform(1.0, 5.0), rng.uniform(1.0, 6.0)};
    case PdfFamily::Beta: return {rng.uniform(1.0, 6.0), rng.uniform(1.0, 6.0)};
  }
  return {};
}

FittedPdf make(PdfFamily f, std::vector<double> shape, double loc = 0.0, double scale = 1.0) {
  FittedPdf p;
  p.family = f;
  p.params = std::move(shape);
  p.loc = loc;
  p.scale = scale;
  return p;
}

}  // namespace

TEST_CASE("pdf closed-form values") {
  CHECK(pdf_eval(PdfFamily::Gamma, std::vector<double>{1.0}, 0, 1, 0.0) == doctest::Approx(1.0));
  CHECK(pdf_eval(PdfFamily::Gamma, std::vector<double>{1.0}, 0, 1, 2.0) == doctest::Approx(std::exp(-2.0)));
  CHECK(pdf_eval(PdfFamily::Beta, std::vector<double>{1.0, 1.0}, 0, 1, 0.3) == doctest::Approx(1.0));
  CHECK(pdf_eval(PdfFamily::Beta, std::vector<double>{2.0, 1.0}, 0, 2, 1.0) == doctest::Approx(0.5));
  // GenLogistic c = 1 is the standard logistic: 1/4 at 0
  CHECK(pdf_eval(PdfFamily::GenLogistic, std::vector<double>{1.0}, 0, 1, 0.0) == doctest::Approx(0.25));
  // FoldedCauchy c = 0 is the half-Cauchy: 2/pi at 0
  CHECK(pdf_eval(PdfFamily::FoldedCauchy, std::vector<double>{0.0}, 0, 1, 0.0) == doctest::Approx(2.0 / M_PI));
  // Mielke k = s = 1: 1/(1+y)^2
  CHECK(pdf_eval(PdfFamily::Mielke, std::vector<double>{1.0, 1.0}, 0, 1, 1.0) == doctest::Approx(0.25));
}

TEST_CASE("pdf is zero outside the support") {
  CHECK(pdf_eval(PdfFamily::Gamma, std::vector<double>{2.0}, 1, 1, 0.5) == 0.0);
  CHECK(pdf_eval(PdfFamily::Beta, std::vector<double>{2.0, 2.0}, 0, 1, 1.5) == 0.0);
  CHECK(pdf_eval(PdfFamily::Mielke, std::vector<double>{2.0, 2.0}, 0, 1, -0.1) == 0.0);
  CHECK(pdf_eval(PdfFamily::FoldedCauchy, std::vector<double>{1.0}, 0, 1, -0.1) == 0.0);
}

TEST_CASE("invalid pdf parameters") {
  CHECK_THROWS_AS(pdf_eval(PdfFamily::Gamma, std::vector<double>{0.0}, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(pdf_eval(PdfFamily::Gamma, std::vector<double>{1.0}, 0, 0, 1), std::invalid_argument);
  CHECK_THROWS_AS(pdf_eval(PdfFamily::Beta, std::vector<double>{1.0}, 0, 1, 0.5), std::invalid_argument);
  CHECK_THROWS_AS(pdf_eval(PdfFamily::FoldedCauchy, std::vector<double>{-1.0}, 0, 1, 1), std::invalid_argument);
  CHECK_THROWS_AS(pdf_eval(PdfFamily::Mielke, std::vector<double>{1.0, -2.0}, 0, 1, 1), std::invalid_argument);
}

TEST_CASE("every density integrates to one") {
  Rng rng(31);
  for (auto f : kAllFamilies) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto shape = random_shape(f, rng);
      const double loc = rng.uniform(-3.0, 3.0), scale = rng.uniform(0.2, 5.0);
      CAPTURE(to_string(f));
      CAPTURE(trial);
      CHECK(std::abs(1.0 - integrate(f, shape, loc, scale)) < 1e-3);
    }
  }
}

TEST_CASE("gamma parameters are recovered") {
  const auto x = draw(PdfFamily::Gamma, {2.0}, 0.0, 1.0, 10000, 41);
  const auto fit = fit_family(PdfFamily::Gamma, x);
  CHECK(fit.params[0] >= 1.8);
  CHECK(fit.params[0] <= 2.2);
  CHECK(fit.scale >= 0.9);
  CHECK(fit.scale <= 1.1);
  CHECK(fit.sse >= 0.0);
  CHECK(fit.n_samples == 10000);
}

TEST_CASE("fitted supports cover every sample") {
  const auto x = draw(PdfFamily::Beta, {2.0, 3.0}, 5.0, 2.0, 2000, 43);
  for (auto f : kAllFamilies) {
    const auto fit = fit_family(f, x);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    if (f != PdfFamily::GenLogistic) CHECK(fit.loc < *lo);
    if (f == PdfFamily::Beta) CHECK(fit.loc + fit.scale > *hi);
    for (double v : x) REQUIRE(fit.pdf(v) > 0.0);
  }
}

TEST_CASE("fit preconditions") {
  const std::vector<double> same(500, 3.0);
  CHECK_THROWS_AS(fit_family(PdfFamily::Gamma, same), DataError);
  const auto few = draw(PdfFamily::Gamma, {2.0}, 0.0, 1.0, 50, 1);
  CHECK_THROWS_AS(fit_family(PdfFamily::Gamma, few), DataError);
  CHECK_THROWS_AS(best_fit(few), DataError);
  auto bad = draw(PdfFamily::Gamma, {2.0}, 0.0, 1.0, 200, 1);
  bad[7] = NAN;
  CHECK_THROWS_AS(fit_family(PdfFamily::Gamma, bad), DataError);
}

TEST_CASE("gamma fitting is scale equivariant") {
  const auto x = draw(PdfFamily::Gamma, {3.0}, 1.0, 2.0, 3000, 47);
  std::vector<double> cx = x;
  const double c = 7.5;
  for (auto& v : cx) v *= c;
  const auto a = fit_family(PdfFamily::Gamma, x), b = fit_family(PdfFamily::Gamma, cx);
  CHECK(b.params[0] == doctest::Approx(a.params[0]).epsilon(1e-3));
  CHECK(b.scale == doctest::Approx(c * a.scale).epsilon(1e-3));
  CHECK(b.loc == doctest::Approx(c * a.loc).epsilon(1e-3));
}

TEST_CASE("sse separates the true family from a mismatched one") {
  const auto big = draw(PdfFamily::Gamma, {2.0}, 0.0, 1.0, 1000000, 53);
  const std::vector<double> sub(big.begin(), big.begin() + 10000);
  const auto truth = make(PdfFamily::Gamma, {2.0});
  const auto beta = fit_family(PdfFamily::Beta, sub);
  const double s_true = sse(truth, big), s_beta = sse(beta, big);
  CHECK(s_true >= 0.0);
  CHECK(s_true < s_beta);
  CHECK(sse(fit_family(PdfFamily::Gamma, sub), big) < s_beta);
}

TEST_CASE("sse on a single-valued histogram is finite") {
  const std::vector<double> same(10, 2.0);
  const double s = sse(make(PdfFamily::Gamma, {2.0}), same);
  CHECK(std::isfinite(s));
  CHECK(s >= 0.0);
}

TEST_CASE("best fit picks beta for uniform data and respects the sse order") {
  Rng rng(59);
  std::vector<double> x(10000);
  for (auto& v : x) v = rng.uniform();
  const auto r = best_fit(x);
  CHECK(r.best.family == PdfFamily::Beta);
  CHECK(r.best.params[0] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(r.best.params[1] == doctest::Approx(1.0).epsilon(0.1));
  CHECK(r.candidates.size() == 5);
  for (const auto& c : r.candidates) {
    CHECK(c.sse >= 0.0);
    if (!is_degenerate(c)) CHECK(r.best.sse <= c.sse);
  }
}

TEST_CASE("fitted pdf json round trip") {
  auto p = make(PdfFamily::Mielke, {1.5, 2.25}, -0.125, 3.0);
  p.sse = 0.5;
  p.n_samples = 12;
  const auto q = FittedPdf::from_json(p.to_json());
  CHECK(q.family == p.family);
  CHECK(q.params == p.params);
  CHECK(q.loc == p.loc);
  CHECK(q.scale == p.scale);
  CHECK(q.sse == p.sse);
  CHECK(q.n_samples == 12);
  CHECK(p.to_json()["n"] == 12);
  for (auto f : kAllFamilies) CHECK(pdf_family_from_string(to_string(f)) == f);
}

TEST_CASE("classification rules") {
  DetectorModel det;
  det.pdf_normal = make(PdfFamily::Gamma, {1.0});       // exponential
  det.pdf_botnet = make(PdfFamily::Beta, {1.0, 1.0});   // uniform on [0,1]
  auto d = classify(0.5, det);
  CHECK(d.verdict == Verdict::Malicious);
  CHECK(d.likelihood_botnet == doctest::Approx(1.0));
  CHECK(d.likelihood_normal == doctest::Approx(std::exp(-0.5)));
  CHECK(!d.out_of_support);
  CHECK(classify(2.0, det).verdict == Verdict::NonMalicious);

  d = classify(-1.0, det);
  CHECK(d.verdict == Verdict::Malicious);
  CHECK(d.out_of_support);
  det.tie_rule = TieRule::NonMalicious;
  CHECK(classify(-1.0, det).verdict == Verdict::NonMalicious);

  det.pdf_botnet = det.pdf_normal;
  CHECK(classify(0.7, det).verdict == Verdict::NonMalicious);
  det.tie_rule = TieRule::Malicious;
  CHECK(classify(0.7, det).verdict == Verdict::Malicious);
}

TEST_CASE("verdicts follow the sign of the likelihood difference") {
  DetectorModel det;
  det.pdf_normal = make(PdfFamily::Gamma, {2.0}, 0.0, 1.0);
  det.pdf_botnet = make(PdfFamily::GenLogistic, {2.0}, 4.0, 0.7);
  for (double x = -2.0; x < 12.0; x += 0.01) {
    const auto d = classify(x, det);
    const double diff = det.pdf_botnet.pdf(x) - det.pdf_normal.pdf(x);
    CHECK((d.verdict == Verdict::Malicious) == (diff >= 0.0));
    CHECK(classify(x, det).verdict == d.verdict);
  }
}

TEST_CASE("detector file round trip") {
  DetectorModel det;
  det.pdf_normal = make(PdfFamily::Gamma, {2.5}, -0.5, 1.25);
  det.pdf_botnet = make(PdfFamily::Beta, {2.0, 3.0}, 1.0, 4.0);
  det.tie_rule = TieRule::NonMalicious;
  det.feature_names = {"a", "b"};
  const auto path = (std::filesystem::temp_directory_path() / "flowrvae_detector.json").string();
  det.save(path);
  const auto back = DetectorModel::load(path);
  CHECK(back.tie_rule == TieRule::NonMalicious);
  CHECK(back.pdf_botnet.params == det.pdf_botnet.params);
  CHECK(back.pdf_normal.loc == det.pdf_normal.loc);
  CHECK(back.feature_names == det.feature_names);
  CHECK(back.to_json() == det.to_json());
  std::filesystem::remove(path);
}
