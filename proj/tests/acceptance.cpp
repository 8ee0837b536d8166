// SPDX-License-Identifier: Apache-2.0
// Acceptance checks, one PASS/FAIL/SKIP line per criterion. Criteria 7 and 8
// need the CTU-13 captures: set CTU13_MANIFEST to a scenario manifest with
// "train" and "test" lists (and RUN_FULL_SCALE=1 for the overnight run).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <string>

#include "flowrvae/eval.hpp"
#include "flowrvae/models.hpp"
#include "flowrvae/pipeline.hpp"
#include "flowrvae/synth.hpp"
#include "support/samplers.hpp"

using namespace flowrvae;

namespace {

int failures = 0;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(int id, const char* title, bool pass, const std::string& detail) {
  std::printf("[%s] %d %s: %s\n", pass ? "PASS" : "FAIL", id, title, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void skip(int id, const char* title, const std::string& why) {
  std::printf("[SKIP] %d %s: %s\n", id, title, why.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

std::vector<Tensor*> tensors(std::vector<std::pair<std::string, Tensor*>> named) {
  std::vector<Tensor*> out;
  for (auto& [_, t] : named) out.push_back(t);
  return out;
}

// 1 -----------------------------------------------------------------------------

void gradients() {
  Stopwatch sw;
  Rng rng(101);
  const double model_step = 1e-4;  // see test_models.cpp
  std::map<std::string, double> err;

  GruCell cell = GruCell::init(3, 4, rng);
  Tensor x = random_tensor({3}, rng, -1, 1), h0 = random_tensor({4}, rng, -1, 1);
  const Tensor w = random_tensor({4}, rng, -1, 1);
  err["gru cell"] = grad_check(
                        [&](Tape& t) {
                          const auto v = bind(t, cell);
                          return sum(mul(gru_cell(t.param(x), t.param(h0), v), t.constant(w)));
                        },
                        std::vector<Tensor*>{&cell.w_x, &cell.w_hru, &cell.w_hn, &cell.b, &x, &h0})
                        .max_rel_error;

  RvaeParams p = RvaeParams::init({8, 8, 4, 2}, rng);
  Tensor y = random_tensor({4, 8}, rng, 0, 1);
  const Tensor wm = random_tensor({4}, rng, -1, 1), eps = random_tensor({4}, rng, -1, 1);
  err["encoder"] = grad_check(
                       [&](Tape& t) {
                         auto [mu, lv] = rvae_encode(t, p, t.constant(y));
                         return add(sum(mul(mu, t.constant(wm))), sum(lv));
                       },
                       tensors(p.named()), model_step)
                       .max_rel_error;
  Tensor z = random_tensor({4}, rng, -1, 1);
  auto dec_params = tensors(p.named());
  dec_params.push_back(&z);
  err["decoder"] = grad_check(
                       [&](Tape& t) {
                         Var yv = t.constant(y);
                         return bce_sum(yv, rvae_decode(t, p, t.param(z), yv));
                       },
                       dec_params, model_step)
                       .max_rel_error;
  err["bce+kl loss"] = grad_check(
                           [&](Tape& t) {
                             Var yv = t.constant(y);
                             const auto fw = rvae_forward(t, p, yv, t.constant(eps));
                             return vae_loss(yv, fw.recon, fw.mu, fw.logvar, 0.5).total;
                           },
                           tensors(p.named()), model_step)
                           .max_rel_error;

  double worst = 0.0;
  std::string detail;
  for (const auto& [k, v] : err) {
    worst = std::max(worst, v);
    detail += fmt("%s %.2e, ", k.c_str(), v);
  }
  const double secs = sw.seconds();
  report(1, "gradient correctness", worst < 1e-4 && secs < 60.0,
         detail + fmt("max %.2e (< 1e-4), %.1f s (< 60 s)", worst, secs));
}

// 2 -----------------------------------------------------------------------------

void closed_forms() {
  const std::vector<double> zero(4, 0.0);
  const double kl = kl_divergence(zero, zero);
  const std::vector<double> half(25, 0.5);
  const double bce = anomaly_score(half, half);
  const double want = 25.0 * std::log(2.0);
  const double b0 = beta_schedule(0, 500, 1.0), b1 = beta_schedule(500, 500, 1.0),
               b2 = beta_schedule(100000, 500, 1.0);
  const bool pass = kl == 0.0 && std::abs(bce - want) <= 1e-9 && b0 == 0.0 && b1 == 1.0 && b2 == 1.0;
  report(2, "closed forms", pass,
         fmt("KL(0,0) = %g, BCE(0.5, F=25) - 25 ln 2 = %.1e, beta(0) = %g, beta(anneal) = %g, beta(1e5) = %g",
             kl, bce - want, b0, b1, b2));
}

// 3 -----------------------------------------------------------------------------

void oracles() {
  Rng rng(103);
  int exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(10));
      y[i] = rng.uniform() < 0.5;
    }
    y[0] = 1;
    y[1] = 0;
    double good = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (y[i] && !y[j]) {
          pairs += 1.0;
          good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    exact += roc_auc(s, y) == good / pairs;
  }
  int partitions = 0;
  for (std::size_t n : {5, 10, 37, 200}) {
    for (std::size_t k : {2, 5}) {
      const auto folds = kfold_split(n, k, n * 31 + k);
      std::vector<int> hits(n, 0);
      bool ok = true;
      for (const auto& f : folds) {
        for (auto i : f.validation) ++hits[i];
        ok = ok && f.train.size() + f.validation.size() == n;
      }
      ok = ok && std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; });
      partitions += ok;
    }
  }
  report(3, "oracle equivalence", exact == 100 && partitions == 8,
         fmt("roc_auc == pairwise oracle on %d/100 tied instances, %d/8 k-fold splits disjoint and covering",
             exact, partitions));
}

// 4 -----------------------------------------------------------------------------

void recovery() {
  Stopwatch sw;
  struct Case {
    PdfFamily family;
    std::vector<double> shape;
    double tolerance;
    bool must_select;
  };
  const std::vector<Case> cases{{PdfFamily::Gamma, {2.0}, 0.10, true},
                                {PdfFamily::GenLogistic, {2.0}, 0.10, true},
                                {PdfFamily::FoldedCauchy, {2.0}, 0.20, false},
                                {PdfFamily::Mielke, {3.0, 4.0}, 0.20, false},
                                {PdfFamily::Beta, {2.0, 5.0}, 0.10, true}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    double worst = 0.0;
    int selected = 0;
    const int seeds = 3;
    for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
      const auto x = testing::draw(c.family, c.shape, 0.0, 1.0, 10000, seed);
      const auto bf = best_fit(x);
      const auto own = std::find_if(bf.candidates.begin(), bf.candidates.end(),
                                    [&](const FittedPdf& f) { return f.family == c.family; });
      if (own == bf.candidates.end()) {
        worst = INFINITY;
        continue;
      }
      for (std::size_t i = 0; i < c.shape.size(); ++i)
        worst = std::max(worst, std::abs(own->params[i] - c.shape[i]) / c.shape[i]);
      selected += bf.best.family == c.family;
    }
    const bool ok = worst <= c.tolerance && (!c.must_select || selected == seeds);
    pass = pass && ok;
    detail += fmt("%s err %.3f (<= %.2f) selected %d/%d; ", std::string(to_string(c.family)).c_str(), worst,
                  c.tolerance, selected, seeds);
  }
  const double secs = sw.seconds();
  report(4, "distribution recovery", pass && secs < 120.0, detail + fmt("%.1f s (< 120 s)", secs));
}

// 5, 6 --------------------------------------------------------------------------

// Share of botnet host-windows that sit >= 3 normal standard deviations away
// from the normal mean in at least 3 features.
double botnet_deviation_share(const std::vector<FlowRecord>& flows) {
  VectorFlowSource src(flows);
  const auto aggs = aggregate_stream(src, 60.0);
  std::vector<double> mean(kNumFeatures, 0.0), var(kNumFeatures, 0.0);
  std::size_t n = 0;
  for (const auto& a : aggs) {
    if (a.label != GroundTruth::Normal) continue;
    const auto f = a.raw_features();
    ++n;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      const double d = f[i] - mean[i];
      mean[i] += d / n;
      var[i] += d * (f[i] - mean[i]);
    }
  }
  std::size_t bots = 0, deviating = 0;
  for (const auto& a : aggs) {
    if (a.label != GroundTruth::Botnet) continue;
    const auto f = a.raw_features();
    int count = 0;
    for (std::size_t i = 0; i < kNumFeatures; ++i) {
      const double sd = std::sqrt(var[i] / std::max<std::size_t>(n - 1, 1));
      const double dev = sd > 0.0 ? std::abs(f[i] - mean[i]) / sd : (f[i] != mean[i] ? INFINITY : 0.0);
      count += dev >= 3.0;
    }
    ++bots;
    deviating += count >= 3;
  }
  return bots ? static_cast<double>(deviating) / bots : 0.0;
}

void synthetic() {
  Stopwatch sw;
  SynthConfig train_cfg;
  train_cfg.seed = 11;
  SynthConfig test_cfg;
  test_cfg.seed = 22;
  test_cfg.subnet = 1;
  const auto train_flows = synth_flows(train_cfg), test_flows = synth_flows(test_cfg);
  const double share = botnet_deviation_share(test_flows);

  PipelineConfig cfg;
  cfg.train.hidden = 32;
  cfg.train.latent = 8;
  cfg.train.epochs = 50;
  cfg.train.lr = 0.01;
  cfg.train.batch_size = 8;
  cfg.train.seed = 7;
  auto r = run_experiment([&] { return std::make_unique<VectorFlowSource>(train_flows); },
                          [&] { return std::make_unique<VectorFlowSource>(test_flows); }, cfg);
  double mean_normal = 0.0, mean_bot = 0.0;
  std::size_t nn = 0, nb = 0;
  for (const auto& s : r.test_scores) {
    if (s.label == GroundTruth::Botnet) {
      mean_bot += s.score;
      ++nb;
    } else {
      mean_normal += s.score;
      ++nn;
    }
  }
  mean_normal /= std::max<std::size_t>(nn, 1);
  mean_bot /= std::max<std::size_t>(nb, 1);
  const double secs = sw.seconds();
  report(5, "synthetic end-to-end",
         r.report.auroc >= 0.90 && r.report.f1 >= 0.85 && share >= 0.9 && mean_bot > mean_normal && secs < 600.0,
         fmt("AUROC %.4f (>= 0.90), F1 %.4f (>= 0.85), botnet windows with >=3 features at >=3 sd: %.2f (>= 0.90), "
             "mean score botnet %.2f > normal %.2f, pdfs %s/%s, %.1f s (< 600 s)",
             r.report.auroc, r.report.f1, share, mean_bot, mean_normal,
             std::string(to_string(r.detector.model.pdf_normal.family)).c_str(),
             std::string(to_string(r.detector.model.pdf_botnet.family)).c_str(), secs));

  // 6: the same test flows through the batch path and the online detector
  Model& model = r.trained.model;
  const auto& det = r.detector.model;
  std::map<std::pair<std::string, std::int64_t>, Verdict> batch;
  for (std::size_t i = 0; i < r.test_scores.size(); ++i)
    batch[{r.test_scores[i].src_addr, r.test_scores[i].window_index}] = r.decisions[i].verdict;
  VectorFlowSource src(test_flows);
  std::size_t streamed = 0, agree = 0;
  run_stream(model, det, src, [&](const StreamRecord& rec) {
    ++streamed;
    const auto it = batch.find({rec.src_addr, rec.window_index});
    agree += it != batch.end() && it->second == rec.decision.verdict;
  });
  report(6, "batch/stream equivalence", streamed == batch.size() && agree == batch.size(),
         fmt("%zu/%zu host-window verdicts identical (%zu streamed)", agree, batch.size(), streamed));
}

// 7, 8 --------------------------------------------------------------------------

std::vector<FlowRecord> time_prefix(std::vector<FlowRecord> flows, double fraction) {
  if (flows.empty()) return flows;
  const auto t0 = flows.front().start_time.micros, t1 = flows.back().start_time.micros;
  const auto cut = t0 + static_cast<std::int64_t>(fraction * static_cast<double>(t1 - t0));
  flows.erase(std::find_if(flows.begin(), flows.end(), [&](const FlowRecord& f) { return f.start_time.micros > cut; }),
              flows.end());
  return flows;
}

void ctu13() {
  const char* manifest_path = std::getenv("CTU13_MANIFEST");
  if (!manifest_path) {
    skip(7, "CTU-13 full scale", "CTU13_MANIFEST not set (overnight run, see tools/reproduce_ctu13.sh)");
    skip(8, "CTU-13 scaled smoke", "CTU13_MANIFEST not set");
    return;
  }
  const auto m = ScenarioManifest::load(manifest_path);
  const auto train_files = m.files(m.train), test_files = m.files(m.test);
  auto factory = [](const std::vector<std::filesystem::path>& files) -> SourceFactory {
    return [files] { return std::make_unique<DatasetReader>(files, ParseOptions{}); };
  };

  {
    Stopwatch sw;
    const auto train = time_prefix(read_dataset(train_files, {}), 0.1);
    const auto test = time_prefix(read_dataset(test_files, {}), 0.1);
    PipelineConfig cfg;
    cfg.train.hidden = 64;
    cfg.train.latent = 16;
    cfg.train.epochs = 30;
    cfg.train.seed = 1;
    double auroc[2];
    for (Arch arch : {Arch::Rvae, Arch::Mlp}) {
      cfg.arch = arch;
      const auto r = run_experiment([&] { return std::make_unique<VectorFlowSource>(train); },
                                    [&] { return std::make_unique<VectorFlowSource>(test); }, cfg);
      auroc[arch == Arch::Mlp] = r.report.auroc;
    }
    const double secs = sw.seconds();
    report(8, "CTU-13 scaled smoke", auroc[0] >= auroc[1] - 0.02 && secs < 1800.0,
           fmt("RVAE AUROC %.4f >= MLP-VAE AUROC %.4f - 0.02, %.0f s (< 1800 s)", auroc[0], auroc[1], secs));
  }

  const char* full = std::getenv("RUN_FULL_SCALE");
  if (!full || std::string(full) != "1") {
    skip(7, "CTU-13 full scale", "set RUN_FULL_SCALE=1 for the overnight run");
    return;
  }
  PipelineConfig cfg;
  cfg.train.hidden = 512;
  cfg.train.latent = 100;
  cfg.train.epochs = 500;
  cfg.train.seed = 1;
  const auto sweep = window_sweep(factory(train_files), factory(test_files), {60.0, 300.0}, cfg);
  const auto& r60 = sweep[0].report;
  const auto& r300 = sweep[1].report;
  report(7, "CTU-13 full scale", r60.auroc >= 0.975 - 0.03 && r60.precision > r300.precision,
         fmt("T=60: AUROC %.4f (reference 0.975, >= 0.945), recall %.3f precision %.3f F1 %.3f AUPRC %.3f; "
             "T=300 precision %.3f (< T=60)",
             r60.auroc, r60.recall, r60.precision, r60.f1, r60.auprc, r300.precision));
}

}  // namespace

int main() {
  gradients();
  closed_forms();
  oracles();
  recovery();
  synthetic();
  ctu13();
  std::printf("%s\n", failures ? "ACCEPTANCE: FAIL" : "ACCEPTANCE: PASS");
  return failures ? 1 : 0;
}
