// SPDX-License-Identifier: Apache-2.0
/**
 * @file   flowrvae_main.cpp
 * @brief  Command-line driver: synth, preprocess, train, score, fitpdf,
 *         detect, evaluate, sweep and stream.
 *
 * Exit codes: 0 ok, 1 usage, 2 data error, 3 numeric failure. Every option
 * can also be given in the file passed to --config (TOML/INI, one section
 * per subcommand).
 */
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flowrvae/errors.hpp"
#include "flowrvae/pipeline.hpp"
#include "flowrvae/synth.hpp"
#include "flowrvae/util.hpp"

namespace fs = std::filesystem;
using namespace flowrvae;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

/// Flow inputs: explicit files, or scenario ids resolved through a manifest.
struct FlowInputs {
  std::vector<std::string> files;
  std::string manifest;
  std::vector<std::string> scenarios;
  bool strict = false;

  void add_to(CLI::App* app, const std::string& prefix = "") {
    const std::string p = prefix.empty() ? "" : prefix + "-";
    app->add_option("--" + p + "input", files, "Flow CSV files ('-' reads standard input)");
    app->add_option("--" + (prefix.empty() ? std::string("scenario-filter") : p + "scenarios"), scenarios,
                    "Scenario ids to read from --manifest")
        ->delimiter(',');
    if (prefix.empty()) {
      app->add_option("--manifest", manifest, "Scenario manifest JSON");
      app->add_flag("--strict", strict, "Abort on the first malformed row");
    }
  }

  std::vector<fs::path> paths() const {
    std::vector<fs::path> out(files.begin(), files.end());
    if (!scenarios.empty()) {
      if (manifest.empty()) throw CLI::ValidationError("--scenario-filter needs --manifest");
      for (auto& p : ScenarioManifest::load(manifest).files(scenarios)) out.push_back(p);
    }
    if (out.empty()) throw CLI::ValidationError("no flow input given");
    return out;
  }

  /// Sorted merged source, or a plain reader over standard input.
  std::unique_ptr<FlowSource> open() const {
    ParseOptions opts{strict};
    if (files.size() == 1 && files[0] == "-" && scenarios.empty()) {
      return std::make_unique<CsvFlowSource>(std::cin, opts, "<stdin>");
    }
    return std::make_unique<DatasetReader>(paths(), opts);
  }

  std::vector<std::string> hashed_paths() const {
    std::vector<std::string> out;
    if (files.size() == 1 && files[0] == "-") return out;
    for (auto& p : paths()) out.push_back(p.string());
    return out;
  }
};

void report_parse_stats(FlowSource& src) {
  if (auto* r = dynamic_cast<DatasetReader*>(&src)) {
    for (const auto& s : r->stats()) {
      std::cerr << s.path << ": " << s.records << " flows, " << s.errors << " malformed rows skipped"
                << (s.resorted ? ", re-sorted" : "") << "\n";
    }
  } else if (auto* c = dynamic_cast<CsvFlowSource*>(&src)) {
    std::cerr << c->stats().path << ": " << c->stats().records << " flows, " << c->stats().errors
              << " malformed rows skipped\n";
  }
}

std::string manifest_path(const std::string& out) { return out + ".manifest.json"; }

FeatureEncoding encoding_for(const std::string& format, const std::string& path) {
  if (format == "csv") return FeatureEncoding::Csv;
  if (format == "binary") return FeatureEncoding::Binary;
  return fs::path(path).extension() == ".bin" ? FeatureEncoding::Binary : FeatureEncoding::Csv;
}

struct TrainOptions {
  std::string arch = "rvae";
  bool full_scale = false;
  std::string epoch_log;
};

void add_train_options(CLI::App* app, PipelineConfig& cfg, TrainOptions& t) {
  app->add_option("--arch", t.arch, "rvae or mlp")->check(CLI::IsMember({"rvae", "mlp"}));
  app->add_option("--epochs", cfg.train.epochs)->capture_default_str();
  app->add_option("--batch-size", cfg.train.batch_size)->capture_default_str();
  app->add_option("--lr", cfg.train.lr)->capture_default_str();
  app->add_option("--anneal-steps", cfg.train.anneal_steps)->capture_default_str();
  app->add_option("--beta-max", cfg.train.beta_max)->capture_default_str();
  app->add_option("--seed", cfg.train.seed)->capture_default_str();
  app->add_option("--grad-clip", cfg.train.grad_clip)->capture_default_str();
  app->add_option("--hidden", cfg.train.hidden, "Hidden units H")->capture_default_str();
  app->add_option("--latent", cfg.train.latent, "Latent size D")->capture_default_str();
  app->add_option("--mlp-widths", cfg.train.mlp_widths, "MLP hidden widths (default H,H,2H)")->delimiter(',');
  app->add_option("--kfold", cfg.kfold, "Select the best of k fold models by validation AUPRC (0 = off)");
  app->add_option("--stride", cfg.stride, "Training span stride in windows (0 = N)");
  app->add_flag("--full-scale", t.full_scale, "H=512, D=100, 500 epochs, MLP widths 512,512,1024");
  app->add_flag("--verbose", cfg.train.verbose, "Per-epoch progress on stderr");
}

void apply_train_options(PipelineConfig& cfg, const TrainOptions& t) {
  cfg.arch = arch_from_string(t.arch);
  if (t.full_scale) {
    cfg.train.hidden = 512;
    cfg.train.latent = 100;
    cfg.train.epochs = 500;
    cfg.train.mlp_widths = {512, 512, 1024};
  }
}

void add_window_options(CLI::App* app, PreprocessConfig& pre) {
  app->add_option("-T,--window-seconds", pre.window_seconds, "Window duration T")->capture_default_str();
  app->add_option("-N,--n-windows", pre.n_windows, "Windows per sequence N")->capture_default_str();
  app->add_option("--l-max", pre.l_max, "Maximum sequence length")->capture_default_str();
  app->add_flag("--log1p", pre.log1p, "log(1+x) before min-max scaling");
}

void add_fit_options(CLI::App* app, FitOptions& fit, std::string& tie_rule) {
  app->add_option("--bins", fit.bins, "Histogram bins for SSE")->capture_default_str();
  app->add_option("--min-samples", fit.min_samples)->capture_default_str();
  app->add_option("--tie-rule", tie_rule, "Verdict when both likelihoods are equal")
      ->check(CLI::IsMember({"malicious", "non-malicious"}));
}

void write_epoch_log(const std::string& path, const std::vector<EpochLog>& log) {
  std::string out = "epoch,loss,bce,kl,beta,grad_norm,updates\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + ',' + format_real(e.loss) + ',' + format_real(e.bce) + ',' +
           format_real(e.kl) + ',' + format_real(e.beta) + ',' + format_real(e.grad_norm) + ',' +
           std::to_string(e.updates) + '\n';
  }
  write_text_file(path, out);
}

void print_fit_report(const BestFit& fit, const char* which) {
  std::cerr << which << " scores: best fit " << to_string(fit.best.family) << " (SSE " << fit.best.sse << ")\n";
  for (const auto& c : fit.candidates) {
    std::cerr << "  " << to_string(c.family) << " SSE " << c.sse << (is_degenerate(c) ? " degenerate" : "") << "\n";
  }
  for (const auto& w : fit.warnings) std::cerr << "  warning: " << w << "\n";
}

nlohmann::json fit_report(const BestFit& fit) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : fit.candidates) arr.push_back(c.to_json());
  return {{"best", fit.best.to_json()}, {"candidates", arr}, {"warnings", fit.warnings}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flow-based botnet detection with a recurrent variational autoencoder"};
  app.set_config("--config", "", "Read options from a TOML/INI file");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  PipelineConfig cfg;
  TrainOptions topts;
  std::string tie_rule = "malicious";
  std::string context = "trailing";
  std::string out, model_path, detector_path, features_path, scores_path, format = "auto";
  std::string normalizer_path, table_path, decisions_path, hist_path;
  FlowInputs inputs, train_inputs, test_inputs;
  SynthConfig synth;
  std::vector<double> durations = {5, 60, 300};

  // synth
  auto* c_synth = app.add_subcommand("synth", "Write a labelled synthetic train/test flow pair");
  c_synth->add_option("--out-dir", out, "Output directory")->required();
  c_synth->add_option("--seed", synth.seed)->capture_default_str();
  c_synth->add_option("--windows", synth.windows)->capture_default_str();
  c_synth->add_option("-T,--window-seconds", synth.window_seconds)->capture_default_str();
  c_synth->add_option("--normal-hosts", synth.normal_hosts)->capture_default_str();
  c_synth->add_option("--botnet-hosts", synth.botnet_hosts)->capture_default_str();
  c_synth->add_option("--background-hosts", synth.background_hosts)->capture_default_str();

  // preprocess
  auto* c_pre = app.add_subcommand("preprocess", "Aggregate flows into normalized host-window features");
  inputs.add_to(c_pre);
  c_pre->add_option("--out", out, "Features file (.csv or .bin)")->required();
  c_pre->add_option("--format", format, "csv, binary or auto (by extension)")
      ->check(CLI::IsMember({"auto", "csv", "binary"}));
  c_pre->add_option("--normalizer", normalizer_path,
                    "Reuse the normalizer of a model or features file instead of fitting one");
  add_window_options(c_pre, cfg.pre);

  // train
  auto* c_train = app.add_subcommand("train", "Train an RVAE or MLP-VAE on non-malicious features");
  c_train->add_option("--features", features_path)->required();
  c_train->add_option("--out", out, "Model JSON")->required();
  c_train->add_option("--epoch-log", topts.epoch_log, "Per-epoch loss CSV");
  add_train_options(c_train, cfg, topts);

  // score
  auto* c_score = app.add_subcommand("score", "Reconstruction-error scores per host-window");
  c_score->add_option("--model", model_path)->required();
  c_score->add_option("--features", features_path)->required();
  c_score->add_option("--out", out, "Scores CSV")->required();
  c_score->add_option("--context", context, "trailing or span")->check(CLI::IsMember({"trailing", "span"}));

  // fitpdf
  auto* c_fit = app.add_subcommand("fitpdf", "Fit normal and botnet score densities");
  c_fit->add_option("--scores", scores_path, "Scores of the training split")->required();
  c_fit->add_option("--out", out, "Detector JSON")->required();
  c_fit->add_option("--model", model_path, "Model whose feature layout the detector is bound to");
  add_fit_options(c_fit, cfg.fit, tie_rule);

  // detect
  auto* c_detect = app.add_subcommand("detect", "Batch classification of host-windows");
  c_detect->add_option("--model", model_path)->required();
  c_detect->add_option("--detector", detector_path)->required();
  c_detect->add_option("--features", features_path, "Features file (alternative to flow input)");
  inputs.add_to(c_detect);
  c_detect->add_option("--out", out, "Decisions CSV")->required();
  c_detect->add_option("--context", context, "trailing or span")->check(CLI::IsMember({"trailing", "span"}));

  // evaluate
  auto* c_eval = app.add_subcommand("evaluate", "Metrics from a decisions file");
  c_eval->add_option("--decisions", decisions_path)->required();
  c_eval->add_option("--out", out, "Metrics JSON")->required();
  c_eval->add_option("--table", table_path, "Also write the aligned text table here");
  c_eval->add_option("--histogram", hist_path, "Score histogram CSV");
  c_eval->add_flag("--exclude-background", cfg.exclude_background, "Evaluate Normal and Botnet windows only");
  c_eval->add_option("-T,--window-seconds", cfg.pre.window_seconds, "Echoed in the report");
  c_eval->add_option("-N,--n-windows", cfg.pre.n_windows, "Echoed in the report");
  c_eval->add_option("--arch", topts.arch, "Echoed in the report");

  // sweep
  auto* c_sweep = app.add_subcommand("sweep", "Full pipeline per window duration");
  train_inputs.add_to(c_sweep, "train");
  test_inputs.add_to(c_sweep, "test");
  c_sweep->add_option("--manifest", inputs.manifest, "Scenario manifest JSON");
  c_sweep->add_flag("--strict", inputs.strict);
  c_sweep->add_option("--durations", durations, "Window durations in seconds")->delimiter(',')->capture_default_str();
  c_sweep->add_option("--out-dir", out)->required();
  c_sweep->add_option("-N,--n-windows", cfg.pre.n_windows)->capture_default_str();
  c_sweep->add_option("--l-max", cfg.pre.l_max)->capture_default_str();
  c_sweep->add_flag("--log1p", cfg.pre.log1p);
  c_sweep->add_option("--context", context)->check(CLI::IsMember({"trailing", "span"}));
  c_sweep->add_flag("--exclude-background", cfg.exclude_background);
  add_train_options(c_sweep, cfg, topts);
  add_fit_options(c_sweep, cfg.fit, tie_rule);

  // stream
  auto* c_stream = app.add_subcommand("stream", "Online detection; JSON lines on standard output");
  c_stream->add_option("--model", model_path)->required();
  c_stream->add_option("--detector", detector_path)->required();
  inputs.add_to(c_stream);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    cfg.tie_rule = tie_rule_from_string(tie_rule);
    cfg.context = context_from_string(context);
    RunManifest manifest;
    manifest.command = app.get_subcommands().front()->get_name();

    if (c_synth->parsed()) {
      fs::create_directories(out);
      SynthConfig test = synth;
      test.seed = synth.seed + 1000003;
      test.subnet = 1;
      const auto train_path = (fs::path(out) / "train.binetflow").string();
      const auto test_path = (fs::path(out) / "test.binetflow").string();
      write_flows(train_path, synth_flows(synth));
      write_flows(test_path, synth_flows(test));
      manifest.seed = synth.seed;
      manifest.config = {{"seed", synth.seed}, {"windows", synth.windows}, {"T", synth.window_seconds},
                         {"normal_hosts", synth.normal_hosts}, {"botnet_hosts", synth.botnet_hosts},
                         {"background_hosts", synth.background_hosts}};
      const auto scenarios_path = (fs::path(out) / "scenarios.json").string();
      {
        const nlohmann::json sj = {{"scenarios", {{"train", {"train.binetflow"}}, {"test", {"test.binetflow"}}}},
                                   {"train", {"train"}},
                                   {"test", {"test"}}};
        std::ofstream f(scenarios_path);
        f << sj.dump(2) << "\n";
        if (!f) throw DataError("cannot write '" + scenarios_path + "'");
      }
      manifest.outputs = {train_path, test_path, scenarios_path};
      manifest.write((fs::path(out) / "synth.manifest.json").string());
      std::cerr << "wrote " << train_path << " and " << test_path << "\n";
    } else if (c_pre->parsed()) {
      auto src = inputs.open();
      std::optional<Normalizer> nz;
      if (!normalizer_path.empty()) nz = load_normalizer(normalizer_path);
      const auto table = preprocess(*src, cfg.pre, nz);
      report_parse_stats(*src);
      write_features(out, table, encoding_for(format, out));
      std::cerr << table.rows.size() << " host-windows from " << table.header.n_flows << " flows\n";
      manifest.config = {{"T", cfg.pre.window_seconds}, {"N", cfg.pre.n_windows}, {"L_max", cfg.pre.l_max},
                         {"log1p", cfg.pre.log1p}, {"normalizer", normalizer_path}, {"strict", inputs.strict}};
      manifest.inputs = inputs.hashed_paths();
      if (!normalizer_path.empty()) manifest.inputs.push_back(normalizer_path);
      manifest.outputs = {out};
      manifest.write(manifest_path(out));
    } else if (c_train->parsed()) {
      apply_train_options(cfg, topts);
      const auto table = read_features(features_path);
      cfg.pre.window_seconds = table.header.window_seconds;
      cfg.pre.n_windows = table.header.n_windows;
      cfg.pre.l_max = table.header.l_max;
      std::vector<FoldSummary> folds;
      auto result = train_model(table, cfg, &folds);
      result.model.save(out);
      if (!topts.epoch_log.empty()) write_epoch_log(topts.epoch_log, result.log);
      for (const auto& f : folds) {
        std::cerr << "fold " << f.fold << ": validation AUPRC " << f.auprc << ", mean score " << f.mean_score
                  << (f.selected ? " (selected)" : "") << "\n";
      }
      manifest.seed = cfg.train.seed;
      manifest.config = cfg.to_json();
      manifest.inputs = {features_path};
      manifest.outputs = {out};
      manifest.write(manifest_path(out));
      if (!result.abort_reason.empty()) {
        std::cerr << "error: training aborted (" << result.abort_reason
                  << "); last good parameters saved to " << out << "\n";
        return kExitNumeric;
      }
      std::cerr << "final loss " << result.log.back().loss << " after " << result.log.back().updates
                << " updates\n";
    } else if (c_score->parsed()) {
      auto model = Model::load(model_path);
      const auto table = read_features(features_path);
      const auto scores = score_table(model, table, cfg.context);
      write_scores(out, scores);
      manifest.config = {{"context", context}};
      manifest.inputs = {model_path, features_path};
      manifest.outputs = {out};
      manifest.write(manifest_path(out));
    } else if (c_fit->parsed()) {
      const auto scores = read_scores(scores_path);
      auto fit = fit_detector(scores, cfg.fit, cfg.tie_rule);
      if (!model_path.empty()) fit.model.feature_names = Model::load(model_path).meta.feature_names;
      fit.model.save(out);
      print_fit_report(fit.normal, "normal");
      print_fit_report(fit.botnet, "botnet");
      manifest.config = {{"bins", cfg.fit.bins}, {"min_samples", cfg.fit.min_samples}, {"tie_rule", tie_rule},
                         {"fits", {{"normal", fit_report(fit.normal)}, {"botnet", fit_report(fit.botnet)}}}};
      manifest.inputs = {scores_path};
      if (!model_path.empty()) manifest.inputs.push_back(model_path);
      manifest.outputs = {out};
      manifest.write(manifest_path(out));
    } else if (c_detect->parsed()) {
      auto model = Model::load(model_path);
      const auto det = DetectorModel::load(detector_path);
      if (!det.feature_names.empty()) check_feature_layout(model, det.feature_names);
      FeatureTable table;
      if (!features_path.empty()) {
        table = read_features(features_path);
        manifest.inputs = {features_path};
      } else {
        auto src = inputs.open();
        PreprocessConfig pc{model.meta.window_seconds, model.meta.n_windows, model.meta.l_max, false};
        table = preprocess(*src, pc, model.meta.normalizer);
        report_parse_stats(*src);
        manifest.inputs = inputs.hashed_paths();
      }
      const auto scores = score_table(model, table, cfg.context);
      const auto decisions = classify_all(scores, det);
      write_decisions(out, scores, decisions);
      std::size_t flagged = 0;
      for (const auto& d : decisions) flagged += d.verdict == Verdict::Malicious;
      std::cerr << flagged << " of " << decisions.size() << " host-windows flagged malicious\n";
      manifest.config = {{"context", context}};
      manifest.inputs.push_back(model_path);
      manifest.inputs.push_back(detector_path);
      manifest.outputs = {out};
      manifest.write(manifest_path(out));
    } else if (c_eval->parsed()) {
      std::vector<ScoredWindow> scores;
      std::vector<Decision> decisions;
      read_decisions(decisions_path, scores, decisions);
      auto report = evaluate(scores, decisions, cfg.exclude_background);
      report.window_seconds = cfg.pre.window_seconds;
      report.n_windows = cfg.pre.n_windows;
      report.arch = topts.arch;
      write_text_file(out, report.to_json().dump(1) + "\n");
      const auto table = format_table(std::vector<MetricsReport>{report});
      std::cout << table;
      if (!table_path.empty()) write_text_file(table_path, table);
      if (!hist_path.empty()) write_text_file(hist_path, score_histogram_csv(scores));
      manifest.config = {{"exclude_background", cfg.exclude_background}};
      manifest.inputs = {decisions_path};
      manifest.outputs = {out};
      manifest.write(manifest_path(out));
    } else if (c_sweep->parsed()) {
      apply_train_options(cfg, topts);
      train_inputs.manifest = test_inputs.manifest = inputs.manifest;
      train_inputs.strict = test_inputs.strict = inputs.strict;
      if (!inputs.manifest.empty()) {
        const auto m = ScenarioManifest::load(inputs.manifest);
        if (train_inputs.files.empty() && train_inputs.scenarios.empty()) train_inputs.scenarios = m.train;
        if (test_inputs.files.empty() && test_inputs.scenarios.empty()) test_inputs.scenarios = m.test;
      }
      for (const auto& a : train_inputs.scenarios) {
        if (std::find(test_inputs.scenarios.begin(), test_inputs.scenarios.end(), a) != test_inputs.scenarios.end()) {
          throw CLI::ValidationError("scenario " + a + " is in both the train and test lists");
        }
      }
      fs::create_directories(out);
      const auto entries = window_sweep([&] { return train_inputs.open(); }, [&] { return test_inputs.open(); },
                                        durations, cfg);
      std::vector<MetricsReport> reports;
      for (const auto& e : entries) {
        const std::string tag = format_real(e.window_seconds);
        write_text_file((fs::path(out) / ("metrics_T" + tag + ".json")).string(), e.report.to_json().dump(1) + "\n");
        write_text_file((fs::path(out) / ("histogram_T" + tag + ".csv")).string(), e.histogram_csv);
        manifest.outputs.push_back((fs::path(out) / ("metrics_T" + tag + ".json")).string());
        reports.push_back(e.report);
      }
      const auto table = format_table(reports);
      std::cout << table;
      write_text_file((fs::path(out) / "sweep_table.txt").string(), table);
      manifest.seed = cfg.train.seed;
      manifest.config = cfg.to_json();
      manifest.config["durations"] = durations;
      manifest.inputs = train_inputs.hashed_paths();
      for (auto& p : test_inputs.hashed_paths()) manifest.inputs.push_back(p);
      manifest.write((fs::path(out) / "sweep.manifest.json").string());
    } else if (c_stream->parsed()) {
      auto model = Model::load(model_path);
      const auto det = DetectorModel::load(detector_path);
      auto src = inputs.open();
      std::size_t emitted = 0;
      const auto dropped = run_stream(model, det, *src, [&](const StreamRecord& r) {
        std::cout << r.to_json().dump() << "\n";
        ++emitted;
      });
      std::cout.flush();
      report_parse_stats(*src);
      std::cerr << emitted << " decisions emitted, " << dropped << " late flows dropped\n";
    }
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
