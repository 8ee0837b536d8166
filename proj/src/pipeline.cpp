// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "flowrvae/errors.hpp"
#include "flowrvae/util.hpp"

namespace flowrvae {

std::string_view to_string(Context c) { return c == Context::Trailing ? "trailing" : "span"; }

Context context_from_string(std::string_view s) {
  if (s == "trailing") return Context::Trailing;
  if (s == "span") return Context::Span;
  throw std::invalid_argument("unknown scoring context '" + std::string(s) + "'");
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"T", pre.window_seconds},
          {"N", pre.n_windows},
          {"L_max", pre.l_max},
          {"log1p", pre.log1p},
          {"stride", stride},
          {"arch", to_string(arch)},
          {"epochs", train.epochs},
          {"batch_size", train.batch_size},
          {"lr", train.lr},
          {"anneal_steps", train.anneal_steps},
          {"beta_max", train.beta_max},
          {"seed", train.seed},
          {"grad_clip", train.grad_clip},
          {"hidden", train.hidden},
          {"latent", train.latent},
          {"mlp_widths", train.mlp_widths},
          {"kfold", kfold},
          {"bins", fit.bins},
          {"min_samples", fit.min_samples},
          {"tie_rule", to_string(tie_rule)},
          {"context", to_string(context)},
          {"exclude_background", exclude_background}};
}

std::vector<Sequence> make_sequences(const FeatureTable& table, const SequenceConfig& cfg, Context ctx) {
  return ctx == Context::Trailing ? build_trailing_sequences(table.rows, cfg)
                                  : build_sequences(table.rows, cfg);
}

namespace {

ModelMeta meta_for(const FeatureTable& table, const PipelineConfig& cfg) {
  ModelMeta meta;
  meta.feature_names = table.header.feature_names;
  meta.normalizer = table.header.normalizer;
  meta.window_seconds = cfg.pre.window_seconds;
  meta.n_windows = cfg.pre.n_windows;
  meta.l_max = cfg.pre.l_max;
  meta.seed = cfg.train.seed;
  return meta;
}

std::vector<int> botnet_labels(std::span<const ScoredWindow> scores) {
  std::vector<int> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(s.label == GroundTruth::Botnet ? 1 : 0);
  return out;
}

}  // namespace

TrainResult train_model(const FeatureTable& table, const PipelineConfig& cfg, std::vector<FoldSummary>* folds) {
  const auto seqs = build_sequences(table.rows, cfg.sequence_config());
  TrainConfig tc = cfg.train;
  tc.l_max = cfg.pre.l_max;
  const ModelMeta meta = meta_for(table, cfg);
  if (cfg.kfold < 2) return train(seqs, tc, cfg.arch, meta);

  const auto splits = kfold_split(seqs.size(), cfg.kfold, cfg.train.seed);
  std::vector<TrainResult> results;
  std::vector<FoldSummary> summary;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    std::vector<Sequence> fit_set, val_set;
    for (auto i : splits[f].train) fit_set.push_back(seqs[i]);
    for (auto i : splits[f].validation) val_set.push_back(seqs[i]);
    results.push_back(train(fit_set, tc, cfg.arch, meta));
    const auto scores = score_dataset(results.back().model, val_set);
    FoldSummary s;
    s.fold = f;
    s.validation_sequences = val_set.size();
    std::vector<double> values;
    for (const auto& w : scores) values.push_back(w.score);
    const auto labels = botnet_labels(scores);
    s.mean_score = values.empty() ? 0.0 : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    s.auprc = std::count(labels.begin(), labels.end(), 1) > 0 ? pr_auc(values, labels)
                                                               : std::numeric_limits<double>::quiet_NaN();
    summary.push_back(s);
  }
  auto key = [](const FoldSummary& s) {
    const bool has = !std::isnan(s.auprc);
    return std::tuple{!has, has ? -s.auprc : 0.0, s.mean_score, s.fold};
  };
  const auto best = std::min_element(summary.begin(), summary.end(),
                                     [&](const FoldSummary& a, const FoldSummary& b) { return key(a) < key(b); });
  best->selected = true;
  TrainResult chosen = std::move(results[best->fold]);
  chosen.model.meta.training_summary["kfold"] = cfg.kfold;
  chosen.model.meta.training_summary["selected_fold"] = best->fold;
  if (folds) *folds = summary;
  return chosen;
}

void check_compatible(const Model& model, const FeatureTable& table) {
  check_feature_layout(model, table.header.feature_names);
  if (!(model.meta.normalizer == table.header.normalizer)) {
    throw DataError(
        "features were normalized with different statistics than the model's; "
        "re-run preprocess with the model's normalizer (--normalizer)");
  }
}

std::vector<ScoredWindow> score_table(Model& model, const FeatureTable& table, Context ctx) {
  check_compatible(model, table);
  const SequenceConfig sc{model.meta.n_windows, model.meta.l_max, 0};
  const auto seqs = make_sequences(table, sc, ctx);
  return score_dataset(model, seqs);
}

DetectorFit fit_detector(std::span<const ScoredWindow> scores, const FitOptions& opts, TieRule tie_rule) {
  std::vector<double> normal, botnet;
  for (const auto& s : scores) (s.label == GroundTruth::Botnet ? botnet : normal).push_back(s.score);
  if (normal.size() < opts.min_samples || botnet.size() < opts.min_samples) {
    throw DataError("detector needs at least " + std::to_string(opts.min_samples) +
                    " normal and botnet scores, got " + std::to_string(normal.size()) + " and " +
                    std::to_string(botnet.size()));
  }
  return fit_detector(normal, botnet, opts, tie_rule);
}

std::vector<Decision> classify_all(std::span<const ScoredWindow> scores, const DetectorModel& det) {
  std::vector<Decision> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back(classify(s.score, det));
  return out;
}

ExperimentResult run_experiment(const SourceFactory& train_src, const SourceFactory& test_src,
                                const PipelineConfig& cfg) {
  ExperimentResult r;
  FeatureTable train_table;
  {
    auto src = train_src();
    train_table = preprocess(*src, cfg.pre);
  }
  r.trained = train_model(train_table, cfg, &r.folds);
  if (!r.trained.abort_reason.empty()) throw NumericError("training aborted: " + r.trained.abort_reason);
  Model& model = r.trained.model;
  r.train_scores = score_table(model, train_table, cfg.context);
  r.detector = fit_detector(r.train_scores, cfg.fit, cfg.tie_rule);
  r.detector.model.feature_names = model.meta.feature_names;

  FeatureTable test_table;
  {
    auto src = test_src();
    test_table = preprocess(*src, cfg.pre, train_table.header.normalizer);
  }
  r.test_scores = score_table(model, test_table, cfg.context);
  r.decisions = classify_all(r.test_scores, r.detector.model);
  r.report = evaluate(r.test_scores, r.decisions, cfg.exclude_background);
  r.report.window_seconds = cfg.pre.window_seconds;
  r.report.n_windows = cfg.pre.n_windows;
  r.report.arch = std::string(to_string(cfg.arch));
  return r;
}

std::vector<SweepEntry> window_sweep(const SourceFactory& train_src, const SourceFactory& test_src,
                                     const std::vector<double>& durations, const PipelineConfig& cfg) {
  if (durations.empty()) throw std::invalid_argument("window_sweep: no durations");
  std::vector<SweepEntry> out;
  for (double d : durations) {
    PipelineConfig c = cfg;
    c.pre.window_seconds = d;
    const auto r = run_experiment(train_src, test_src, c);
    out.push_back(SweepEntry{d, r.report, score_histogram_csv(r.test_scores)});
  }
  return out;
}

// Streaming --------------------------------------------------------------------

nlohmann::json StreamRecord::to_json() const {
  return {{"src_addr", src_addr},
          {"window_index", window_index},
          {"first_seen", format_seconds(first_seen)},
          {"label", to_string(label)},
          {"score", score},
          {"likelihood_normal", decision.likelihood_normal},
          {"likelihood_botnet", decision.likelihood_botnet},
          {"verdict", to_string(decision.verdict)},
          {"out_of_support", decision.out_of_support},
          {"emit_latency", emit_latency}};
}

StreamDetector::StreamDetector(Model& model, DetectorModel detector, std::optional<Timestamp> t0)
    : model_(model), detector_(std::move(detector)), agg_(model.meta.window_seconds) {
  if (!detector_.feature_names.empty()) check_feature_layout(model_, detector_.feature_names);
  if (t0) agg_.set_t0(*t0);
}

std::vector<StreamRecord> StreamDetector::push(const FlowRecord& flow) {
  if (!agg_.add(flow)) return {};
  auto closed = agg_.drain_closed();
  if (closed.empty()) return {};
  return emit(std::move(closed), flow.start_time);
}

std::vector<StreamRecord> StreamDetector::finish() {
  agg_.close_all();
  return emit(agg_.drain_closed(), std::nullopt);
}

std::vector<StreamRecord> StreamDetector::emit(std::vector<HostWindowAggregate> closed,
                                               std::optional<Timestamp> now) {
  std::vector<StreamRecord> out;
  const std::int64_t n = model_.meta.n_windows;
  const Timestamp t0 = *agg_.t0();
  const double T = model_.meta.window_seconds;
  std::size_t i = 0;
  while (i < closed.size()) {
    const std::int64_t w = closed[i].window_index;
    std::vector<FeatureRow> rows;
    for (; i < closed.size() && closed[i].window_index == w; ++i) {
      const auto& a = closed[i];
      rows.push_back(FeatureRow{a.src_addr, a.window_index, a.first_seen, a.label,
                                model_.meta.normalizer.normalize(a)});
    }
    std::vector<FeatureRow> context;
    for (const auto& [hw, hrows] : history_) {
      if (hw >= w - n + 1 && hw < w) context.insert(context.end(), hrows.begin(), hrows.end());
    }
    context.insert(context.end(), rows.begin(), rows.end());

    const Timestamp window_end{t0.micros + static_cast<std::int64_t>(std::llround(static_cast<double>(w + 1) * T * 1e6))};
    const double latency = now ? static_cast<double>(now->micros - window_end.micros) * 1e-6 : 0.0;
    std::vector<StreamRecord> window_records;
    for (auto& chunk : sort_and_chunk(std::move(context), model_.meta.l_max)) {
      Sequence seq;
      seq.elements = std::move(chunk);
      seq.span_start_window = w - n + 1;
      seq.n_windows = static_cast<int>(n);
      seq.emit_window = w;
      if (std::none_of(seq.elements.begin(), seq.elements.end(),
                       [w](const FeatureRow& r) { return r.window_index == w; })) {
        continue;
      }
      for (auto& s : score_sequence(model_, seq)) {
        StreamRecord rec;
        rec.src_addr = s.src_addr;
        rec.window_index = s.window_index;
        rec.first_seen = s.first_seen;
        rec.label = s.label;
        rec.score = s.score;
        rec.decision = classify(s.score, detector_);
        rec.emit_latency = latency;
        window_records.push_back(std::move(rec));
      }
    }
    std::sort(window_records.begin(), window_records.end(), [](const StreamRecord& a, const StreamRecord& b) {
      if (a.first_seen != b.first_seen) return a.first_seen < b.first_seen;
      return a.src_addr < b.src_addr;
    });
    out.insert(out.end(), std::make_move_iterator(window_records.begin()),
               std::make_move_iterator(window_records.end()));

    history_[w] = std::move(rows);
    while (!history_.empty() && history_.begin()->first < w - n + 2) history_.erase(history_.begin());
  }
  return out;
}

std::size_t run_stream(Model& model, const DetectorModel& detector, FlowSource& source,
                       const std::function<void(const StreamRecord&)>& sink) {
  StreamDetector det(model, detector);
  while (auto flow = source.next()) {
    for (const auto& r : det.push(*flow)) sink(r);
  }
  for (const auto& r : det.finish()) sink(r);
  return det.flows_dropped();
}

// Run manifests ----------------------------------------------------------------

nlohmann::json RunManifest::to_json() const {
  auto files = [](const std::vector<std::string>& paths) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : paths) arr.push_back({{"path", p}, {"fnv1a64", hash_file(p)}});
    return arr;
  };
  return {{"command", command},
          {"version", kVersion},
          {"seed", seed},
          {"config", config},
          {"config_hash", hex64(fnv1a64(config.dump()))},
          {"inputs", files(inputs)},
          {"outputs", files(outputs)}};
}

void RunManifest::write(const std::string& path) const { write_text_file(path, to_json().dump(1) + "\n"); }

// Files ----------------------------------------------------------------------

Normalizer load_normalizer(const std::string& path) {
  const auto text = read_text_file(path);
  if (!text.empty() && text.front() == '{') {
    const auto j = nlohmann::json::parse(text);
    if (!j.contains("normalizer")) throw DataError("'" + path + "' has no normalizer");
    return Normalizer::from_json(j.at("normalizer"));
  }
  return read_features(path).header.normalizer;
}

namespace {

std::string decisions_header() {
  return "src_addr,window_index,first_seen,label,score,likelihood_normal,likelihood_botnet,verdict,"
         "out_of_support\n";
}

}  // namespace

void write_decisions(const std::string& path, std::span<const ScoredWindow> scores,
                     std::span<const Decision> decisions) {
  std::string out = decisions_header();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto& s = scores[i];
    const auto& d = decisions[i];
    out += s.src_addr + ',' + std::to_string(s.window_index) + ',' + format_seconds(s.first_seen) + ',' +
           std::string(to_string(s.label)) + ',' + format_real(s.score) + ',' +
           format_real(d.likelihood_normal) + ',' + format_real(d.likelihood_botnet) + ',' +
           std::string(to_string(d.verdict)) + ',' + (d.out_of_support ? "1" : "0") + '\n';
  }
  write_text_file(path, out);
}

void read_decisions(const std::string& path, std::vector<ScoredWindow>& scores, std::vector<Decision>& decisions) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || std::string(trim_eol(line)) + "\n" != decisions_header()) {
    throw DataError("'" + path + "' is not a decisions file");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim_eol(line);
    if (text.empty()) continue;
    const auto c = split_csv(text);
    if (c.size() != 9) throw ParseError(line_no, "expected 9 columns in decisions file");
    try {
      ScoredWindow s{std::string(c[0]), parse_int_field(c[1], "window_index"), parse_seconds(c[2]),
                     parse_real_field(c[4], "score"), ground_truth_from_string(c[3])};
      Decision d;
      d.likelihood_normal = parse_real_field(c[5], "likelihood_normal");
      d.likelihood_botnet = parse_real_field(c[6], "likelihood_botnet");
      if (c[7] == "malicious") d.verdict = Verdict::Malicious;
      else if (c[7] == "non-malicious") d.verdict = Verdict::NonMalicious;
      else throw DataError("unknown verdict '" + std::string(c[7]) + "'");
      d.out_of_support = c[8] == "1";
      scores.push_back(std::move(s));
      decisions.push_back(d);
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw ParseError(line_no, e.what());
    }
  }
}

}  // namespace flowrvae
