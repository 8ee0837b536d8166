// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include "flowrvae/errors.hpp"
#include "flowrvae/pipeline.hpp"
#include "flowrvae/synth.hpp"

namespace py = pybind11;
using namespace flowrvae;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::object& o) {
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<std::filesystem::path> paths(const std::vector<std::string>& in) { return {in.begin(), in.end()}; }

SourceFactory files_source(const std::vector<std::string>& in) {
  return [p = paths(in)] { return std::make_unique<DatasetReader>(p, ParseOptions{}); };
}

py::dict best_fit_dict(const BestFit& bf) {
  py::list cands;
  for (const auto& c : bf.candidates) cands.append(to_py(c.to_json()));
  py::dict d;
  d["best"] = to_py(bf.best.to_json());
  d["candidates"] = cands;
  d["warnings"] = bf.warnings;
  return d;
}

// Keys of a config dict, all optional: window_seconds, n_windows, l_max,
// log1p, arch, epochs, batch_size, lr, anneal_steps, beta_max, seed,
// grad_clip, hidden, latent, mlp_widths, kfold, stride, bins, min_samples,
// tie_rule, context, exclude_background.
PipelineConfig pipeline_config(const py::dict& d) {
  const auto j = from_py(d);
  PipelineConfig c;
  c.pre.window_seconds = j.value("window_seconds", c.pre.window_seconds);
  c.pre.n_windows = j.value("n_windows", c.pre.n_windows);
  c.pre.l_max = j.value("l_max", c.pre.l_max);
  c.pre.log1p = j.value("log1p", c.pre.log1p);
  c.arch = arch_from_string(j.value("arch", std::string("rvae")));
  c.train.epochs = j.value("epochs", c.train.epochs);
  c.train.batch_size = j.value("batch_size", c.train.batch_size);
  c.train.lr = j.value("lr", c.train.lr);
  c.train.anneal_steps = j.value("anneal_steps", c.train.anneal_steps);
  c.train.beta_max = j.value("beta_max", c.train.beta_max);
  c.train.seed = j.value("seed", c.train.seed);
  c.train.grad_clip = j.value("grad_clip", c.train.grad_clip);
  c.train.hidden = j.value("hidden", c.train.hidden);
  c.train.latent = j.value("latent", c.train.latent);
  c.train.mlp_widths = j.value("mlp_widths", c.train.mlp_widths);
  c.train.l_max = c.pre.l_max;
  c.kfold = j.value("kfold", c.kfold);
  c.stride = j.value("stride", c.stride);
  c.fit.bins = j.value("bins", c.fit.bins);
  c.fit.min_samples = j.value("min_samples", c.fit.min_samples);
  c.tie_rule = tie_rule_from_string(j.value("tie_rule", std::string("malicious")));
  c.context = context_from_string(j.value("context", std::string("trailing")));
  c.exclude_background = j.value("exclude_background", false);
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Botnet detection from NetFlow records with a recurrent variational autoencoder.";
  m.attr("__version__") = kVersion;

  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<FitError>(m, "FitError", PyExc_RuntimeError);

  using Reals = std::vector<double>;
  using Ints = std::vector<int>;
  m.def(
      "anomaly_score", [](const Reals& y, const Reals& yhat) { return anomaly_score(y, yhat); }, py::arg("y"),
      py::arg("yhat"), "Binary cross-entropy of a reconstruction, summed over features.");
  m.def(
      "roc_auc", [](const Reals& s, const Ints& l) { return roc_auc(s, l); }, py::arg("scores"), py::arg("labels"));
  m.def(
      "pr_auc", [](const Reals& s, const Ints& l) { return pr_auc(s, l); }, py::arg("scores"), py::arg("labels"));
  m.def(
      "prf",
      [](const std::vector<int>& decisions, const std::vector<int>& labels) {
        const auto r = prf(decisions, labels);
        py::dict d;
        d["precision"] = r.precision;
        d["recall"] = r.recall;
        d["f1"] = r.f1;
        d["tp"] = r.tp;
        d["fp"] = r.fp;
        d["tn"] = r.tn;
        d["fn"] = r.fn;
        return d;
      },
      py::arg("decisions"), py::arg("labels"));
  m.def(
      "kfold_split",
      [](std::size_t n, std::size_t k, std::uint64_t seed) {
        std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> out;
        for (auto& f : kfold_split(n, k, seed)) out.emplace_back(std::move(f.train), std::move(f.validation));
        return out;
      },
      py::arg("n"), py::arg("k") = 5, py::arg("seed") = 0, "(train, validation) index lists per fold.");

  m.def(
      "pdf",
      [](const std::string& family, const std::vector<double>& shape, double loc, double scale, double x) {
        return pdf_eval(pdf_family_from_string(family), shape, loc, scale, x);
      },
      py::arg("family"), py::arg("shape"), py::arg("loc"), py::arg("scale"), py::arg("x"));
  m.def(
      "fit_family",
      [](const std::string& family, const std::vector<double>& samples, std::size_t min_samples) {
        FitOptions o;
        o.min_samples = min_samples;
        return to_py(fit_family(pdf_family_from_string(family), samples, o).to_json());
      },
      py::arg("family"), py::arg("samples"), py::arg("min_samples") = 100);
  m.def(
      "best_fit",
      [](const std::vector<double>& samples, std::size_t min_samples) {
        FitOptions o;
        o.min_samples = min_samples;
        return best_fit_dict(best_fit(samples, o));
      },
      py::arg("samples"), py::arg("min_samples") = 100);

  m.def(
      "synth",
      [](const std::string& path, std::uint64_t seed, std::int64_t windows, double window_seconds, int subnet) {
        SynthConfig c;
        c.seed = seed;
        c.windows = windows;
        c.window_seconds = window_seconds;
        c.subnet = subnet;
        const auto flows = synth_flows(c);
        write_flows(path, flows);
        return flows.size();
      },
      py::arg("path"), py::arg("seed") = 1, py::arg("windows") = 120, py::arg("window_seconds") = 60.0,
      py::arg("subnet") = 0, "Writes a labelled synthetic binetflow file; returns the flow count.");

  m.def(
      "preprocess",
      [](const std::vector<std::string>& inputs, const std::string& out, double window_seconds, int n_windows,
         std::size_t l_max, const std::optional<std::string>& normalizer) {
        DatasetReader src(paths(inputs), {});
        PreprocessConfig c{window_seconds, n_windows, l_max, false};
        std::optional<Normalizer> nz;
        if (normalizer) nz = load_normalizer(*normalizer);
        const auto table = preprocess(src, c, nz);
        write_features(out, table, std::filesystem::path(out).extension() == ".bin" ? FeatureEncoding::Binary
                                                                                     : FeatureEncoding::Csv);
        return table.rows.size();
      },
      py::arg("inputs"), py::arg("out"), py::arg("window_seconds") = 60.0, py::arg("n_windows") = 3,
      py::arg("l_max") = 128, py::arg("normalizer") = py::none(),
      "Aggregates flows into a features file; returns the host-window count.");

  m.def(
      "train",
      [](const std::string& features, const std::string& out, const py::dict& config) {
        const auto cfg = pipeline_config(config);
        const auto table = read_features(features);
        auto r = train_model(table, cfg);
        r.model.save(out);
        if (!r.abort_reason.empty()) throw NumericError(r.abort_reason);
        return to_py(r.model.meta.training_summary);
      },
      py::arg("features"), py::arg("out"), py::arg("config") = py::dict());

  m.def(
      "score",
      [](const std::string& model_path, const std::string& features, const std::string& out,
         const std::string& context) {
        Model model = Model::load(model_path);
        const auto table = read_features(features);
        check_compatible(model, table);
        const auto scores = score_table(model, table, context_from_string(context));
        write_scores(out, scores);
        return scores.size();
      },
      py::arg("model"), py::arg("features"), py::arg("out"), py::arg("context") = "trailing");

  m.def(
      "fit_detector",
      [](const std::string& scores_path, const std::string& out, std::size_t min_samples, const std::string& tie) {
        FitOptions o;
        o.min_samples = min_samples;
        const auto scores = read_scores(scores_path);
        const auto fit = fit_detector(scores, o, tie_rule_from_string(tie));
        fit.model.save(out);
        py::dict d;
        d["normal"] = best_fit_dict(fit.normal);
        d["botnet"] = best_fit_dict(fit.botnet);
        return d;
      },
      py::arg("scores"), py::arg("out"), py::arg("min_samples") = 100, py::arg("tie_rule") = "malicious");

  m.def(
      "detect",
      [](const std::string& model_path, const std::string& detector_path, const std::vector<std::string>& inputs,
         const std::string& out) {
        Model model = Model::load(model_path);
        const auto det = DetectorModel::load(detector_path);
        DatasetReader src(paths(inputs), {});
        PreprocessConfig c{model.meta.window_seconds, model.meta.n_windows, model.meta.l_max,
                           false};
        const auto table = preprocess(src, c, model.meta.normalizer);
        const auto scores = score_table(model, table, Context::Trailing);
        const auto decisions = classify_all(scores, det);
        write_decisions(out, scores, decisions);
        return scores.size();
      },
      py::arg("model"), py::arg("detector"), py::arg("inputs"), py::arg("out"),
      "Scores and classifies flows in batch; writes a decisions CSV.");

  m.def(
      "stream",
      [](const std::string& model_path, const std::string& detector_path, const std::vector<std::string>& inputs) {
        Model model = Model::load(model_path);
        const auto det = DetectorModel::load(detector_path);
        DatasetReader src(paths(inputs), {});
        py::list out;
        run_stream(model, det, src, [&](const StreamRecord& r) { out.append(to_py(r.to_json())); });
        return out;
      },
      py::arg("model"), py::arg("detector"), py::arg("inputs"), "Online decisions, one dict per host-window.");

  m.def(
      "evaluate",
      [](const std::string& decisions_path, bool exclude_background) {
        std::vector<ScoredWindow> scores;
        std::vector<Decision> decisions;
        read_decisions(decisions_path, scores, decisions);
        return to_py(evaluate(scores, decisions, exclude_background).to_json());
      },
      py::arg("decisions"), py::arg("exclude_background") = false);

  m.def(
      "run_experiment",
      [](const std::vector<std::string>& train, const std::vector<std::string>& test, const py::dict& config) {
        const auto cfg = pipeline_config(config);
        return to_py(run_experiment(files_source(train), files_source(test), cfg).report.to_json());
      },
      py::arg("train"), py::arg("test"), py::arg("config") = py::dict(),
      "preprocess, train, score, fit and classify; returns the metrics report.");
}
