// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowrvae/errors.hpp"
#include "flowrvae/util.hpp"

namespace flowrvae {

double anomaly_score(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) {
    throw ShapeError("anomaly_score: " + std::to_string(y.size()) + " targets vs " +
                     std::to_string(yhat.size()) + " reconstructions");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i]) || !std::isfinite(yhat[i])) {
      throw NumericError("anomaly_score: non-finite input at feature " + std::to_string(i));
    }
    const double p = std::clamp(yhat[i], kLogClamp, 1.0 - kLogClamp);
    s -= y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p);
  }
  // y*log(p) with y in [0,1] cannot push the sum below zero except by rounding.
  return std::max(s, 0.0);
}

void check_feature_layout(const Model& model, const std::vector<std::string>& names) {
  if (model.meta.feature_names != names) {
    throw DataError("feature layout mismatch: model has " +
                    std::to_string(model.meta.feature_names.size()) + " features, input has " +
                    std::to_string(names.size()) + " (or a different order)");
  }
}

std::vector<ScoredWindow> score_sequence(Model& model, const Sequence& seq) {
  std::vector<ScoredWindow> out;
  if (seq.elements.empty()) return out;
  const auto recon = model.reconstruct(seq);
  for (std::size_t i = 0; i < seq.elements.size(); ++i) {
    const auto& e = seq.elements[i];
    if (!seq.emits(e)) continue;
    out.push_back(ScoredWindow{e.src_addr, e.window_index, e.first_seen,
                               anomaly_score(e.features, recon[i]), e.label});
  }
  return out;
}

std::vector<ScoredWindow> score_dataset(Model& model, std::span<const Sequence> sequences) {
  std::vector<ScoredWindow> out;
  for (const auto& seq : sequences) {
    auto part = score_sequence(model, seq);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  std::stable_sort(out.begin(), out.end(), [](const ScoredWindow& a, const ScoredWindow& b) {
    if (a.window_index != b.window_index) return a.window_index < b.window_index;
    if (a.first_seen != b.first_seen) return a.first_seen < b.first_seen;
    return a.src_addr < b.src_addr;
  });
  return out;
}

void write_scores(const std::string& path, std::span<const ScoredWindow> scores) {
  std::string out = "src_addr,window_index,first_seen,label,score\n";
  for (const auto& s : scores) {
    out += s.src_addr;
    out += ',' + std::to_string(s.window_index);
    out += ',' + format_seconds(s.first_seen);
    out += ',';
    out += to_string(s.label);
    out += ',' + format_real(s.score) + '\n';
  }
  write_text_file(path, out);
}

std::vector<ScoredWindow> read_scores(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || trim_eol(line) != "src_addr,window_index,first_seen,label,score") {
    throw DataError("'" + path + "' is not a scores file");
  }
  std::vector<ScoredWindow> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = trim_eol(line);
    if (text.empty()) continue;
    const auto cols = split_csv(text);
    if (cols.size() != 5) throw ParseError(line_no, "expected 5 columns in scores file");
    try {
      ScoredWindow s;
      s.src_addr = std::string(cols[0]);
      s.window_index = parse_int_field(cols[1], "window_index");
      s.first_seen = parse_seconds(cols[2]);
      s.label = ground_truth_from_string(cols[3]);
      s.score = parse_real_field(cols[4], "score");
      out.push_back(std::move(s));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return out;
}

}  // namespace flowrvae
