// SPDX-License-Identifier: Apache-2.0
#include "flowrvae/models.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "flowrvae/errors.hpp"
#include "flowrvae/util.hpp"

namespace flowrvae {

namespace {

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

struct LinearVars {
  Var w, b;
};

LinearVars bind(Tape& tape, Linear& l) { return {tape.param(l.w), tape.param(l.b)}; }

Var apply(Var x, const LinearVars& l) { return linear(x, l.w, l.b); }

}  // namespace

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.w = uniform_tensor({out, in}, bound, rng);
  l.b = uniform_tensor({out}, bound, rng);
  return l;
}

GruCell GruCell::init(std::size_t in, std::size_t hidden, Rng& rng) {
  GruCell c;
  const double bx = 1.0 / std::sqrt(static_cast<double>(in));
  const double bh = 1.0 / std::sqrt(static_cast<double>(hidden));
  c.w_x = uniform_tensor({3 * hidden, in}, bx, rng);
  c.w_hru = uniform_tensor({2 * hidden, hidden}, bh, rng);
  c.w_hn = uniform_tensor({hidden, hidden}, bh, rng);
  c.b = uniform_tensor({3 * hidden}, bx, rng);
  return c;
}

GruVars bind(Tape& tape, GruCell& cell) {
  return GruVars{tape.param(cell.w_x), tape.param(cell.w_hru), tape.param(cell.w_hn),
                 tape.param(cell.b), cell.hidden()};
}

Var gru_step(Var gx, Var h_prev, const GruVars& cell) {
  const std::size_t H = cell.hidden;
  if (gx.value().numel() != 3 * H || h_prev.value().numel() != H) {
    throw ShapeError("gru_step: gates " + shape_string(gx.value().shape) + " and state " +
                     shape_string(h_prev.value().shape) + " do not match hidden size " +
                     std::to_string(H));
  }
  Var ru = sigmoid(add(slice(gx, 0, 2 * H), linear(h_prev, cell.w_hru)));
  Var r = slice(ru, 0, H);
  Var u = slice(ru, H, H);
  Var n = tanh(add(slice(gx, 2 * H, H), linear(mul(r, h_prev), cell.w_hn)));
  // (1-u)*n + u*h == n + u*(h-n)
  return add(n, mul(u, sub(h_prev, n)));
}

Var gru_cell(Var x, Var h_prev, const GruVars& cell) {
  return gru_step(linear(x, cell.w_x, cell.b), h_prev, cell);
}

std::vector<Var> gru_sequence(Var inputs, Var h0, const GruVars& cell, bool reverse) {
  const Tensor& in = inputs.value();
  if (in.rank() != 2) throw ShapeError("gru_sequence: inputs must be (L, in), got " + shape_string(in.shape));
  const std::size_t L = in.shape[0];
  Var gx_all = linear(inputs, cell.w_x, cell.b);
  std::vector<Var> states(L);
  Var h = h0;
  for (std::size_t k = 0; k < L; ++k) {
    const std::size_t t = reverse ? L - 1 - k : k;
    h = gru_step(row(gx_all, t), h, cell);
    states[t] = h;
  }
  return states;
}

Var reparameterize(Var mu, Var logvar, Var eps) {
  return add(mu, mul(exp(scale(logvar, 0.5)), eps));
}

Var kl_divergence(Var mu, Var logvar) {
  Var terms = add_scalar(sub(add(mul(mu, mu), exp(logvar)), logvar), -1.0);
  return scale(sum(terms), 0.5);
}

double kl_divergence(std::span<const double> mu, std::span<const double> logvar) {
  if (mu.size() != logvar.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    s += mu[i] * mu[i] + std::exp(logvar[i]) - logvar[i] - 1.0;
  }
  return 0.5 * s;
}

Var bce_sum(Var targets, Var recon) {
  Tape& t = *recon.tape;
  const Tensor& y = targets.value();
  Var p = clamp(recon, kLogClamp, 1.0 - kLogClamp);
  Tensor one_minus = y;
  for (auto& v : one_minus.data) v = 1.0 - v;
  Var ll = add(mul(targets, log(p)), mul(t.constant(std::move(one_minus)), log(rsub_scalar(1.0, p))));
  return scale(sum(ll), -1.0);
}

LossTerms vae_loss(Var targets, Var recon, Var mu, Var logvar, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("vae_loss: beta must be >= 0");
  for (double v : targets.value().data) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("vae_loss: target " + format_real(v) + " outside [0,1]");
    }
  }
  LossTerms terms;
  terms.bce = bce_sum(targets, recon);
  terms.kl = kl_divergence(mu, logvar);
  terms.total = beta == 0.0 ? terms.bce : add(terms.bce, scale(terms.kl, beta));
  return terms;
}

double beta_schedule(std::int64_t step, std::int64_t anneal_steps, double beta_max) {
  if (step < 0) throw std::invalid_argument("beta_schedule: negative step");
  if (anneal_steps < 1) throw std::invalid_argument("beta_schedule: anneal_steps must be >= 1");
  return beta_max * std::min(1.0, static_cast<double>(step) / static_cast<double>(anneal_steps));
}

std::string_view to_string(Arch a) { return a == Arch::Rvae ? "rvae" : "mlp"; }

Arch arch_from_string(std::string_view s) {
  if (s == "rvae") return Arch::Rvae;
  if (s == "mlp") return Arch::Mlp;
  throw std::invalid_argument("unknown architecture '" + std::string(s) + "'");
}

// RVAE -------------------------------------------------------------------------

RvaeParams RvaeParams::init(const RvaeConfig& cfg, Rng& rng) {
  if (cfg.features == 0 || cfg.hidden == 0 || cfg.latent == 0 || cfg.layers == 0) {
    throw std::invalid_argument("RVAE dimensions must be positive");
  }
  RvaeParams p;
  p.cfg = cfg;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::size_t in = l == 0 ? cfg.features : 2 * cfg.hidden;
    p.enc_fwd.push_back(GruCell::init(in, cfg.hidden, rng));
    p.enc_bwd.push_back(GruCell::init(in, cfg.hidden, rng));
  }
  p.mu = Linear::init(2 * cfg.hidden, cfg.latent, rng);
  p.logvar = Linear::init(2 * cfg.hidden, cfg.latent, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    p.z_proj.push_back(Linear::init(cfg.latent, cfg.hidden, rng));
    p.dec.push_back(GruCell::init(l == 0 ? cfg.features : cfg.hidden, cfg.hidden, rng));
  }
  p.out = Linear::init(cfg.hidden, cfg.features, rng);
  return p;
}

namespace {

void add_cell(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
              GruCell& c) {
  out.emplace_back(prefix + ".w_x", &c.w_x);
  out.emplace_back(prefix + ".w_hru", &c.w_hru);
  out.emplace_back(prefix + ".w_hn", &c.w_hn);
  out.emplace_back(prefix + ".b", &c.b);
}

void add_linear(std::vector<std::pair<std::string, Tensor*>>& out, const std::string& prefix,
                Linear& l) {
  out.emplace_back(prefix + ".w", &l.w);
  out.emplace_back(prefix + ".b", &l.b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> RvaeParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t l = 0; l < enc_fwd.size(); ++l) {
    add_cell(out, "enc.l" + std::to_string(l) + ".fwd", enc_fwd[l]);
    add_cell(out, "enc.l" + std::to_string(l) + ".bwd", enc_bwd[l]);
  }
  add_linear(out, "mu", mu);
  add_linear(out, "logvar", logvar);
  for (std::size_t l = 0; l < dec.size(); ++l) {
    add_linear(out, "z_proj.l" + std::to_string(l), z_proj[l]);
    add_cell(out, "dec.l" + std::to_string(l), dec[l]);
  }
  add_linear(out, "out", this->out);
  return out;
}

std::pair<Var, Var> rvae_encode(Tape& tape, RvaeParams& p, Var targets) {
  const Tensor& y = targets.value();
  if (y.rank() != 2 || y.shape[0] == 0) throw std::invalid_argument("rvae_encode: empty sequence");
  if (y.shape[1] != p.cfg.features) {
    throw ShapeError("rvae_encode: sequence width " + std::to_string(y.shape[1]) +
                     " does not match model features " + std::to_string(p.cfg.features));
  }
  const std::size_t L = y.shape[0];
  Var h0 = tape.constant(Tensor::zeros({p.cfg.hidden}));
  Var layer_in = targets;
  Var last_fwd, first_bwd;
  for (std::size_t l = 0; l < p.cfg.layers; ++l) {
    const auto fwd = bind(tape, p.enc_fwd[l]);
    const auto bwd = bind(tape, p.enc_bwd[l]);
    const auto hf = gru_sequence(layer_in, h0, fwd, false);
    const auto hb = gru_sequence(layer_in, h0, bwd, true);
    last_fwd = hf[L - 1];
    first_bwd = hb[0];
    if (l + 1 < p.cfg.layers) {
      std::vector<Var> rows(L);
      for (std::size_t t = 0; t < L; ++t) rows[t] = concat({hf[t], hb[t]});
      layer_in = stack_rows(rows);
    }
  }
  Var h_e = concat({last_fwd, first_bwd});
  Var mu = apply(h_e, bind(tape, p.mu));
  Var logvar = apply(h_e, bind(tape, p.logvar));
  return {mu, logvar};
}

Var rvae_decode(Tape& tape, RvaeParams& p, Var z, Var targets) {
  const Tensor& y = targets.value();
  const std::size_t L = y.shape[0], F = y.shape[1];
  // inputs: zero vector, then y_1 .. y_{L-1}
  Tensor shifted = Tensor::zeros({L, F});
  std::copy(y.data.begin(), y.data.end() - static_cast<std::ptrdiff_t>(F), shifted.data.begin() + static_cast<std::ptrdiff_t>(F));
  Var layer_in = tape.constant(std::move(shifted));
  for (std::size_t l = 0; l < p.cfg.layers; ++l) {
    Var h0 = apply(z, bind(tape, p.z_proj[l]));
    const auto states = gru_sequence(layer_in, h0, bind(tape, p.dec[l]), false);
    layer_in = stack_rows(states);
  }
  return sigmoid(apply(layer_in, bind(tape, p.out)));
}

VaeForward rvae_forward(Tape& tape, RvaeParams& p, Var targets, std::optional<Var> eps) {
  auto [mu, logvar] = rvae_encode(tape, p, targets);
  Var z = eps ? reparameterize(mu, logvar, *eps) : mu;
  return VaeForward{rvae_decode(tape, p, z, targets), mu, logvar};
}

// MLP-VAE ----------------------------------------------------------------------

MlpVaeParams MlpVaeParams::init(const MlpConfig& cfg, Rng& rng) {
  if (cfg.features == 0 || cfg.latent == 0 || cfg.widths.empty()) {
    throw std::invalid_argument("MLP-VAE dimensions must be positive");
  }
  MlpVaeParams p;
  p.cfg = cfg;
  std::size_t in = cfg.features;
  for (auto w : cfg.widths) {
    p.enc.push_back(Linear::init(in, w, rng));
    in = w;
  }
  p.mu = Linear::init(in, cfg.latent, rng);
  p.logvar = Linear::init(in, cfg.latent, rng);
  in = cfg.latent;
  for (auto it = cfg.widths.rbegin(); it != cfg.widths.rend(); ++it) {
    p.dec.push_back(Linear::init(in, *it, rng));
    in = *it;
  }
  p.out = Linear::init(in, cfg.features, rng);
  return p;
}

std::vector<std::pair<std::string, Tensor*>> MlpVaeParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t i = 0; i < enc.size(); ++i) add_linear(out, "enc." + std::to_string(i), enc[i]);
  add_linear(out, "mu", mu);
  add_linear(out, "logvar", logvar);
  for (std::size_t i = 0; i < dec.size(); ++i) add_linear(out, "dec." + std::to_string(i), dec[i]);
  add_linear(out, "out", this->out);
  return out;
}

VaeForward mlp_forward(Tape& tape, MlpVaeParams& p, Var x, std::optional<Var> eps) {
  Var h = x;
  for (auto& l : p.enc) h = relu(apply(h, bind(tape, l)));
  Var mu = apply(h, bind(tape, p.mu));
  Var logvar = apply(h, bind(tape, p.logvar));
  Var d = eps ? reparameterize(mu, logvar, *eps) : mu;
  for (auto& l : p.dec) d = relu(apply(d, bind(tape, l)));
  return VaeForward{sigmoid(apply(d, bind(tape, p.out))), mu, logvar};
}

Tensor sequence_matrix(const Sequence& seq) {
  std::vector<const FeatureRow*> rows;
  rows.reserve(seq.elements.size());
  for (const auto& e : seq.elements) rows.push_back(&e);
  return rows_matrix(rows);
}

Tensor rows_matrix(std::span<const FeatureRow* const> rows) {
  if (rows.empty()) return Tensor::zeros({0, 0});
  const std::size_t F = rows.front()->features.size();
  Tensor m = Tensor::zeros({rows.size(), F});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i]->features.size() != F) throw ShapeError("rows_matrix: ragged feature vectors");
    std::copy(rows[i]->features.begin(), rows[i]->features.end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * F));
  }
  return m;
}

// Model ------------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor*>> Model::named() {
  return arch == Arch::Rvae ? rvae.named() : mlp.named();
}

std::size_t Model::features() const {
  return arch == Arch::Rvae ? rvae.cfg.features : mlp.cfg.features;
}

std::vector<std::vector<double>> Model::reconstruct(const Sequence& seq) {
  if (seq.elements.empty()) return {};
  Tape tape;
  Var targets = tape.constant(sequence_matrix(seq));
  const VaeForward fwd = arch == Arch::Rvae ? rvae_forward(tape, rvae, targets, std::nullopt)
                                            : mlp_forward(tape, mlp, targets, std::nullopt);
  const Tensor& r = fwd.recon.value();
  std::vector<std::vector<double>> out(r.shape[0]);
  for (std::size_t i = 0; i < r.shape[0]; ++i) {
    out[i].assign(r.data.begin() + static_cast<std::ptrdiff_t>(i * r.shape[1]),
                  r.data.begin() + static_cast<std::ptrdiff_t>((i + 1) * r.shape[1]));
  }
  return out;
}

nlohmann::json Model::to_json() {
  nlohmann::json config;
  if (arch == Arch::Rvae) {
    config = {{"F", rvae.cfg.features}, {"H", rvae.cfg.hidden}, {"D", rvae.cfg.latent},
              {"layers", rvae.cfg.layers}};
  } else {
    config = {{"F", mlp.cfg.features}, {"widths", mlp.cfg.widths}, {"D", mlp.cfg.latent}};
  }
  config["L_max"] = meta.l_max;
  config["T"] = meta.window_seconds;
  config["N"] = meta.n_windows;
  nlohmann::json params = nlohmann::json::object();
  for (auto& [name, t] : named()) params[name] = {{"shape", t->shape}, {"data", t->data}};
  return {{"format_version", kModelFormatVersion},
          {"arch", to_string(arch)},
          {"config", config},
          {"feature_names", meta.feature_names},
          {"normalizer", meta.normalizer.to_json()},
          {"parameters", params},
          {"rng_seed", meta.seed},
          {"training_log_summary", meta.training_summary}};
}

Model Model::from_json(const nlohmann::json& j) {
  const int version = j.at("format_version").get<int>();
  if (version != kModelFormatVersion) {
    throw DataError("unsupported model format_version " + std::to_string(version));
  }
  Model m;
  m.arch = arch_from_string(j.at("arch").get<std::string>());
  const auto& c = j.at("config");
  Rng rng(0);
  if (m.arch == Arch::Rvae) {
    RvaeConfig rc;
    rc.features = c.at("F").get<std::size_t>();
    rc.hidden = c.at("H").get<std::size_t>();
    rc.latent = c.at("D").get<std::size_t>();
    rc.layers = c.at("layers").get<std::size_t>();
    m.rvae = RvaeParams::init(rc, rng);
  } else {
    MlpConfig mc;
    mc.features = c.at("F").get<std::size_t>();
    mc.widths = c.at("widths").get<std::vector<std::size_t>>();
    mc.latent = c.at("D").get<std::size_t>();
    m.mlp = MlpVaeParams::init(mc, rng);
  }
  m.meta.l_max = c.at("L_max").get<std::size_t>();
  m.meta.window_seconds = c.at("T").get<double>();
  m.meta.n_windows = c.at("N").get<int>();
  m.meta.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.meta.normalizer = Normalizer::from_json(j.at("normalizer"));
  m.meta.seed = j.at("rng_seed").get<std::uint64_t>();
  m.meta.training_summary = j.value("training_log_summary", nlohmann::json::object());
  const auto& params = j.at("parameters");
  for (auto& [name, t] : m.named()) {
    if (!params.contains(name)) throw DataError("model file is missing parameter '" + name + "'");
    const auto& pj = params.at(name);
    const auto shape = pj.at("shape").get<std::vector<std::size_t>>();
    if (shape != t->shape) {
      throw DataError("parameter '" + name + "' has shape " + shape_string(shape) + ", expected " +
                      shape_string(t->shape));
    }
    t->data = pj.at("data").get<std::vector<double>>();
    if (t->data.size() != t->numel() && t->data.size() != 0) {
      throw DataError("parameter '" + name + "' has wrong data length");
    }
  }
  if (m.features() != m.meta.feature_names.size()) {
    throw DataError("model feature count does not match its feature_names");
  }
  return m;
}

void Model::save(const std::string& path) { write_text_file(path, to_json().dump(1) + "\n"); }

Model Model::load(const std::string& path) {
  try {
    return from_json(nlohmann::json::parse(read_text_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad model file '" + path + "': " + e.what());
  }
}

// Training ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1 || batch_size < 1 || !(lr > 0.0) || anneal_steps < 1 || !(beta_max >= 0.0) ||
      hidden < 1 || latent < 1 || l_max < 1) {
    throw std::invalid_argument("training configuration values must be positive");
  }
}

std::vector<Sequence> non_malicious(std::span<const Sequence> seqs) {
  std::vector<Sequence> out;
  for (const auto& s : seqs) {
    Sequence kept;
    kept.span_start_window = s.span_start_window;
    kept.n_windows = s.n_windows;
    for (const auto& e : s.elements) {
      if (e.label != GroundTruth::Botnet) kept.elements.push_back(e);
    }
    if (!kept.elements.empty()) out.push_back(std::move(kept));
  }
  return out;
}

namespace {

Tensor normal_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = rng.normal();
  return t;
}

struct BatchStats {
  double loss = 0.0, bce = 0.0, kl = 0.0;
};

}  // namespace

TrainResult train(std::span<const Sequence> sequences, const TrainConfig& cfg, Arch arch,
                  const ModelMeta& meta) {
  cfg.validate();
  const auto kept = non_malicious(sequences);
  if (kept.empty()) throw DataError("no non-malicious training data");
  const std::size_t F = kept.front().elements.front().features.size();

  Rng rng(cfg.seed);
  TrainResult result;
  Model& model = result.model;
  model.arch = arch;
  model.meta = meta;
  model.meta.seed = cfg.seed;
  model.meta.l_max = cfg.l_max;
  if (arch == Arch::Rvae) {
    model.rvae = RvaeParams::init(RvaeConfig{F, cfg.hidden, cfg.latent, 2}, rng);
  } else {
    MlpConfig mc;
    mc.features = F;
    mc.latent = cfg.latent;
    mc.widths = cfg.mlp_widths.empty()
                    ? std::vector<std::size_t>{cfg.hidden, cfg.hidden, 2 * cfg.hidden}
                    : cfg.mlp_widths;
    model.mlp = MlpVaeParams::init(mc, rng);
  }
  std::vector<Tensor*> params;
  for (auto& [name, t] : model.named()) params.push_back(t);

  // Training units: whole sequences for the RVAE, single vectors for the MLP.
  std::vector<const FeatureRow*> vectors;
  if (arch == Arch::Mlp) {
    for (const auto& s : kept) {
      for (const auto& e : s.elements) vectors.push_back(&e);
    }
  }
  const std::size_t n_units = arch == Arch::Rvae ? kept.size() : vectors.size();
  std::vector<std::size_t> order(n_units);
  for (std::size_t i = 0; i < n_units; ++i) order[i] = i;

  AdamState adam;
  adam.cfg.lr = cfg.lr;
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    BatchStats epoch_sum;
    double last_norm = 0.0;
    double beta = 0.0;
    for (std::size_t start = 0; start < n_units; start += cfg.batch_size) {
      const std::size_t end = std::min(n_units, start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      beta = beta_schedule(step, cfg.anneal_steps, cfg.beta_max);
      zero_grads(params);
      BatchStats batch;
      if (arch == Arch::Rvae) {
        for (std::size_t k = start; k < end; ++k) {
          const Sequence& seq = kept[order[k]];
          Tape tape;
          Var y = tape.constant(sequence_matrix(seq));
          Var eps = tape.constant(normal_tensor({cfg.latent}, rng));
          const auto fwd = rvae_forward(tape, model.rvae, y, eps);
          const auto terms = vae_loss(y, fwd.recon, fwd.mu, fwd.logvar, beta);
          batch.loss += terms.total.item();
          batch.bce += terms.bce.item();
          batch.kl += terms.kl.item();
          tape.backward(terms.total, inv_b);
        }
      } else {
        std::vector<const FeatureRow*> rows;
        for (std::size_t k = start; k < end; ++k) rows.push_back(vectors[order[k]]);
        Tape tape;
        Var x = tape.constant(rows_matrix(rows));
        Var eps = tape.constant(normal_tensor({rows.size(), cfg.latent}, rng));
        const auto fwd = mlp_forward(tape, model.mlp, x, eps);
        const auto terms = vae_loss(x, fwd.recon, fwd.mu, fwd.logvar, beta);
        batch.loss += terms.total.item();
        batch.bce += terms.bce.item();
        batch.kl += terms.kl.item();
        tape.backward(terms.total, inv_b);
      }
      if (!std::isfinite(batch.loss)) {
        result.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + ", update " +
                              std::to_string(step);
        break;
      }
      last_norm = clip_grad_norm(params, cfg.grad_clip);
      try {
        adam_update(params, adam);
      } catch (const NumericError& e) {
        result.abort_reason = std::string(e.what()) + " at epoch " + std::to_string(epoch);
        break;
      }
      ++step;
      epoch_sum.loss += batch.loss;
      epoch_sum.bce += batch.bce;
      epoch_sum.kl += batch.kl;
    }
    EpochLog log;
    log.epoch = epoch;
    log.loss = epoch_sum.loss / static_cast<double>(n_units);
    log.bce = epoch_sum.bce / static_cast<double>(n_units);
    log.kl = epoch_sum.kl / static_cast<double>(n_units);
    log.beta = beta;
    log.grad_norm = last_norm;
    log.updates = step;
    result.log.push_back(log);
    if (cfg.verbose) {
      std::cerr << "epoch " << epoch << " loss " << log.loss << " bce " << log.bce << " kl "
                << log.kl << " beta " << log.beta << "\n";
    }
    if (!result.abort_reason.empty()) break;
  }
  zero_grads(params);
  const auto& last = result.log.back();
  model.meta.training_summary = {{"arch", to_string(arch)},
                                 {"epochs_run", last.epoch},
                                 {"updates", last.updates},
                                 {"final_loss", last.loss},
                                 {"final_bce", last.bce},
                                 {"final_kl", last.kl},
                                 {"train_units", n_units}};
  if (!result.abort_reason.empty()) model.meta.training_summary["aborted"] = result.abort_reason;
  return result;
}

}  // namespace flowrvae
