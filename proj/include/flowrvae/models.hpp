// SPDX-License-Identifier: Apache-2.0
/**
 * @file   models.hpp
 * @brief  Recurrent VAE (bidirectional GRU encoder, GRU decoder) and the
 *         per-vector MLP-VAE baseline, with the BCE + beta*KL objective.
 *
 * RVAE data flow for a sequence y_1..y_L:
 *   encoder   2-layer bidirectional GRU over y; h_E = [fwd_L ; bwd_1] of the
 *             top layer
 *   latent    mu = W_mu h_E + b, logvar = W_sigma h_E + b,
 *             z = mu + exp(logvar/2) * eps
 *   decoder   per layer h_0 = z_proj(z); inputs 0, y_1, ..., y_{L-1}
 *             (teacher forcing); yhat_t = sigmoid(W_s h_t + b_s)
 */
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowrvae/features.hpp"
#include "flowrvae/rng.hpp"
#include "flowrvae/tensor.hpp"

namespace flowrvae {

inline constexpr double kLogClamp = 1e-7;

struct Linear {
  Tensor w;  // (out, in)
  Tensor b;  // (out)

  static Linear init(std::size_t in, std::size_t out, Rng& rng);
};

struct GruCell {
  Tensor w_x;   // (3H, in): reset, update, candidate rows
  Tensor w_hru; // (2H, H)
  Tensor w_hn;  // (H, H)
  Tensor b;     // (3H)

  std::size_t hidden() const { return w_hn.shape[0]; }
  std::size_t input() const { return w_x.shape[1]; }
  static GruCell init(std::size_t in, std::size_t hidden, Rng& rng);
};

/// GRU weights bound to a tape.
struct GruVars {
  Var w_x, w_hru, w_hn, b;
  std::size_t hidden = 0;
};
GruVars bind(Tape& tape, GruCell& cell);

/// One step given precomputed input gates gx = W_x x + b (3H).
Var gru_step(Var gx, Var h_prev, const GruVars& cell);

/// r = s(W_r x + U_r h + b_r); u = s(W_u x + U_u h + b_u);
/// n = tanh(W_n x + U_n (r*h) + b_n); h' = (1-u)*n + u*h.
Var gru_cell(Var x, Var h_prev, const GruVars& cell);

/// Runs a GRU over the rows of `inputs` (L, in). Returns the L hidden states
/// in time order; `reverse` walks t = L..1.
std::vector<Var> gru_sequence(Var inputs, Var h0, const GruVars& cell, bool reverse);

Var reparameterize(Var mu, Var logvar, Var eps);
/// 0.5 * sum(mu^2 + exp(logvar) - logvar - 1).
Var kl_divergence(Var mu, Var logvar);
double kl_divergence(std::span<const double> mu, std::span<const double> logvar);
/// -sum(y log p + (1-y) log(1-p)), p clamped to [1e-7, 1-1e-7].
Var bce_sum(Var targets, Var recon);

struct LossTerms {
  Var total;
  Var bce;
  Var kl;
};
/// J = BCE + beta * KL. Throws std::invalid_argument on targets outside
/// [0,1] or beta < 0.
LossTerms vae_loss(Var targets, Var recon, Var mu, Var logvar, double beta);

/// beta_max * min(1, step / anneal_steps).
double beta_schedule(std::int64_t step, std::int64_t anneal_steps, double beta_max);

enum class Arch { Rvae, Mlp };
std::string_view to_string(Arch a);
Arch arch_from_string(std::string_view s);

struct RvaeConfig {
  std::size_t features = kNumFeatures;
  std::size_t hidden = 64;
  std::size_t latent = 16;
  std::size_t layers = 2;
};

struct RvaeParams {
  RvaeConfig cfg;
  std::vector<GruCell> enc_fwd, enc_bwd, dec;
  Linear mu, logvar;
  std::vector<Linear> z_proj;
  Linear out;

  static RvaeParams init(const RvaeConfig& cfg, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named();
};

struct MlpConfig {
  std::size_t features = kNumFeatures;
  std::vector<std::size_t> widths = {512, 512, 1024};
  std::size_t latent = 100;
};

struct MlpVaeParams {
  MlpConfig cfg;
  std::vector<Linear> enc;  // features -> widths...
  Linear mu, logvar;
  std::vector<Linear> dec;  // latent -> reversed widths...
  Linear out;

  static MlpVaeParams init(const MlpConfig& cfg, Rng& rng);
  std::vector<std::pair<std::string, Tensor*>> named();
};

/// Tape values of one forward pass.
struct VaeForward {
  Var recon;   // (L, F)
  Var mu;      // (D) for RVAE, (L, D) for MLP rows
  Var logvar;
};

/// RVAE forward. `targets` is (L, F). With `eps` absent, z = mu.
VaeForward rvae_forward(Tape& tape, RvaeParams& p, Var targets, std::optional<Var> eps);
/// Encoder only: (mu, logvar). Throws std::invalid_argument on L = 0.
std::pair<Var, Var> rvae_encode(Tape& tape, RvaeParams& p, Var targets);
Var rvae_decode(Tape& tape, RvaeParams& p, Var z, Var targets);

/// Row-wise MLP-VAE over a batch (B, F). With `eps` (B, D) absent, z = mu.
VaeForward mlp_forward(Tape& tape, MlpVaeParams& p, Var x, std::optional<Var> eps);

/// Input matrix (L, F) of a sequence's feature vectors.
Tensor sequence_matrix(const Sequence& seq);
Tensor rows_matrix(std::span<const FeatureRow* const> rows);

struct ModelMeta {
  std::vector<std::string> feature_names;
  Normalizer normalizer;
  double window_seconds = 60.0;
  int n_windows = 3;
  std::size_t l_max = 128;
  std::uint64_t seed = 0;
  nlohmann::json training_summary = nlohmann::json::object();
};

inline constexpr int kModelFormatVersion = 1;

struct Model {
  Arch arch = Arch::Rvae;
  RvaeParams rvae;
  MlpVaeParams mlp;
  ModelMeta meta;

  std::vector<std::pair<std::string, Tensor*>> named();
  std::size_t features() const;

  /// Deterministic (z = mu) reconstructions of each element, (L, F) row-major.
  std::vector<std::vector<double>> reconstruct(const Sequence& seq);

  nlohmann::json to_json();
  static Model from_json(const nlohmann::json& j);
  void save(const std::string& path);
  static Model load(const std::string& path);
};

struct TrainConfig {
  int epochs = 500;
  std::size_t batch_size = 128;
  double lr = 0.01;
  std::int64_t anneal_steps = 500;
  double beta_max = 1.0;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;
  std::size_t hidden = 64;
  std::size_t latent = 16;
  std::size_t l_max = 128;
  /// MLP hidden widths; empty means {hidden, hidden, 2*hidden}.
  std::vector<std::size_t> mlp_widths;
  bool verbose = false;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double bce = 0.0;
  double kl = 0.0;
  double beta = 0.0;
  double grad_norm = 0.0;
  std::int64_t updates = 0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> log;
  /// Non-empty when training stopped on a non-finite loss or gradient; the
  /// model then holds the last parameters that produced finite values.
  std::string abort_reason;
};

/// Drops botnet-labelled elements (and then-empty sequences).
std::vector<Sequence> non_malicious(std::span<const Sequence> seqs);

/// Minimizes the VAE objective with Adam. Botnet elements are removed before
/// batching. RVAE batches are sequences; MLP batches are single vectors.
/// Throws DataError if nothing non-malicious is left to train on.
TrainResult train(std::span<const Sequence> sequences, const TrainConfig& cfg, Arch arch,
                  const ModelMeta& meta);

}  // namespace flowrvae
