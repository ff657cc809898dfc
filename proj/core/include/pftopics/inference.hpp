#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pftopics/corpus.hpp"
#include "pftopics/elbo.hpp"
#include "pftopics/model.hpp"

namespace pftopics {

/// Unconstrained chart over every trainable quantity. Mapping:
///   beta  = row-softmax(beta_logits)        pi    = softmax(pi_logits)
///   varphi = sigmoid(varphi_logits)          delta = softplus(delta_raw)
///   gamma = softplus(gamma_raw) + floor      phi   = column-softmax(phi_logits)
/// With p = 1 the switch posterior is pinned to one and varphi_logits is
/// ignored: any varphi < 1 would make the switch-prior term -inf.
struct UnconstrainedParams {
  Eigen::MatrixXd beta_logits;
  Eigen::VectorXd pi_logits;
  Eigen::VectorXd varphi_logits;
  Eigen::VectorXd eta;
  double delta_raw = 0.0;
  std::vector<Eigen::VectorXd> gamma_raw;
  std::vector<Eigen::MatrixXd> phi_logits;
};

struct TrainOptions {
  double learning_rate = 0.025;
  int epochs = 1000;
  /// Documents per step; 0 means full batch.
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
  /// Stop when the relative ELBO change over `convergence_window` epochs
  /// falls below this. Zero disables early stopping.
  double convergence_tol = 1e-5;
  int convergence_window = 10;
  double gamma_floor = 1e-3;
  /// Validation metric cadence in epochs (the final epoch is always scored).
  int validation_interval = 50;
  /// Coordinate-ascent sweeps for held-out inference.
  int heldout_max_iterations = 500;
  double heldout_tol = 1e-8;
  unsigned threads = 1;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double elbo = 0.0;
  ElboBreakdown terms;
  std::optional<double> val_metric;
  double relevant_fraction = 0.0;

  std::string to_json() const;
};

struct TrainResult {
  ModelParams params;
  VariationalState state;
  std::vector<EpochRecord> history;
  bool converged = false;
};

double softplus(double x);
/// Inverse of softplus on (0, inf).
double softplus_inverse(double y);

/// Random initial point. `num_docs` sizes are taken from `corpus` when
/// given, otherwise local blocks are left empty.
UnconstrainedParams init_unconstrained(const ModelConfig& config, std::size_t vocabulary_size, std::uint64_t seed,
                                       const Corpus* corpus = nullptr);

/// Local blocks for `corpus` at gamma = alpha and uniform phi.
void init_local(UnconstrainedParams& u, const ModelConfig& config, const Corpus& corpus, double gamma_floor);

ModelParams map_params(const UnconstrainedParams& u);
Eigen::VectorXd map_varphi(const UnconstrainedParams& u, const ModelConfig& config);
VariationalState map_state(const UnconstrainedParams& u, const ModelConfig& config, double gamma_floor);

/// Gradient of the corpus ELBO with respect to every block of `u`; same
/// shapes as UnconstrainedParams.
struct ElboGradient {
  UnconstrainedParams grad;
  ElboBreakdown value;
};

struct GradientOptions {
  double gamma_floor = 1e-3;
  bool include_targets = true;
  unsigned threads = 1;
  /// Restrict to these documents; empty means all. Global blocks are
  /// multiplied by `global_scale`.
  std::vector<std::size_t> documents;
  double global_scale = 1.0;
};

ElboGradient elbo_gradient(const Corpus& corpus, const ModelConfig& config, const UnconstrainedParams& u,
                           const GradientOptions& options);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Joint ADAM ascent on the corpus ELBO over all unconstrained blocks.
TrainResult train(const Corpus& corpus, const ModelConfig& config, const TrainOptions& options,
                  const Corpus* validation = nullptr, const EpochCallback& on_epoch = {});

/// As train, starting from `initial` (which must cover `corpus`).
TrainResult train_from(UnconstrainedParams initial, const Corpus& corpus, const ModelConfig& config,
                       const TrainOptions& options, const Corpus* validation = nullptr,
                       const EpochCallback& on_epoch = {});

/// Topic posterior for an unseen document with every global frozen and the
/// target term dropped. Returns gamma.
Eigen::VectorXd infer_heldout(const Document& doc, const ModelParams& params, const ModelConfig& config,
                              const Eigen::VectorXd& varphi, const TrainOptions& options);

/// eta' E[theta] for real targets, sigmoid of it for binary.
double predict_from_gamma(const Eigen::VectorXd& gamma, const ModelParams& params, const ModelConfig& config);

double predict(const Document& doc, const ModelParams& params, const ModelConfig& config,
               const Eigen::VectorXd& varphi, const TrainOptions& options);

std::vector<double> predict_corpus(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                                   const Eigen::VectorXd& varphi, const TrainOptions& options);

}  // namespace pftopics
