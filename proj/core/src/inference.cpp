#include "pftopics/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>
#include <json.hpp>

#include "pftopics/error.hpp"
#include "pftopics/eval.hpp"
#include "pftopics/parallel.hpp"

namespace pftopics {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEpsilon = 1e-8;

Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd out = (logits.array() - top).exp().matrix();
  return out / out.sum();
}

Eigen::VectorXd log_softmax(const Eigen::Ref<const Eigen::VectorXd>& logits) {
  const double top = logits.maxCoeff();
  const double lse = top + std::log((logits.array() - top).exp().sum());
  return (logits.array() - lse).matrix();
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

bool switch_pinned(const ModelConfig& config) { return config.switch_prior == 1.0; }

}  // namespace

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw InvalidArgument("softplus_inverse needs a positive argument");
  return y + std::log(-std::expm1(-y));
}

void TrainOptions::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (epochs < 1) throw InvalidArgument("epochs must be >= 1");
  if (!(gamma_floor > 0.0)) throw InvalidArgument("gamma_floor must be positive");
  if (convergence_tol < 0.0) throw InvalidArgument("convergence_tol must be nonnegative");
  if (convergence_window < 1) throw InvalidArgument("convergence_window must be >= 1");
  if (heldout_max_iterations < 1) throw InvalidArgument("heldout_max_iterations must be >= 1");
}

std::string EpochRecord::to_json() const {
  nlohmann::json j;
  j["epoch"] = epoch;
  j["elbo"] = elbo;
  j["elbo_terms"] = nlohmann::json::parse(terms.to_json());
  j["val_metric"] = val_metric ? nlohmann::json(*val_metric) : nlohmann::json(nullptr);
  j["relevant_fraction"] = relevant_fraction;
  return j.dump();
}

void init_local(UnconstrainedParams& u, const ModelConfig& config, const Corpus& corpus, double gamma_floor) {
  const int K = config.num_topics;
  const Eigen::VectorXd alpha = config.alpha_or_default();
  Eigen::VectorXd raw(K);
  for (int k = 0; k < K; ++k) raw[k] = softplus_inverse(std::max(alpha[k] - gamma_floor, 1e-12));
  u.gamma_raw.assign(corpus.num_documents(), raw);
  u.phi_logits.clear();
  u.phi_logits.reserve(corpus.num_documents());
  for (const auto& doc : corpus.documents) {
    u.phi_logits.emplace_back(Eigen::MatrixXd::Zero(K, static_cast<Eigen::Index>(doc.num_distinct())));
  }
}

UnconstrainedParams init_unconstrained(const ModelConfig& config, std::size_t vocabulary_size, std::uint64_t seed,
                                       const Corpus* corpus) {
  config.validate();
  if (vocabulary_size < 1) throw InvalidArgument("vocabulary size must be >= 1");
  const int K = config.num_topics;
  const auto V = static_cast<Eigen::Index>(vocabulary_size);

  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> noise(1.0);
  UnconstrainedParams u;
  // Unit-rate exponential logits: near-uniform rows with enough asymmetry
  // that the topics do not stay tied to each other.
  u.beta_logits.resize(K, V);
  for (Eigen::Index v = 0; v < V; ++v)
    for (int k = 0; k < K; ++k) u.beta_logits(k, v) = noise(rng);
  u.pi_logits.resize(V);
  for (Eigen::Index v = 0; v < V; ++v) u.pi_logits[v] = noise(rng);
  u.varphi_logits = Eigen::VectorXd::Zero(V);
  u.eta = Eigen::VectorXd::Zero(K);
  u.delta_raw = softplus_inverse(1.0);
  if (corpus) init_local(u, config, *corpus, 1e-3);
  return u;
}

ModelParams map_params(const UnconstrainedParams& u) {
  ModelParams params;
  params.beta.resize(u.beta_logits.rows(), u.beta_logits.cols());
  for (Eigen::Index k = 0; k < u.beta_logits.rows(); ++k) {
    params.beta.row(k) = softmax(u.beta_logits.row(k).transpose()).transpose();
  }
  params.pi = softmax(u.pi_logits);
  params.eta = u.eta;
  params.delta = softplus(u.delta_raw);
  return params;
}

Eigen::VectorXd map_varphi(const UnconstrainedParams& u, const ModelConfig& config) {
  if (switch_pinned(config)) return Eigen::VectorXd::Ones(u.varphi_logits.size());
  return u.varphi_logits.unaryExpr([](double a) { return sigmoid(a); });
}

VariationalState map_state(const UnconstrainedParams& u, const ModelConfig& config, double gamma_floor) {
  VariationalState state;
  state.varphi = map_varphi(u, config);
  state.gamma.reserve(u.gamma_raw.size());
  for (const auto& raw : u.gamma_raw) {
    state.gamma.emplace_back(raw.unaryExpr([gamma_floor](double g) { return softplus(g) + gamma_floor; }));
  }
  state.phi.reserve(u.phi_logits.size());
  for (const auto& logits : u.phi_logits) {
    Eigen::MatrixXd ph(logits.rows(), logits.cols());
    for (Eigen::Index j = 0; j < logits.cols(); ++j) ph.col(j) = softmax(logits.col(j));
    state.phi.push_back(std::move(ph));
  }
  return state;
}

namespace {

// Shared read-only quantities for one gradient evaluation.
struct GlobalView {
  int K = 0;
  Eigen::Index V = 0;
  Eigen::MatrixXd log_beta;
  Eigen::VectorXd log_pi;
  Eigen::VectorXd varphi;
  Eigen::VectorXd one_minus_varphi;
  Eigen::VectorXd alpha;
  Eigen::VectorXd eta;
  double delta = 1.0;
  double p = 0.5;
  double log_p = 0.0;
  double log_one_minus_p = 0.0;
  double lgamma_alpha_norm = 0.0;
  TargetKind target_kind = TargetKind::real;
};

GlobalView make_view(const ModelConfig& config, const UnconstrainedParams& u) {
  GlobalView g;
  g.K = config.num_topics;
  g.V = u.beta_logits.cols();
  g.log_beta.resize(g.K, g.V);
  for (int k = 0; k < g.K; ++k) g.log_beta.row(k) = log_softmax(u.beta_logits.row(k).transpose()).transpose();
  g.log_pi = log_softmax(u.pi_logits);
  if (switch_pinned(config)) {
    g.varphi = Eigen::VectorXd::Ones(g.V);
    g.one_minus_varphi = Eigen::VectorXd::Zero(g.V);
  } else {
    g.varphi = u.varphi_logits.unaryExpr([](double a) { return sigmoid(a); });
    g.one_minus_varphi = u.varphi_logits.unaryExpr([](double a) { return sigmoid(-a); });
  }
  g.alpha = config.alpha_or_default();
  g.eta = u.eta;
  g.delta = softplus(u.delta_raw);
  g.p = config.switch_prior;
  g.log_p = std::log(g.p);
  g.log_one_minus_p = std::log1p(-g.p);
  g.lgamma_alpha_norm = std::lgamma(g.alpha.sum());
  for (int k = 0; k < g.K; ++k) g.lgamma_alpha_norm -= std::lgamma(g.alpha[k]);
  g.target_kind = config.target_kind;
  return g;
}

double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

// Per-document results written by the parallel pass.
struct DocumentGradient {
  ElboBreakdown value;
  Eigen::VectorXd d_gamma_raw;
  Eigen::MatrixXd d_phi_logits;
  Eigen::MatrixXd phi;
  Eigen::VectorXd d_eta;
  double d_delta = 0.0;
};

void document_gradient(const Document& doc, const GlobalView& g, const Eigen::VectorXd& gamma_raw,
                       const Eigen::MatrixXd& phi_logits, double gamma_floor, bool include_targets,
                       DocumentGradient& out) {
  const int K = g.K;
  Eigen::VectorXd gamma(K), dgamma_draw(K);
  for (int k = 0; k < K; ++k) {
    gamma[k] = softplus(gamma_raw[k]) + gamma_floor;
    dgamma_draw[k] = sigmoid(gamma_raw[k]);
  }
  const double g0 = gamma.sum();
  const double psi0 = boost::math::digamma(g0);
  const double tri0 = boost::math::trigamma(g0);
  Eigen::VectorXd elog(K), tri(K);
  for (int k = 0; k < K; ++k) {
    elog[k] = boost::math::digamma(gamma[k]) - psi0;
    tri[k] = boost::math::trigamma(gamma[k]);
  }

  ElboBreakdown& b = out.value;
  b = ElboBreakdown{};
  b.t_theta_prior = g.lgamma_alpha_norm + (g.alpha.array() - 1.0).matrix().dot(elog);
  b.h_theta = std::lgamma(g0) + (gamma.array() - 1.0).matrix().dot(elog);
  for (int k = 0; k < K; ++k) b.h_theta -= std::lgamma(gamma[k]);

  const auto J = static_cast<Eigen::Index>(doc.num_distinct());
  out.phi.resize(K, J);
  out.d_phi_logits.resize(K, J);
  Eigen::VectorXd expected_counts = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd grad_phi(K);

  for (Eigen::Index j = 0; j < J; ++j) {
    const auto [w, count] = doc.counts[static_cast<std::size_t>(j)];
    const double c = count;
    out.phi.col(j) = softmax(phi_logits.col(j));
    const auto ph = out.phi.col(j);
    const double rel = g.varphi[w];
    const double bg = g.one_minus_varphi[w];
    const auto lb = g.log_beta.col(w);

    const double topic_log = ph.dot(lb);
    b.t_z_given_theta += c * ph.dot(elog);
    b.t_words += c * (rel * topic_log + (bg == 0.0 ? 0.0 : bg * g.log_pi[w]));
    b.t_xi_prior += c * ((rel == 0.0 ? 0.0 : rel * g.log_p) + (bg == 0.0 ? 0.0 : bg * g.log_one_minus_p));
    double hz = 0.0;
    for (int k = 0; k < K; ++k) hz += xlogx(ph[k]);
    b.h_z += c * hz;
    b.h_xi += c * (xlogx(rel) + xlogx(bg));

    for (int k = 0; k < K; ++k) grad_phi[k] = c * (elog[k] + rel * lb[k] - (ph[k] > 0.0 ? std::log(ph[k]) : -745.0));
    const double mean = ph.dot(grad_phi);
    out.d_phi_logits.col(j) = ph.cwiseProduct((grad_phi.array() - mean).matrix());
    expected_counts += c * ph;
  }

  // Theta-dependent terms: prior, z given theta and minus the q(theta) entropy.
  Eigen::VectorXd resid = g.alpha + expected_counts - gamma;
  Eigen::VectorXd dgamma = resid.cwiseProduct(tri) - Eigen::VectorXd::Constant(K, tri0 * resid.sum());

  out.d_eta = Eigen::VectorXd::Zero(K);
  out.d_delta = 0.0;
  if (include_targets && doc.target) {
    const double y = *doc.target;
    const double u_dot = g.eta.dot(gamma);
    const double m = u_dot / g0;
    Eigen::VectorXd dm_dgamma = (g.eta.array() / g0 - u_dot / (g0 * g0)).matrix();
    Eigen::VectorXd dm_deta = gamma / g0;
    if (g.target_kind == TargetKind::binary) {
      b.t_y = y * log_sigmoid(m) + (1.0 - y) * log_sigmoid(-m);
      const double dm = y - sigmoid(m);
      dgamma += dm * dm_dgamma;
      out.d_eta = dm * dm_deta;
    } else {
      const double w_sq = g.eta.cwiseProduct(g.eta).dot(gamma);
      const double D = g0 * (g0 + 1.0);
      const double S = (u_dot * u_dot + w_sq) / D;
      const double Q = y * y - 2.0 * y * m + S;
      b.t_y = -0.5 * std::log(2.0 * std::numbers::pi * g.delta) - Q / (2.0 * g.delta);
      Eigen::VectorXd dS_dgamma =
          ((2.0 * u_dot * g.eta.array() + g.eta.array().square()) / D - S * (2.0 * g0 + 1.0) / D).matrix();
      Eigen::VectorXd dS_deta = (2.0 * (u_dot + g.eta.array()) * gamma.array() / D).matrix();
      dgamma += (2.0 * y * dm_dgamma - dS_dgamma) / (2.0 * g.delta);
      out.d_eta = (2.0 * y * dm_deta - dS_deta) / (2.0 * g.delta);
      out.d_delta = -0.5 / g.delta + Q / (2.0 * g.delta * g.delta);
    }
  }
  out.d_gamma_raw = dgamma.cwiseProduct(dgamma_draw);
  b.finalize();
}

}  // namespace

ElboGradient elbo_gradient(const Corpus& corpus, const ModelConfig& config, const UnconstrainedParams& u,
                           const GradientOptions& options) {
  const auto M = corpus.num_documents();
  if (u.gamma_raw.size() != M || u.phi_logits.size() != M) {
    throw InvalidArgument("local parameters do not cover the corpus");
  }
  if (u.beta_logits.rows() != config.num_topics) throw InvalidArgument("beta logits have the wrong number of topics");
  if (static_cast<std::size_t>(u.beta_logits.cols()) != corpus.vocabulary_size()) {
    throw InvalidArgument("beta logits have the wrong vocabulary size");
  }

  const GlobalView g = make_view(config, u);
  std::vector<std::size_t> docs = options.documents;
  if (docs.empty()) {
    docs.resize(M);
    std::iota(docs.begin(), docs.end(), std::size_t{0});
  }

  std::vector<DocumentGradient> parts(docs.size());
  parallel_for(docs.size(), options.threads, [&](std::size_t i) {
    const auto d = docs[i];
    document_gradient(corpus.documents[d], g, u.gamma_raw[d], u.phi_logits[d], options.gamma_floor,
                      options.include_targets, parts[i]);
  });

  ElboGradient result;
  auto& grad = result.grad;
  grad.gamma_raw.resize(M);
  grad.phi_logits.resize(M);
  for (std::size_t d = 0; d < M; ++d) {
    grad.gamma_raw[d] = Eigen::VectorXd::Zero(g.K);
    grad.phi_logits[d] = Eigen::MatrixXd::Zero(u.phi_logits[d].rows(), u.phi_logits[d].cols());
  }

  // Sufficient statistics for the global blocks, reduced in document order.
  Eigen::MatrixXd topic_stats = Eigen::MatrixXd::Zero(g.K, g.V);
  Eigen::VectorXd background_stats = Eigen::VectorXd::Zero(g.V);
  Eigen::VectorXd varphi_stats = Eigen::VectorXd::Zero(g.V);
  Eigen::VectorXd d_eta = Eigen::VectorXd::Zero(g.K);
  double d_delta = 0.0;
  const bool pinned = switch_pinned(config);
  const double prior_logit = pinned ? 0.0 : logit(g.p);

  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto d = docs[i];
    auto& part = parts[i];
    result.value += part.value;
    grad.gamma_raw[d] = std::move(part.d_gamma_raw);
    grad.phi_logits[d] = std::move(part.d_phi_logits);
    d_eta += part.d_eta;
    d_delta += part.d_delta;
    const auto& doc = corpus.documents[d];
    for (std::size_t j = 0; j < doc.counts.size(); ++j) {
      const auto [w, count] = doc.counts[j];
      const double c = count;
      const auto ph = part.phi.col(static_cast<Eigen::Index>(j));
      topic_stats.col(w) += (c * g.varphi[w]) * ph;
      background_stats[w] += c * g.one_minus_varphi[w];
      if (!pinned) {
        // d/dvarphi of words, switch prior and switch entropy terms; the
        // entropy derivative log((1 - varphi) / varphi) is minus the logit.
        varphi_stats[w] += c * (ph.dot(g.log_beta.col(w)) - g.log_pi[w] + prior_logit - u.varphi_logits[w]);
      }
    }
  }

  const double scale = options.global_scale;
  grad.beta_logits.resize(g.K, g.V);
  for (int k = 0; k < g.K; ++k) {
    const double row_total = topic_stats.row(k).sum();
    for (Eigen::Index v = 0; v < g.V; ++v) {
      grad.beta_logits(k, v) = scale * (topic_stats(k, v) - std::exp(g.log_beta(k, v)) * row_total);
    }
  }
  const double background_total = background_stats.sum();
  grad.pi_logits.resize(g.V);
  for (Eigen::Index v = 0; v < g.V; ++v) {
    grad.pi_logits[v] = scale * (background_stats[v] - std::exp(g.log_pi[v]) * background_total);
  }
  grad.varphi_logits = Eigen::VectorXd::Zero(g.V);
  if (!pinned) {
    for (Eigen::Index v = 0; v < g.V; ++v) {
      grad.varphi_logits[v] = scale * varphi_stats[v] * g.varphi[v] * g.one_minus_varphi[v];
    }
  }
  grad.eta = scale * d_eta;
  grad.delta_raw = scale * d_delta * sigmoid(u.delta_raw);
  return result;
}

namespace {

struct AdamBlock {
  Eigen::ArrayXd m;
  Eigen::ArrayXd v;
  long steps = 0;

  void step(double* param, const double* grad, Eigen::Index n, double lr) {
    if (m.size() != n) {
      m = Eigen::ArrayXd::Zero(n);
      v = Eigen::ArrayXd::Zero(n);
    }
    Eigen::Map<Eigen::ArrayXd> x(param, n);
    Eigen::Map<const Eigen::ArrayXd> gr(grad, n);
    ++steps;
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * gr;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * gr.square();
    const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(steps));
    const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(steps));
    // Ascent.
    x += lr * (m / c1) / ((v / c2).sqrt() + kAdamEpsilon);
  }
};

struct Optimizer {
  AdamBlock beta, pi, varphi, eta, delta;
  std::vector<AdamBlock> gamma, phi;

  void step_globals(UnconstrainedParams& u, const UnconstrainedParams& g, double lr, bool pinned) {
    beta.step(u.beta_logits.data(), g.beta_logits.data(), u.beta_logits.size(), lr);
    pi.step(u.pi_logits.data(), g.pi_logits.data(), u.pi_logits.size(), lr);
    if (!pinned) varphi.step(u.varphi_logits.data(), g.varphi_logits.data(), u.varphi_logits.size(), lr);
    eta.step(u.eta.data(), g.eta.data(), u.eta.size(), lr);
    delta.step(&u.delta_raw, &g.delta_raw, 1, lr);
  }

  void step_local(UnconstrainedParams& u, const UnconstrainedParams& g, std::size_t d, double lr) {
    gamma[d].step(u.gamma_raw[d].data(), g.gamma_raw[d].data(), u.gamma_raw[d].size(), lr);
    phi[d].step(u.phi_logits[d].data(), g.phi_logits[d].data(), u.phi_logits[d].size(), lr);
  }
};

bool all_finite(const UnconstrainedParams& g, const std::vector<std::size_t>& docs) {
  if (!g.beta_logits.allFinite() || !g.pi_logits.allFinite() || !g.varphi_logits.allFinite() ||
      !g.eta.allFinite() || !std::isfinite(g.delta_raw)) {
    return false;
  }
  for (auto d : docs)
    if (!g.gamma_raw[d].allFinite() || !g.phi_logits[d].allFinite()) return false;
  return true;
}

void check_finite(const ElboBreakdown& value, const UnconstrainedParams& grad, const std::vector<std::size_t>& docs) {
  if (auto term = value.first_nonfinite_term(); !term.empty()) {
    throw NumericalError(term, "non-finite ELBO term '" + term + "'");
  }
  if (!all_finite(grad, docs)) throw NumericalError("gradient", "non-finite ELBO gradient");
}

std::optional<double> validation_metric(const Corpus& validation, const ModelParams& params,
                                        const ModelConfig& config, const Eigen::VectorXd& varphi,
                                        const TrainOptions& options) {
  if (validation.num_documents() == 0 || validation.target_kind == TargetKind::none) return std::nullopt;
  const auto predictions = predict_corpus(validation, params, config, varphi, options);
  const auto targets = validation.targets();
  if (config.target_kind == TargetKind::binary) {
    const bool has_pos = std::find(targets.begin(), targets.end(), 1.0) != targets.end();
    const bool has_neg = std::find(targets.begin(), targets.end(), 0.0) != targets.end();
    if (!has_pos || !has_neg) return std::nullopt;
    return auc(predictions, targets);
  }
  return rmse(predictions, targets);
}

}  // namespace

TrainResult train(const Corpus& corpus, const ModelConfig& config, const TrainOptions& options,
                  const Corpus* validation, const EpochCallback& on_epoch) {
  config.validate();
  UnconstrainedParams u = init_unconstrained(config, corpus.vocabulary_size(), options.seed);
  init_local(u, config, corpus, options.gamma_floor);
  return train_from(std::move(u), corpus, config, options, validation, on_epoch);
}

TrainResult train_from(UnconstrainedParams u, const Corpus& corpus, const ModelConfig& config,
                       const TrainOptions& options, const Corpus* validation, const EpochCallback& on_epoch) {
  config.validate();
  options.validate();
  if (corpus.num_documents() == 0) throw InvalidArgument("cannot train on an empty corpus");
  if (corpus.target_kind != config.target_kind) {
    throw InvalidArgument("corpus targets (" + std::string(to_string(corpus.target_kind)) +
                          ") do not match the model target kind (" + std::string(to_string(config.target_kind)) + ")");
  }
  corpus.validate();
  if (validation && !(validation->vocabulary == corpus.vocabulary)) {
    throw InvalidArgument("validation corpus uses a different vocabulary");
  }

  const auto M = corpus.num_documents();
  if (u.gamma_raw.size() != M || u.phi_logits.size() != M) {
    throw InvalidArgument("initial local parameters do not cover the corpus");
  }

  Optimizer opt;
  opt.gamma.resize(M);
  opt.phi.resize(M);
  const bool pinned = switch_pinned(config);
  const bool full_batch = options.batch_size == 0 || options.batch_size >= M;

  std::vector<std::size_t> all_docs(M);
  std::iota(all_docs.begin(), all_docs.end(), std::size_t{0});
  std::mt19937_64 batch_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);

  GradientOptions grad_opts;
  grad_opts.gamma_floor = options.gamma_floor;
  grad_opts.threads = options.threads;

  TrainResult result;
  for (int epoch = 0;; ++epoch) {
    ElboGradient eg;
    if (full_batch) {
      eg = elbo_gradient(corpus, config, u, grad_opts);
      check_finite(eg.value, eg.grad, all_docs);
    } else {
      eg.value = elbo_corpus_breakdown(corpus, map_params(u), config, map_state(u, config, options.gamma_floor),
                                       true, options.threads);
      if (auto term = eg.value.first_nonfinite_term(); !term.empty()) {
        throw NumericalError(term, "non-finite ELBO term '" + term + "'");
      }
    }

    const bool last = epoch == options.epochs;
    EpochRecord record;
    record.epoch = epoch;
    record.elbo = eg.value.total;
    record.terms = eg.value;
    const Eigen::VectorXd varphi = map_varphi(u, config);
    record.relevant_fraction = relevant_fraction(varphi);

    bool converged = false;
    const auto window = static_cast<std::size_t>(options.convergence_window);
    if (options.convergence_tol > 0.0 && result.history.size() >= window) {
      const double before = result.history[result.history.size() - window].elbo;
      converged = std::abs(record.elbo - before) <= options.convergence_tol * std::abs(record.elbo);
    }
    const bool stop = last || converged;
    if (validation && (stop || (options.validation_interval > 0 && epoch % options.validation_interval == 0))) {
      record.val_metric = validation_metric(*validation, map_params(u), config, varphi, options);
    }
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (stop) {
      result.converged = converged;
      break;
    }

    if (full_batch) {
      opt.step_globals(u, eg.grad, options.learning_rate, pinned);
      for (std::size_t d = 0; d < M; ++d) opt.step_local(u, eg.grad, d, options.learning_rate);
      continue;
    }

    std::vector<std::size_t> order = all_docs;
    std::shuffle(order.begin(), order.end(), batch_rng);
    for (std::size_t start = 0; start < M; start += options.batch_size) {
      const auto end = std::min(M, start + options.batch_size);
      grad_opts.documents.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
      grad_opts.global_scale = static_cast<double>(M) / static_cast<double>(end - start);
      auto batch = elbo_gradient(corpus, config, u, grad_opts);
      check_finite(batch.value, batch.grad, grad_opts.documents);
      opt.step_globals(u, batch.grad, options.learning_rate, pinned);
      for (auto d : grad_opts.documents) opt.step_local(u, batch.grad, d, options.learning_rate);
    }
    grad_opts.documents.clear();
    grad_opts.global_scale = 1.0;
  }

  result.params = map_params(u);
  result.state = map_state(u, config, options.gamma_floor);
  return result;
}

Eigen::VectorXd infer_heldout(const Document& doc, const ModelParams& params, const ModelConfig& config,
                              const Eigen::VectorXd& varphi, const TrainOptions& options) {
  const int K = params.num_topics();
  if (config.num_topics != K) throw InvalidArgument("config and params disagree on K");
  if (varphi.size() != params.vocabulary_size()) throw InvalidArgument("varphi length must equal V");
  const Eigen::VectorXd alpha = config.alpha_or_default();

  // Coordinate ascent on (gamma, phi): each update is the exact maximizer of
  // the document ELBO (without t_y) in its block.
  const auto J = doc.num_distinct();
  std::vector<Eigen::VectorXd> word_logits(J);
  for (std::size_t j = 0; j < J; ++j) {
    const auto w = doc.counts[j].term;
    if (static_cast<Eigen::Index>(w) >= params.vocabulary_size()) throw InvalidArgument("term id out of range");
    Eigen::VectorXd lw = Eigen::VectorXd::Zero(K);
    const double rel = varphi[w];
    if (rel > 0.0) {
      bool supported = false;
      for (int k = 0; k < K; ++k) {
        const double beta = params.beta(k, w);
        lw[k] = beta > 0.0 ? rel * std::log(beta) : -std::numeric_limits<double>::infinity();
        supported |= beta > 0.0;
      }
      if (!supported) lw.setZero();
    }
    word_logits[j] = std::move(lw);
  }

  Eigen::VectorXd gamma = alpha;
  for (int iter = 0; iter < options.heldout_max_iterations; ++iter) {
    const Eigen::VectorXd elog = dirichlet_expected_log(gamma);
    Eigen::VectorXd next = alpha;
    for (std::size_t j = 0; j < J; ++j) next += doc.counts[j].count * softmax(elog + word_logits[j]);
    if (!next.allFinite()) throw NumericalError("gamma", "non-finite held-out topic posterior");
    const double change = (next - gamma).cwiseAbs().maxCoeff();
    gamma = std::move(next);
    if (change <= options.heldout_tol * gamma.sum()) break;
  }
  return gamma;
}

double predict_from_gamma(const Eigen::VectorXd& gamma, const ModelParams& params, const ModelConfig& config) {
  const double m = params.eta.dot(gamma) / gamma.sum();
  return config.target_kind == TargetKind::binary ? sigmoid(m) : m;
}

double predict(const Document& doc, const ModelParams& params, const ModelConfig& config,
               const Eigen::VectorXd& varphi, const TrainOptions& options) {
  return predict_from_gamma(infer_heldout(doc, params, config, varphi, options), params, config);
}

std::vector<double> predict_corpus(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                                   const Eigen::VectorXd& varphi, const TrainOptions& options) {
  std::vector<double> out(corpus.num_documents());
  parallel_for(out.size(), options.threads, [&](std::size_t d) {
    out[d] = predict(corpus.documents[d], params, config, varphi, options);
  });
  return out;
}

}  // namespace pftopics
