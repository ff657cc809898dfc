#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pftopics/corpus.hpp"
#include "pftopics/model.hpp"

namespace pftopics {

/// Variational parameters. `phi[d]` is K x (distinct terms of document d),
/// one responsibility column per distinct term in the order of
/// Document::counts. `varphi` is indexed by vocabulary word only.
struct VariationalState {
  std::vector<Eigen::VectorXd> gamma;
  std::vector<Eigen::MatrixXd> phi;
  Eigen::VectorXd varphi;

  void validate(const Corpus& corpus, int num_topics, double tol = 1e-8) const;
};

/// Per-document slice of a VariationalState.
struct DocumentState {
  const Eigen::VectorXd& gamma;
  const Eigen::MatrixXd& phi;
  const Eigen::VectorXd& varphi;
};

/// The eight expectation terms of the per-document bound. The three `h_`
/// fields hold E_q[log q] (negative entropies), so
/// total = t_theta_prior + t_z_given_theta + t_y + t_xi_prior + t_words
///         - h_theta - h_z - h_xi.
struct ElboBreakdown {
  double t_theta_prior = 0.0;
  double t_z_given_theta = 0.0;
  double t_y = 0.0;
  double t_xi_prior = 0.0;
  double t_words = 0.0;
  double h_theta = 0.0;
  double h_z = 0.0;
  double h_xi = 0.0;
  double total = 0.0;

  void finalize();
  ElboBreakdown& operator+=(const ElboBreakdown& other);

  /// Name of the first non-finite term, or empty when all are finite.
  std::string first_nonfinite_term() const;
  std::string to_json() const;
};

/// E_q[log theta_k] = digamma(gamma_k) - digamma(sum gamma).
Eigen::VectorXd dirichlet_expected_log(const Eigen::VectorXd& gamma);

struct DirichletMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd outer;
};

DirichletMoments dirichlet_moments(const Eigen::VectorXd& gamma);

/// Gaussian GLM term E_q[log N(y | eta' theta, delta)].
double gaussian_target_term(double y, const Eigen::VectorXd& gamma, const Eigen::VectorXd& eta, double delta);

/// Bernoulli-logistic GLM term evaluated at the plug-in mean E_q[theta].
double binary_target_term(double y, const Eigen::VectorXd& gamma, const Eigen::VectorXd& eta);

/// `target` is ignored (t_y = 0) when absent.
ElboBreakdown elbo_document(const Document& doc, std::optional<double> target, const ModelParams& params,
                            const ModelConfig& config, const DocumentState& state);

/// Sum of per-document totals, reduced in document order. Set
/// `include_targets` to false to drop every t_y term.
double elbo_corpus(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                   const VariationalState& state, bool include_targets = true);

/// Summed breakdown over the corpus (document order).
ElboBreakdown elbo_corpus_breakdown(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                                    const VariationalState& state, bool include_targets = true,
                                    unsigned threads = 1);

}  // namespace pftopics
