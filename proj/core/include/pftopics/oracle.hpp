#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pftopics/corpus.hpp"
#include "pftopics/elbo.hpp"
#include "pftopics/model.hpp"

namespace pftopics::oracle {

/// A document small enough for exhaustive evaluation.
struct TinyInstance {
  ModelConfig config;
  ModelParams params;
  Document doc;
  std::optional<double> target;

  /// Token sequence expanded from doc.counts.
  std::vector<TermId> tokens() const;
  void validate() const;
};

inline constexpr int kMaxTopics = 3;
inline constexpr int kMaxVocabulary = 6;
inline constexpr int kMaxTokens = 6;
inline constexpr double kMaxEnumeration = 1e6;

enum class IntegrationMethod { exact, quadrature, monte_carlo };

struct IntegrationResult {
  double value = 0.0;
  IntegrationMethod method = IntegrationMethod::quadrature;
  /// |coarse - refined| / |refined| for quadrature, standard error for
  /// Monte Carlo, 0 when exact.
  double error_estimate = 0.0;
};

/// Gauss-Jacobi nodes/weights for the Beta(a, b) distribution on [0, 1]:
/// sum_i w_i f(x_i) ~ E[f(U)], U ~ Beta(a, b). Exact for polynomials of
/// degree < 2n.
struct QuadratureRule {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};
QuadratureRule beta_quadrature(int n, double a, double b);

/// log p(w, y) for one document, integrating theta over the simplex with a
/// tensor-product rule through the stick-breaking map. Checked against a
/// rule with twice the points; K = 3 falls back to Monte Carlo when the two
/// disagree by more than 1e-5 relative.
IntegrationResult exact_log_likelihood(const TinyInstance& inst, int quadrature_points = 200);

/// p(xi_n = 1 | w, y) for each token, by enumeration over all switch
/// configurations.
std::vector<double> exact_switch_posterior(const TinyInstance& inst, int quadrature_points = 200);

struct InstanceOptions {
  int max_topics = kMaxTopics;
  int max_vocabulary = kMaxVocabulary;
  int max_tokens = kMaxTokens;
  /// Give beta and pi disjoint supports.
  bool disjoint = false;
  bool with_target = true;
};

TinyInstance random_instance(std::mt19937_64& rng, const InstanceOptions& options = {});

/// Random valid variational state for `inst.doc`.
struct TinyState {
  Eigen::VectorXd gamma;
  Eigen::MatrixXd phi;
  Eigen::VectorXd varphi;

  DocumentState view() const { return {gamma, phi, varphi}; }
};
TinyState random_state(const TinyInstance& inst, std::mt19937_64& rng);

/// Bound suite: `instances` random instances, each scored against
/// `states_per_instance` random variational states. margin = exact - ELBO.
struct BoundCheck {
  int instances = 0;
  int checks = 0;
  int passed = 0;
  int monte_carlo = 0;
  double min_margin = 0.0;
};
BoundCheck check_bound(std::uint64_t seed, int instances, const InstanceOptions& options = {},
                       int states_per_instance = 1, int quadrature_points = 200, double tolerance = 1e-6);

/// Switch-posterior suite. With `disjoint` set, an instance passes when
/// every posterior entry is exactly 0 or 1; otherwise when at least one
/// entry lies strictly inside (0, 1).
struct SwitchCheck {
  int instances = 0;
  int passed = 0;
};
SwitchCheck check_switch_posteriors(std::uint64_t seed, int instances, bool disjoint,
                                    InstanceOptions options = {}, int quadrature_points = 200);

}  // namespace pftopics::oracle
