#include "pftopics/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "pftopics/error.hpp"

namespace pftopics::oracle {

std::vector<TermId> TinyInstance::tokens() const {
  std::vector<TermId> out;
  for (const auto& tc : doc.counts) out.insert(out.end(), tc.count, tc.term);
  return out;
}

void TinyInstance::validate() const {
  config.validate();
  params.validate();
  const int K = config.num_topics;
  if (params.num_topics() != K) throw InvalidArgument("tiny instance: params and config disagree on K");
  if (K > kMaxTopics) throw InvalidArgument("tiny instance: K exceeds 3");
  if (params.vocabulary_size() > kMaxVocabulary) throw InvalidArgument("tiny instance: V exceeds 6");
  const auto N = doc.num_tokens();
  if (N < 1) throw InvalidArgument("tiny instance: document has no tokens");
  if (N > static_cast<std::size_t>(kMaxTokens)) throw InvalidArgument("tiny instance: more than 6 tokens");
  if (std::pow(2.0, static_cast<double>(N)) * std::pow(static_cast<double>(K), static_cast<double>(N)) >
      kMaxEnumeration) {
    throw InvalidArgument("tiny instance: enumeration exceeds 1e6 states");
  }
  for (const auto& tc : doc.counts)
    if (static_cast<int>(tc.term) >= params.vocabulary_size()) throw InvalidArgument("tiny instance: term out of range");
  if (target && config.target_kind == TargetKind::binary && *target != 0.0 && *target != 1.0) {
    throw InvalidArgument("tiny instance: binary target must be 0 or 1");
  }
}

QuadratureRule beta_quadrature(int n, double a, double b) {
  if (n < 1) throw InvalidArgument("quadrature needs at least one point");
  if (!(a > 0.0 && b > 0.0)) throw InvalidArgument("Beta parameters must be positive");
  // Golub-Welsch on the Jacobi recurrence for weight (1-t)^ja (1+t)^jb on
  // [-1, 1], with t = 2x - 1 so (1+t) carries the x^(a-1) factor.
  const double ja = b - 1.0;
  const double jb = a - 1.0;
  const double s = ja + jb;
  Eigen::VectorXd diag(n);
  Eigen::VectorXd off(std::max(n - 1, 0));
  diag[0] = (jb - ja) / (s + 2.0);
  for (int i = 1; i < n; ++i) {
    const double c = 2.0 * i + s;
    diag[i] = (jb * jb - ja * ja) / (c * (c + 2.0));
  }
  for (int i = 1; i < n; ++i) {
    const double c = 2.0 * i + s;
    double sq;
    if (i == 1) {
      sq = 4.0 * (1.0 + ja) * (1.0 + jb) / ((2.0 + s) * (2.0 + s) * (3.0 + s));
    } else {
      sq = 4.0 * i * (i + ja) * (i + jb) * (i + s) / (c * c * (c + 1.0) * (c - 1.0));
    }
    off[i - 1] = std::sqrt(sq);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, off, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success) throw NumericalError("quadrature", "Jacobi eigenproblem failed");

  QuadratureRule rule;
  rule.nodes = (solver.eigenvalues().array() + 1.0).matrix() / 2.0;
  rule.weights = solver.eigenvectors().row(0).transpose().array().square().matrix();
  rule.weights /= rule.weights.sum();
  return rule;
}

namespace {

// Nodes on the simplex with probability weights under Dirichlet(alpha).
struct SimplexRule {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> weights;
};

SimplexRule simplex_rule(const Eigen::VectorXd& alpha, int n) {
  SimplexRule rule;
  const auto K = alpha.size();
  if (K == 1) {
    rule.points.push_back(Eigen::VectorXd::Ones(1));
    rule.weights.push_back(1.0);
  } else if (K == 2) {
    const auto q = beta_quadrature(n, alpha[0], alpha[1]);
    for (int i = 0; i < n; ++i) {
      rule.points.push_back((Eigen::VectorXd(2) << q.nodes[i], 1.0 - q.nodes[i]).finished());
      rule.weights.push_back(q.weights[i]);
    }
  } else if (K == 3) {
    // Stick breaking: theta1 ~ Beta(a1, a2 + a3); theta2 / (1 - theta1) ~ Beta(a2, a3).
    const auto q1 = beta_quadrature(n, alpha[0], alpha[1] + alpha[2]);
    const auto q2 = beta_quadrature(n, alpha[1], alpha[2]);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const double u = q1.nodes[i];
        const double v = q2.nodes[j];
        rule.points.push_back((Eigen::VectorXd(3) << u, (1.0 - u) * v, (1.0 - u) * (1.0 - v)).finished());
        rule.weights.push_back(q1.weights[i] * q2.weights[j]);
      }
    }
  } else {
    throw InvalidArgument("simplex quadrature supports K <= 3");
  }
  return rule;
}

double target_density(const TinyInstance& inst, const Eigen::VectorXd& theta) {
  if (!inst.target) return 1.0;
  const double m = inst.params.eta.dot(theta);
  const double y = *inst.target;
  if (inst.config.target_kind == TargetKind::binary) return y == 1.0 ? sigmoid(m) : sigmoid(-m);
  const double delta = inst.params.delta;
  return std::exp(-(y - m) * (y - m) / (2.0 * delta)) / std::sqrt(2.0 * std::numbers::pi * delta);
}

// p(w, y | theta) with the switches summed out.
double marginal_integrand(const TinyInstance& inst, const std::vector<TermId>& tokens, const Eigen::VectorXd& theta) {
  const double p = inst.config.switch_prior;
  double f = target_density(inst, theta);
  for (auto w : tokens) f *= p * inst.params.beta.col(w).dot(theta) + (1.0 - p) * inst.params.pi[w];
  return f;
}

double integrate(const SimplexRule& rule, const auto& integrand) {
  double total = 0.0;
  for (std::size_t i = 0; i < rule.points.size(); ++i) total += rule.weights[i] * integrand(rule.points[i]);
  return total;
}

IntegrationResult monte_carlo_log_likelihood(const TinyInstance& inst, const std::vector<TermId>& tokens,
                                             std::size_t samples) {
  const Eigen::VectorXd alpha = inst.config.alpha_or_default();
  std::mt19937_64 rng(inst.config.seed ^ 0x5eedULL);
  std::vector<std::gamma_distribution<double>> draws;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) draws.emplace_back(alpha[k], 1.0);
  double sum = 0.0, sum_sq = 0.0;
  Eigen::VectorXd theta(alpha.size());
  for (std::size_t s = 0; s < samples; ++s) {
    for (Eigen::Index k = 0; k < alpha.size(); ++k) theta[k] = draws[k](rng);
    theta /= theta.sum();
    const double f = marginal_integrand(inst, tokens, theta);
    sum += f;
    sum_sq += f * f;
  }
  const double n = static_cast<double>(samples);
  const double mean = sum / n;
  const double var = std::max(sum_sq / n - mean * mean, 0.0);
  return {std::log(mean), IntegrationMethod::monte_carlo, std::sqrt(var / n) / mean};
}

}  // namespace

IntegrationResult exact_log_likelihood(const TinyInstance& inst, int quadrature_points) {
  inst.validate();
  const auto tokens = inst.tokens();
  const Eigen::VectorXd alpha = inst.config.alpha_or_default();
  const auto integrand = [&](const Eigen::VectorXd& theta) { return marginal_integrand(inst, tokens, theta); };

  if (alpha.size() == 1) {
    return {std::log(integrand(Eigen::VectorXd::Ones(1))), IntegrationMethod::exact, 0.0};
  }
  const double coarse = std::log(integrate(simplex_rule(alpha, quadrature_points), integrand));
  const double refined = std::log(integrate(simplex_rule(alpha, 2 * quadrature_points), integrand));
  // Differences of logs are relative differences of the likelihood.
  const double disagreement = std::abs(coarse - refined);
  if (disagreement > 1e-5) {
    if (alpha.size() == 3) return monte_carlo_log_likelihood(inst, tokens, 10'000'000);
    throw NumericalError("quadrature", "simplex quadrature did not converge (disagreement " +
                                           std::to_string(disagreement) + ")");
  }
  return {refined, IntegrationMethod::quadrature, disagreement};
}

std::vector<double> exact_switch_posterior(const TinyInstance& inst, int quadrature_points) {
  inst.validate();
  const auto tokens = inst.tokens();
  const auto N = tokens.size();
  const double p = inst.config.switch_prior;
  const auto rule = simplex_rule(inst.config.alpha_or_default(), quadrature_points);

  std::vector<double> relevant_mass(N, 0.0);
  double total = 0.0;
  for (std::uint32_t mask = 0; mask < (1u << N); ++mask) {
    double prior = 1.0;
    for (std::size_t n = 0; n < N; ++n) prior *= (mask >> n & 1u) ? p : 1.0 - p;
    if (prior == 0.0) continue;
    const double likelihood = integrate(rule, [&](const Eigen::VectorXd& theta) {
      double f = target_density(inst, theta);
      for (std::size_t n = 0; n < N; ++n) {
        const auto w = tokens[n];
        f *= (mask >> n & 1u) ? inst.params.beta.col(w).dot(theta) : inst.params.pi[w];
      }
      return f;
    });
    const double joint = prior * likelihood;
    total += joint;
    for (std::size_t n = 0; n < N; ++n)
      if (mask >> n & 1u) relevant_mass[n] += joint;
  }
  if (!(total > 0.0)) throw NumericalError("posterior", "document has zero probability under the instance");
  for (auto& m : relevant_mass) m /= total;
  return relevant_mass;
}

namespace {

Eigen::VectorXd dirichlet_draw(std::mt19937_64& rng, Eigen::Index n) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = e(rng) + 1e-3;
  return out / out.sum();
}

}  // namespace

TinyInstance random_instance(std::mt19937_64& rng, const InstanceOptions& options) {
  auto uniform_int = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };

  TinyInstance inst;
  const int K = uniform_int(1, options.max_topics);
  const int V = uniform_int(2, options.max_vocabulary);
  const int N = uniform_int(1, options.max_tokens);

  inst.config.num_topics = K;
  inst.config.switch_prior = uniform(0.05, 0.95);
  inst.config.alpha.resize(K);
  for (int k = 0; k < K; ++k) inst.config.alpha[k] = uniform(0.5, 2.0);
  inst.config.target_kind = TargetKind::real;
  inst.config.seed = rng();

  inst.params.beta = Eigen::MatrixXd::Zero(K, V);
  inst.params.pi = Eigen::VectorXd::Zero(V);
  if (options.disjoint) {
    const int split = uniform_int(1, V - 1);
    for (int k = 0; k < K; ++k) inst.params.beta.row(k).head(split) = dirichlet_draw(rng, split).transpose();
    inst.params.pi.tail(V - split) = dirichlet_draw(rng, V - split);
  } else {
    for (int k = 0; k < K; ++k) inst.params.beta.row(k) = dirichlet_draw(rng, V).transpose();
    inst.params.pi = dirichlet_draw(rng, V);
  }
  inst.params.eta.resize(K);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < K; ++k) inst.params.eta[k] = normal(rng);
  inst.params.delta = uniform(0.5, 2.0);

  std::vector<std::uint32_t> counts(V, 0);
  for (int n = 0; n < N; ++n) ++counts[uniform_int(0, V - 1)];
  for (int v = 0; v < V; ++v)
    if (counts[v]) inst.doc.counts.push_back({static_cast<TermId>(v), counts[v]});
  inst.doc.id = "tiny";
  if (options.with_target) {
    inst.target = 2.0 * normal(rng);
    inst.doc.target = inst.target;
  }
  return inst;
}

TinyState random_state(const TinyInstance& inst, std::mt19937_64& rng) {
  const int K = inst.config.num_topics;
  const auto V = inst.params.vocabulary_size();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  TinyState s;
  s.gamma.resize(K);
  for (int k = 0; k < K; ++k) s.gamma[k] = std::exp(normal(rng));
  s.phi.resize(K, static_cast<Eigen::Index>(inst.doc.num_distinct()));
  for (Eigen::Index j = 0; j < s.phi.cols(); ++j) s.phi.col(j) = dirichlet_draw(rng, K);
  s.varphi.resize(V);
  for (Eigen::Index v = 0; v < V; ++v) {
    // Words outside one channel's support take the only switch value with a
    // finite bound.
    const bool in_beta = (inst.params.beta.col(v).array() > 0.0).all();
    const bool in_pi = inst.params.pi[v] > 0.0;
    if (in_beta && in_pi) {
      s.varphi[v] = unit(rng);
    } else {
      s.varphi[v] = in_pi ? 0.0 : 1.0;
    }
  }
  return s;
}

BoundCheck check_bound(std::uint64_t seed, int instances, const InstanceOptions& options, int states_per_instance,
                       int quadrature_points, double tolerance) {
  std::mt19937_64 rng(seed);
  BoundCheck result;
  result.min_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < instances; ++i) {
    const auto inst = random_instance(rng, options);
    const auto exact = exact_log_likelihood(inst, quadrature_points);
    if (exact.method == IntegrationMethod::monte_carlo) ++result.monte_carlo;
    ++result.instances;
    for (int s = 0; s < states_per_instance; ++s) {
      const auto state = random_state(inst, rng);
      const double bound = elbo_document(inst.doc, inst.target, inst.params, inst.config, state.view()).total;
      const double margin = exact.value - bound;
      ++result.checks;
      if (margin >= -tolerance) ++result.passed;
      result.min_margin = std::min(result.min_margin, margin);
    }
  }
  return result;
}

SwitchCheck check_switch_posteriors(std::uint64_t seed, int instances, bool disjoint, InstanceOptions options,
                                    int quadrature_points) {
  std::mt19937_64 rng(seed);
  options.disjoint = disjoint;
  SwitchCheck result;
  for (int i = 0; i < instances; ++i) {
    const auto inst = random_instance(rng, options);
    const auto posterior = exact_switch_posterior(inst, quadrature_points);
    bool ok;
    if (disjoint) {
      ok = std::all_of(posterior.begin(), posterior.end(), [](double q) { return q == 0.0 || q == 1.0; });
    } else {
      ok = std::any_of(posterior.begin(), posterior.end(), [](double q) { return q > 0.0 && q < 1.0; });
    }
    ++result.instances;
    if (ok) ++result.passed;
  }
  return result;
}

}  // namespace pftopics::oracle
