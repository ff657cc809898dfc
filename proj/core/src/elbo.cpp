#include "pftopics/elbo.hpp"

#include <cmath>
#include <numbers>

#include <boost/math/special_functions/digamma.hpp>
#include <json.hpp>

#include "pftopics/error.hpp"
#include "pftopics/parallel.hpp"

namespace pftopics {

namespace {

double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

// x * log(y) with 0 * log(0) = 0.
double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

void check_gamma(const Eigen::VectorXd& gamma) {
  if (gamma.size() == 0) throw InvalidArgument("gamma is empty");
  for (double g : gamma)
    if (!(g > 0.0) || !std::isfinite(g)) throw InvalidArgument("gamma entries must be positive and finite");
}

}  // namespace

void ElboBreakdown::finalize() {
  total = t_theta_prior + t_z_given_theta + t_y + t_xi_prior + t_words - h_theta - h_z - h_xi;
}

ElboBreakdown& ElboBreakdown::operator+=(const ElboBreakdown& o) {
  t_theta_prior += o.t_theta_prior;
  t_z_given_theta += o.t_z_given_theta;
  t_y += o.t_y;
  t_xi_prior += o.t_xi_prior;
  t_words += o.t_words;
  h_theta += o.h_theta;
  h_z += o.h_z;
  h_xi += o.h_xi;
  total += o.total;
  return *this;
}

std::string ElboBreakdown::first_nonfinite_term() const {
  const std::pair<const char*, double> terms[] = {
      {"t_theta_prior", t_theta_prior}, {"t_z_given_theta", t_z_given_theta}, {"t_y", t_y},
      {"t_xi_prior", t_xi_prior},       {"t_words", t_words},                 {"h_theta", h_theta},
      {"h_z", h_z},                     {"h_xi", h_xi}};
  for (auto [name, value] : terms)
    if (!std::isfinite(value)) return name;
  return std::isfinite(total) ? std::string() : std::string("total");
}

std::string ElboBreakdown::to_json() const {
  nlohmann::json j{{"t_theta_prior", t_theta_prior}, {"t_z_given_theta", t_z_given_theta},
                   {"t_y", t_y},                     {"t_xi_prior", t_xi_prior},
                   {"t_words", t_words},             {"h_theta", h_theta},
                   {"h_z", h_z},                     {"h_xi", h_xi},
                   {"total", total}};
  return j.dump();
}

void VariationalState::validate(const Corpus& corpus, int num_topics, double tol) const {
  const auto M = corpus.num_documents();
  if (gamma.size() != M || phi.size() != M) throw InvalidArgument("variational state does not cover the corpus");
  if (static_cast<std::size_t>(varphi.size()) != corpus.vocabulary_size()) {
    throw InvalidArgument("varphi length must equal the vocabulary size");
  }
  for (double f : varphi)
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("varphi entries must lie in [0, 1]");
  for (std::size_t d = 0; d < M; ++d) {
    if (gamma[d].size() != num_topics) throw InvalidArgument("gamma has the wrong length");
    check_gamma(gamma[d]);
    const auto& ph = phi[d];
    if (ph.rows() != num_topics || static_cast<std::size_t>(ph.cols()) != corpus.documents[d].num_distinct()) {
      throw InvalidArgument("phi has the wrong shape");
    }
    for (Eigen::Index j = 0; j < ph.cols(); ++j) {
      if ((ph.col(j).array() < 0.0).any() || std::abs(ph.col(j).sum() - 1.0) > tol) {
        throw InvalidArgument("phi column is not on the simplex");
      }
    }
  }
}

Eigen::VectorXd dirichlet_expected_log(const Eigen::VectorXd& gamma) {
  check_gamma(gamma);
  const double psi_total = boost::math::digamma(gamma.sum());
  Eigen::VectorXd out(gamma.size());
  for (Eigen::Index k = 0; k < gamma.size(); ++k) out[k] = boost::math::digamma(gamma[k]) - psi_total;
  return out;
}

DirichletMoments dirichlet_moments(const Eigen::VectorXd& gamma) {
  check_gamma(gamma);
  const double g0 = gamma.sum();
  DirichletMoments m;
  m.mean = gamma / g0;
  m.outer = -m.mean * m.mean.transpose() / (g0 + 1.0);
  m.outer.diagonal() += m.mean / (g0 + 1.0);
  m.outer += m.mean * m.mean.transpose();
  return m;
}

double gaussian_target_term(double y, const Eigen::VectorXd& gamma, const Eigen::VectorXd& eta, double delta) {
  if (!(delta > 0.0)) throw InvalidArgument("delta must be positive");
  if (eta.size() != gamma.size()) throw InvalidArgument("eta and gamma lengths differ");
  const auto m = dirichlet_moments(gamma);
  const double quad = y * y - 2.0 * y * eta.dot(m.mean) + eta.dot(m.outer * eta);
  return -0.5 * std::log(2.0 * std::numbers::pi * delta) - quad / (2.0 * delta);
}

double binary_target_term(double y, const Eigen::VectorXd& gamma, const Eigen::VectorXd& eta) {
  if (y != 0.0 && y != 1.0) throw InvalidArgument("binary target must be 0 or 1");
  if (eta.size() != gamma.size()) throw InvalidArgument("eta and gamma lengths differ");
  check_gamma(gamma);
  const double m = eta.dot(gamma) / gamma.sum();
  return y * log_sigmoid(m) + (1.0 - y) * log_sigmoid(-m);
}

ElboBreakdown elbo_document(const Document& doc, std::optional<double> target, const ModelParams& params,
                            const ModelConfig& config, const DocumentState& state) {
  const int K = params.num_topics();
  const auto V = params.vocabulary_size();
  if (config.num_topics != K) throw InvalidArgument("config and params disagree on K");
  if (state.gamma.size() != K) throw InvalidArgument("gamma has the wrong length");
  if (state.phi.rows() != K || static_cast<std::size_t>(state.phi.cols()) != doc.num_distinct()) {
    throw InvalidArgument("phi has the wrong shape");
  }
  if (state.varphi.size() != V) throw InvalidArgument("varphi length must equal the vocabulary size");

  const Eigen::VectorXd alpha = config.alpha_or_default();
  const Eigen::VectorXd elog = dirichlet_expected_log(state.gamma);
  const double p = config.switch_prior;

  ElboBreakdown b;
  b.t_theta_prior = std::lgamma(alpha.sum()) + (alpha.array() - 1.0).matrix().dot(elog);
  for (int k = 0; k < K; ++k) b.t_theta_prior -= std::lgamma(alpha[k]);

  b.h_theta = std::lgamma(state.gamma.sum()) + (state.gamma.array() - 1.0).matrix().dot(elog);
  for (int k = 0; k < K; ++k) b.h_theta -= std::lgamma(state.gamma[k]);

  if (target) {
    if (config.target_kind == TargetKind::binary) {
      b.t_y = binary_target_term(*target, state.gamma, params.eta);
    } else {
      b.t_y = gaussian_target_term(*target, state.gamma, params.eta, params.delta);
    }
  }

  for (std::size_t j = 0; j < doc.counts.size(); ++j) {
    const auto [w, count] = doc.counts[j];
    if (static_cast<Eigen::Index>(w) >= V) throw InvalidArgument("document term id out of range");
    const double c = count;
    const double relevant = state.varphi[w];
    const double background = 1.0 - relevant;
    const auto ph = state.phi.col(static_cast<Eigen::Index>(j));

    b.t_z_given_theta += c * ph.dot(elog);

    double topic_log = 0.0;
    if (relevant != 0.0) {
      for (int k = 0; k < K; ++k) {
        if (ph[k] == 0.0) continue;
        const double beta = params.beta(k, w);
        if (!(beta > 0.0)) {
          throw NumericalError("t_words", "log of zero beta[" + std::to_string(k) + "][" + std::to_string(w) +
                                              "] under a nonzero switch weight");
        }
        topic_log += ph[k] * std::log(beta);
      }
    }
    double background_log = 0.0;
    if (background != 0.0) {
      if (!(params.pi[w] > 0.0)) {
        throw NumericalError("t_words", "log of zero pi[" + std::to_string(w) + "] under a nonzero switch weight");
      }
      background_log = std::log(params.pi[w]);
    }
    b.t_words += c * (relevant * topic_log + background * background_log);
    b.t_xi_prior += c * (xlogy(relevant, p) + xlogy(background, 1.0 - p));

    double neg_entropy_z = 0.0;
    for (int k = 0; k < K; ++k) neg_entropy_z += xlogx(ph[k]);
    b.h_z += c * neg_entropy_z;
    b.h_xi += c * (xlogx(relevant) + xlogx(background));
  }
  b.finalize();
  return b;
}

ElboBreakdown elbo_corpus_breakdown(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                                    const VariationalState& state, bool include_targets, unsigned threads) {
  const auto M = corpus.num_documents();
  if (state.gamma.size() != M || state.phi.size() != M) {
    throw InvalidArgument("variational state does not cover the corpus");
  }
  std::vector<ElboBreakdown> parts(M);
  parallel_for(M, threads, [&](std::size_t d) {
    const auto& doc = corpus.documents[d];
    parts[d] = elbo_document(doc, include_targets ? doc.target : std::nullopt, params, config,
                             DocumentState{state.gamma[d], state.phi[d], state.varphi});
  });
  ElboBreakdown sum;
  for (const auto& part : parts) sum += part;
  return sum;
}

double elbo_corpus(const Corpus& corpus, const ModelParams& params, const ModelConfig& config,
                   const VariationalState& state, bool include_targets) {
  return elbo_corpus_breakdown(corpus, params, config, state, include_targets).total;
}

}  // namespace pftopics
