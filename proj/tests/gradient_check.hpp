#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>

#include "pftopics/inference.hpp"
#include "test_support.hpp"

namespace pftopics::testing {

struct GradientInstance {
  Corpus corpus;
  ModelConfig config;
  UnconstrainedParams u;
};

/// Small random corpus and a random point of the unconstrained chart.
inline GradientInstance random_gradient_instance(std::mt19937_64& rng, TargetKind kind, bool pinned = false) {
  std::normal_distribution<double> n(0.0, 1.0);
  GradientInstance g;
  const int K = 1 + static_cast<int>(rng() % 3);
  const int V = 3 + static_cast<int>(rng() % 4);
  const int M = 2 + static_cast<int>(rng() % 2);
  g.config.num_topics = K;
  g.config.target_kind = kind;
  g.config.switch_prior = pinned ? 1.0 : 0.1 + 0.8 * std::uniform_real_distribution<double>()(rng);
  g.config.alpha = (Eigen::ArrayXd::Random(K) * 0.5 + 1.0).matrix();

  g.corpus.vocabulary = numbered_vocabulary(static_cast<std::size_t>(V));
  g.corpus.target_kind = kind;
  for (int d = 0; d < M; ++d) {
    Document doc{"g" + std::to_string(d), {}, std::nullopt};
    for (int v = 0; v < V; ++v)
      if (rng() % 3 != 0) doc.counts.push_back({static_cast<TermId>(v), static_cast<std::uint32_t>(1 + rng() % 4)});
    if (doc.counts.empty()) doc.counts.push_back({0, 2u});
    doc.target = kind == TargetKind::binary ? static_cast<double>(rng() % 2) : n(rng);
    g.corpus.documents.push_back(std::move(doc));
  }

  g.u = init_unconstrained(g.config, static_cast<std::size_t>(V), rng(), &g.corpus);
  for (auto& x : g.u.beta_logits.reshaped()) x = n(rng);
  for (auto& x : g.u.pi_logits) x = n(rng);
  for (auto& x : g.u.varphi_logits) x = n(rng);
  for (auto& x : g.u.eta) x = n(rng);
  g.u.delta_raw = n(rng);
  for (auto& raw : g.u.gamma_raw)
    for (auto& x : raw) x = n(rng);
  for (auto& logits : g.u.phi_logits)
    for (auto& x : logits.reshaped()) x = n(rng);
  return g;
}

struct BlockCheck {
  std::string block;
  int coordinates = 0;
  int failures = 0;
  double worst_relative = 0.0;
  double worst_absolute = 0.0;
};

/// Compares every analytic partial derivative with a central difference.
/// A coordinate passes if the two agree within `rel` relative or within
/// `abs_floor` absolute.
inline std::vector<BlockCheck> check_gradient(const GradientInstance& g, const GradientOptions& options,
                                              double step = 1e-5, double rel = 1e-4, double abs_floor = 1e-6) {
  const auto analytic = elbo_gradient(g.corpus, g.config, g.u, options).grad;

  // Objective the gradient refers to: the selected documents, with the
  // global-only terms scaled as the minibatch estimator does.
  Corpus sub = g.corpus;
  std::vector<std::size_t> docs = options.documents;
  if (docs.empty())
    for (std::size_t d = 0; d < g.corpus.num_documents(); ++d) docs.push_back(d);
  sub.documents.clear();
  for (auto d : docs) sub.documents.push_back(g.corpus.documents[d]);

  auto objective = [&](const UnconstrainedParams& u) {
    UnconstrainedParams local = u;
    local.gamma_raw.clear();
    local.phi_logits.clear();
    for (auto d : docs) {
      local.gamma_raw.push_back(u.gamma_raw[d]);
      local.phi_logits.push_back(u.phi_logits[d]);
    }
    return elbo_corpus(sub, map_params(local), g.config, map_state(local, g.config, options.gamma_floor),
                       options.include_targets);
  };

  std::vector<BlockCheck> out;
  auto check_block = [&](const std::string& name, auto&& access, Eigen::Index size, auto&& expected, double scale) {
    BlockCheck b{name};
    for (Eigen::Index i = 0; i < size; ++i) {
      UnconstrainedParams plus = g.u, minus = g.u;
      access(plus, i) += step;
      access(minus, i) -= step;
      const double fd = scale * (objective(plus) - objective(minus)) / (2 * step);
      const double an = expected(i);
      const double err = std::abs(fd - an);
      const double relative = err / std::max({std::abs(fd), std::abs(an), 1e-300});
      ++b.coordinates;
      if (err > abs_floor && relative > rel) ++b.failures;
      if (err > abs_floor) b.worst_relative = std::max(b.worst_relative, relative);
      b.worst_absolute = std::max(b.worst_absolute, err);
    }
    out.push_back(b);
  };

  const double s = options.global_scale;
  check_block(
      "beta_logits", [](UnconstrainedParams& u, Eigen::Index i) -> double& { return u.beta_logits.reshaped()[i]; },
      g.u.beta_logits.size(), [&](Eigen::Index i) { return analytic.beta_logits.reshaped()[i]; }, s);
  check_block(
      "pi_logits", [](UnconstrainedParams& u, Eigen::Index i) -> double& { return u.pi_logits[i]; },
      g.u.pi_logits.size(), [&](Eigen::Index i) { return analytic.pi_logits[i]; }, s);
  check_block(
      "varphi_logits", [](UnconstrainedParams& u, Eigen::Index i) -> double& { return u.varphi_logits[i]; },
      g.u.varphi_logits.size(), [&](Eigen::Index i) { return analytic.varphi_logits[i]; }, s);
  check_block(
      "eta", [](UnconstrainedParams& u, Eigen::Index i) -> double& { return u.eta[i]; }, g.u.eta.size(),
      [&](Eigen::Index i) { return analytic.eta[i]; }, s);
  check_block(
      "delta_raw", [](UnconstrainedParams& u, Eigen::Index) -> double& { return u.delta_raw; }, 1,
      [&](Eigen::Index) { return analytic.delta_raw; }, s);
  for (auto d : docs) {
    check_block(
        "gamma_raw[" + std::to_string(d) + "]",
        [d](UnconstrainedParams& u, Eigen::Index i) -> double& { return u.gamma_raw[d][i]; },
        g.u.gamma_raw[d].size(), [&, d](Eigen::Index i) { return analytic.gamma_raw[d][i]; }, 1.0);
    check_block(
        "phi_logits[" + std::to_string(d) + "]",
        [d](UnconstrainedParams& u, Eigen::Index i) -> double& { return u.phi_logits[d].reshaped()[i]; },
        g.u.phi_logits[d].size(), [&, d](Eigen::Index i) { return analytic.phi_logits[d].reshaped()[i]; }, 1.0);
  }
  return out;
}

}  // namespace pftopics::testing
