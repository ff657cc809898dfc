#include <doctest.h>

#include <cmath>
#include <random>

#include "pftopics/elbo.hpp"
#include "pftopics/error.hpp"
#include "pftopics/oracle.hpp"

using namespace pftopics;
using namespace pftopics::oracle;

namespace {

TinyInstance one_topic_instance(double p, Eigen::VectorXd beta, Eigen::VectorXd pi, Document doc) {
  TinyInstance inst;
  inst.config.num_topics = 1;
  inst.config.switch_prior = p;
  inst.config.target_kind = TargetKind::real;
  inst.params.beta = beta.transpose();
  inst.params.pi = std::move(pi);
  inst.params.eta = Eigen::VectorXd::Zero(1);
  inst.doc = std::move(doc);
  return inst;
}

}  // namespace

TEST_CASE("Beta quadrature reproduces moments") {
  for (auto [a, b] : {std::pair{1.0, 1.0}, {0.5, 2.0}, {3.0, 0.7}, {2.5, 4.0}}) {
    const auto rule = beta_quadrature(12, a, b);
    CHECK(rule.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
    // E[X^m] = prod_{i<m} (a + i) / (a + b + i).
    double exact = 1.0;
    for (int m = 1; m <= 10; ++m) {
      exact *= (a + m - 1) / (a + b + m - 1);
      const double approx = rule.weights.dot(rule.nodes.array().pow(m).matrix());
      CHECK(approx == doctest::Approx(exact).epsilon(1e-12));
    }
    CHECK(rule.nodes.minCoeff() > 0.0);
    CHECK(rule.nodes.maxCoeff() < 1.0);
  }
  CHECK_THROWS_AS(beta_quadrature(0, 1, 1), InvalidArgument);
  CHECK_THROWS_AS(beta_quadrature(4, 0, 1), InvalidArgument);
}

TEST_CASE("exact_log_likelihood hand examples") {
  const Document one{"d", {{0, 1}}, std::nullopt};
  const auto mixture = one_topic_instance(0.5, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), one);
  const auto r = exact_log_likelihood(mixture);
  CHECK(r.method == IntegrationMethod::exact);
  CHECK(r.value == doctest::Approx(std::log(0.5)).epsilon(1e-14));

  const auto collapsed = one_topic_instance(1.0, Eigen::Vector3d(0.2, 0.3, 0.5), Eigen::Vector3d(0.6, 0.2, 0.2),
                                            Document{"d", {{1, 1}}, std::nullopt});
  CHECK(exact_log_likelihood(collapsed).value == doctest::Approx(std::log(0.3)).epsilon(1e-14));

  const Eigen::Vector3d beta(0.2, 0.3, 0.5), pi(0.6, 0.2, 0.2);
  const double a = exact_log_likelihood(one_topic_instance(0.4, beta, pi, {"d", {{0, 1}}, std::nullopt})).value;
  const double b = exact_log_likelihood(one_topic_instance(0.4, beta, pi, {"d", {{2, 1}}, std::nullopt})).value;
  const double both = exact_log_likelihood(one_topic_instance(0.4, beta, pi, {"d", {{0, 1}, {2, 1}}, std::nullopt})).value;
  CHECK(both == doctest::Approx(a + b).epsilon(1e-13));
}

TEST_CASE("two-topic likelihood against a closed form") {
  // With Dirichlet(1, 1) and one token, p(w) = p * mean(beta_w) + (1-p) pi_w.
  TinyInstance inst;
  inst.config.num_topics = 2;
  inst.config.switch_prior = 0.3;
  inst.config.target_kind = TargetKind::real;
  inst.params.beta.resize(2, 2);
  inst.params.beta << 0.9, 0.1, 0.2, 0.8;
  inst.params.pi = Eigen::Vector2d(0.5, 0.5);
  inst.params.eta = Eigen::Vector2d(0, 0);
  inst.doc = {"d", {{0, 1}}, std::nullopt};
  const double expected = 0.3 * 0.55 + 0.7 * 0.5;
  CHECK(exact_log_likelihood(inst).value == doctest::Approx(std::log(expected)).epsilon(1e-12));
}

TEST_CASE("tiny instance bounds") {
  std::mt19937_64 rng(1);
  auto inst = random_instance(rng);
  inst.doc.counts = {{0, 7}};
  CHECK_THROWS_AS(exact_log_likelihood(inst), InvalidArgument);
}

TEST_CASE("quadrature refinement is stable") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    InstanceOptions opts;
    opts.max_topics = 2;
    const auto inst = random_instance(rng, opts);
    const double coarse = exact_log_likelihood(inst, 100).value;
    const double fine = exact_log_likelihood(inst, 200).value;
    CHECK(std::abs(coarse - fine) < 1e-6 * std::max(1.0, std::abs(fine)));
  }
}

TEST_CASE("switch posterior point masses for disjoint channels") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    InstanceOptions opts;
    opts.disjoint = true;
    const auto inst = random_instance(rng, opts);
    const auto posterior = exact_switch_posterior(inst, 60);
    const auto tokens = inst.tokens();
    for (std::size_t n = 0; n < tokens.size(); ++n) {
      const double expected = inst.params.pi[tokens[n]] == 0.0 ? 1.0 : 0.0;
      CHECK(posterior[n] == expected);
    }
  }
}

TEST_CASE("switch posterior is interior for overlapping channels") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    auto inst = random_instance(rng);
    inst.config.switch_prior = 0.5;
    const auto posterior = exact_switch_posterior(inst, 60);
    for (double q : posterior) {
      CHECK(q > 0.0);
      CHECK(q < 1.0);
    }
  }
}

TEST_CASE("switch posterior matches a one-token closed form") {
  const Eigen::Vector3d beta(0.2, 0.3, 0.5), pi(0.6, 0.2, 0.2);
  const auto inst = one_topic_instance(0.4, beta, pi, {"d", {{0, 1}}, std::nullopt});
  const double expected = 0.4 * 0.2 / (0.4 * 0.2 + 0.6 * 0.6);
  CHECK(exact_switch_posterior(inst)[0] == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("the bound sits below the exact likelihood") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    InstanceOptions opts;
    opts.max_topics = 2;
    opts.disjoint = trial % 4 == 0;
    const auto inst = random_instance(rng, opts);
    const double exact = exact_log_likelihood(inst, 100).value;
    for (int s = 0; s < 3; ++s) {
      const auto state = random_state(inst, rng);
      const auto b = elbo_document(inst.doc, inst.target, inst.params, inst.config, state.view());
      CHECK(b.total <= exact + 1e-6);
    }
  }
}

TEST_CASE("random_state is valid") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    InstanceOptions opts;
    opts.disjoint = trial % 2 == 0;
    const auto inst = random_instance(rng, opts);
    CHECK_NOTHROW(inst.validate());
    const auto s = random_state(inst, rng);
    CHECK(s.gamma.minCoeff() > 0.0);
    for (Eigen::Index j = 0; j < s.phi.cols(); ++j) CHECK(std::abs(s.phi.col(j).sum() - 1.0) < 1e-12);
    CHECK(std::isfinite(elbo_document(inst.doc, inst.target, inst.params, inst.config, s.view()).total));
  }
}
