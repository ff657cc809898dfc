#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

#include "gradient_check.hpp"
#include "pftopics/error.hpp"
#include "pftopics/eval.hpp"
#include "pftopics/inference.hpp"
#include "test_support.hpp"

using namespace pftopics;
using namespace pftopics::testing;

namespace {

void require_gradient_ok(const GradientInstance& g, const GradientOptions& options) {
  for (const auto& b : check_gradient(g, options)) {
    INFO("block " << b.block << " worst relative error " << b.worst_relative);
    CHECK(b.failures == 0);
  }
}

SampledCorpus small_synthetic(std::uint64_t seed, std::size_t docs = 120, double p = 0.3) {
  auto config = recovery_config();
  config.switch_prior = p;
  return sample_corpus(config, recovery_truth(), numbered_vocabulary(30), docs, 40, seed);
}

}  // namespace

TEST_CASE("softplus chart") {
  for (double y : {1e-8, 1e-3, 0.5, 1.0, 7.0, 50.0}) CHECK(softplus(softplus_inverse(y)) == doctest::Approx(y));
  CHECK(softplus(-800) >= 0.0);
  CHECK(std::isfinite(softplus(800)));
  CHECK_THROWS_AS(softplus_inverse(0.0), InvalidArgument);
}

TEST_CASE("init_unconstrained") {
  const auto config = recovery_config();
  const auto a = init_unconstrained(config, 30, 17);
  const auto b = init_unconstrained(config, 30, 17);
  CHECK(a.beta_logits == b.beta_logits);
  CHECK(a.pi_logits == b.pi_logits);
  CHECK(a.beta_logits != init_unconstrained(config, 30, 18).beta_logits);

  const auto params = map_params(a);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(params.beta.row(k).sum() - 1.0) < 1e-8);
  CHECK(std::abs(params.pi.sum() - 1.0) < 1e-8);
  CHECK(params.delta == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(params.eta.isZero());
  CHECK((map_varphi(a, config).array() == 0.5).all());
  // Topics start distinct from one another.
  CHECK((params.beta.row(0) - params.beta.row(1)).norm() > 1e-3);

  const auto corpus = small_synthetic(1, 5).corpus;
  const auto with_local = init_unconstrained(config, 30, 17, &corpus);
  const auto state = map_state(with_local, config, 1e-3);
  REQUIRE(state.gamma.size() == 5);
  for (const auto& g : state.gamma) CHECK((g.array() - 1.0).abs().maxCoeff() < 1e-9);
  for (std::size_t d = 0; d < 5; ++d) {
    CHECK(state.phi[d].cols() == static_cast<Eigen::Index>(corpus.documents[d].num_distinct()));
    CHECK((state.phi[d].array() - 1.0 / 3.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mapped values always satisfy the invariants") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> wide(0.0, 30.0);
  for (int trial = 0; trial < 100; ++trial) {
    auto g = random_gradient_instance(rng, TargetKind::real, trial % 5 == 0);
    for (auto& x : g.u.beta_logits.reshaped()) x = wide(rng);
    for (auto& x : g.u.pi_logits) x = wide(rng);
    for (auto& x : g.u.varphi_logits) x = wide(rng);
    g.u.delta_raw = wide(rng);
    for (auto& raw : g.u.gamma_raw)
      for (auto& x : raw) x = wide(rng);
    for (auto& logits : g.u.phi_logits)
      for (auto& x : logits.reshaped()) x = wide(rng);
    const auto params = map_params(g.u);
    CHECK_NOTHROW(params.validate());
    CHECK(params.delta > 0.0);
    const auto state = map_state(g.u, g.config, 1e-3);
    CHECK_NOTHROW(state.validate(g.corpus, g.config.num_topics));
    for (const auto& gamma : state.gamma) CHECK(gamma.minCoeff() >= 1e-3);
  }
}

TEST_CASE("analytic gradients match finite differences") {
  std::mt19937_64 rng(31);
  SUBCASE("real targets") {
    for (int trial = 0; trial < 10; ++trial) require_gradient_ok(random_gradient_instance(rng, TargetKind::real), {});
  }
  SUBCASE("binary targets") {
    for (int trial = 0; trial < 10; ++trial) require_gradient_ok(random_gradient_instance(rng, TargetKind::binary), {});
  }
  SUBCASE("targets dropped") {
    GradientOptions opts;
    opts.include_targets = false;
    for (int trial = 0; trial < 5; ++trial) require_gradient_ok(random_gradient_instance(rng, TargetKind::real), opts);
  }
  SUBCASE("switch pinned at p = 1") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto g = random_gradient_instance(rng, TargetKind::real, true);
      require_gradient_ok(g, {});
      CHECK(elbo_gradient(g.corpus, g.config, g.u, {}).grad.varphi_logits.isZero());
    }
  }
  SUBCASE("minibatch estimator") {
    for (int trial = 0; trial < 5; ++trial) {
      const auto g = random_gradient_instance(rng, TargetKind::real);
      GradientOptions opts;
      opts.documents = {g.corpus.num_documents() - 1};
      opts.global_scale = static_cast<double>(g.corpus.num_documents());
      opts.threads = 2;
      require_gradient_ok(g, opts);
    }
  }
}

TEST_CASE("gradient value and threading") {
  std::mt19937_64 rng(41);
  const auto g = random_gradient_instance(rng, TargetKind::real);
  GradientOptions one, many;
  many.threads = 3;
  const auto a = elbo_gradient(g.corpus, g.config, g.u, one);
  const auto b = elbo_gradient(g.corpus, g.config, g.u, many);
  CHECK(a.value.total == b.value.total);
  CHECK(a.grad.beta_logits == b.grad.beta_logits);
  CHECK(a.value.total == doctest::Approx(elbo_corpus(g.corpus, map_params(g.u), g.config,
                                                     map_state(g.u, g.config, 1e-3)))
                             .epsilon(1e-12));
}

TEST_CASE("training raises the ELBO and is deterministic") {
  const auto sample = small_synthetic(3);
  TrainOptions opts;
  opts.epochs = 150;
  opts.seed = 5;
  const auto config = recovery_config();
  std::vector<int> epochs_seen;
  const auto a = train(sample.corpus, config, opts, nullptr, [&](const EpochRecord& r) { epochs_seen.push_back(r.epoch); });
  REQUIRE(!a.history.empty());
  CHECK(a.history.front().epoch == 0);
  CHECK(a.history.back().elbo > a.history.front().elbo);
  CHECK(epochs_seen.size() == a.history.size());
  CHECK_NOTHROW(a.params.validate());
  CHECK_NOTHROW(a.state.validate(sample.corpus, 3));

  opts.threads = 2;
  const auto b = train(sample.corpus, config, opts);
  CHECK(a.params.beta == b.params.beta);
  CHECK(a.params.eta == b.params.eta);
  CHECK(a.state.varphi == b.state.varphi);
  CHECK(a.history.back().elbo == b.history.back().elbo);
}

TEST_CASE("minibatch training") {
  const auto sample = small_synthetic(4, 60);
  TrainOptions opts;
  opts.epochs = 40;
  opts.batch_size = 16;
  opts.seed = 2;
  const auto r = train(sample.corpus, recovery_config(), opts);
  CHECK(r.history.back().elbo > r.history.front().elbo);
  const auto again = train(sample.corpus, recovery_config(), opts);
  CHECK(r.params.beta == again.params.beta);
}

TEST_CASE("convergence stops early") {
  const auto sample = small_synthetic(5, 40);
  TrainOptions opts;
  opts.epochs = 100000;
  opts.convergence_tol = 1e-3;
  const auto r = train(sample.corpus, recovery_config(), opts);
  CHECK(r.converged);
  CHECK(r.history.size() < 100000);
}

TEST_CASE("validation metric is recorded") {
  const auto sample = small_synthetic(6, 80);
  const auto held = small_synthetic(7, 20);
  TrainOptions opts;
  opts.epochs = 20;
  opts.validation_interval = 10;
  const auto r = train(sample.corpus, recovery_config(), opts, &held.corpus);
  CHECK(r.history[0].val_metric.has_value());
  CHECK_FALSE(r.history[1].val_metric.has_value());
  CHECK(r.history[10].val_metric.has_value());
  CHECK(r.history.back().val_metric.has_value());
  CHECK(r.history.back().to_json().find("\"elbo_terms\"") != std::string::npos);
}

TEST_CASE("training preconditions") {
  auto sample = small_synthetic(8, 10);
  TrainOptions opts;
  opts.epochs = 2;
  auto binary = recovery_config();
  binary.target_kind = TargetKind::binary;
  CHECK_THROWS_AS(train(sample.corpus, binary, opts), InvalidArgument);
  Corpus empty = sample.corpus;
  empty.documents.clear();
  CHECK_THROWS_AS(train(empty, recovery_config(), opts), InvalidArgument);
  opts.learning_rate = 0;
  CHECK_THROWS_AS(train(sample.corpus, recovery_config(), opts), InvalidArgument);
}

TEST_CASE("p = 1 keeps every switch on") {
  const auto sample = small_synthetic(9, 60);
  const auto config = slda_special_case(recovery_config());
  TrainOptions opts;
  opts.epochs = 60;
  const auto r = train(sample.corpus, config, opts);
  for (auto f : r.state.varphi) CHECK(f >= 0.99);
  CHECK(r.history.back().terms.t_xi_prior == 0.0);
  CHECK(r.history.back().terms.h_xi == 0.0);
}

TEST_CASE("held-out inference") {
  const auto truth = recovery_truth();
  const auto config = recovery_config();
  TrainOptions opts;

  SUBCASE("no relevant evidence spreads the tokens evenly") {
    const Document doc{"x", {{0, 3}, {4, 2}, {25, 5}}, std::nullopt};
    const Eigen::VectorXd varphi = Eigen::VectorXd::Zero(30);
    const auto gamma = infer_heldout(doc, truth, config, varphi, opts);
    const auto alpha = config.alpha_or_default();
    for (int k = 0; k < 3; ++k) CHECK(gamma[k] == doctest::Approx(alpha[k] + 10.0 / 3.0).epsilon(1e-9));
    const Eigen::VectorXd mean = gamma / gamma.sum();
    CHECK((mean.array() - 1.0 / 3.0).abs().maxCoeff() < 1e-9);
  }
  SUBCASE("single topic") {
    ModelParams one;
    one.beta = truth.beta.topRows(1);
    one.pi = truth.pi;
    one.eta = Eigen::VectorXd::Constant(1, 2.0);
    ModelConfig c1 = config;
    c1.num_topics = 1;
    const Document doc{"x", {{1, 2}}, std::nullopt};
    const auto gamma = infer_heldout(doc, one, c1, Eigen::VectorXd::Ones(30), opts);
    REQUIRE(gamma.size() == 1);
    CHECK(gamma[0] / gamma.sum() == 1.0);
    CHECK(predict(doc, one, c1, Eigen::VectorXd::Ones(30), opts) == 2.0);
  }
  SUBCASE("a long single-topic document is attributed to its topic") {
    ModelConfig c = config;
    c.switch_prior = 1.0;
    std::mt19937_64 rng(12);
    for (int k = 0; k < 3; ++k) {
      const Eigen::VectorXd row = truth.beta.row(k).transpose();
      std::discrete_distribution<int> word(row.data(), row.data() + row.size());
      std::map<TermId, std::uint32_t> counts;
      for (int n = 0; n < 200; ++n) ++counts[static_cast<TermId>(word(rng))];
      Document doc{"x", {}, std::nullopt};
      for (auto [w, cnt] : counts) doc.counts.push_back({w, cnt});
      const auto gamma = infer_heldout(doc, truth, c, Eigen::VectorXd::Ones(30), opts);
      Eigen::Index best;
      gamma.maxCoeff(&best);
      CHECK(best == k);
    }
  }
}

TEST_CASE("predict") {
  auto params = recovery_truth();
  auto config = recovery_config();
  TrainOptions opts;
  const Document doc{"x", {{0, 3}, {1, 1}}, std::nullopt};
  const Eigen::VectorXd varphi = Eigen::VectorXd::Constant(30, 0.7);

  params.eta.setZero();
  CHECK(predict(doc, params, config, varphi, opts) == 0.0);
  config.target_kind = TargetKind::binary;
  CHECK(predict(doc, params, config, varphi, opts) == 0.5);

  config.target_kind = TargetKind::real;
  params.eta.setConstant(1.7);
  CHECK(predict_from_gamma(Eigen::Vector3d(2, 2, 2), params, config) == doctest::Approx(1.7).epsilon(1e-15));
  CHECK(predict(doc, params, config, varphi, opts) == doctest::Approx(1.7).epsilon(1e-12));

  config.target_kind = TargetKind::binary;
  params.eta = Eigen::Vector3d(9, -9, 0);
  const double y = predict(doc, params, config, varphi, opts);
  CHECK(y > 0.0);
  CHECK(y < 1.0);
}

TEST_CASE("trained model beats the constant predictor") {
  auto config = recovery_config();
  const auto train_set = sample_corpus(config, recovery_truth(), numbered_vocabulary(30), 300, 60, 13).corpus;
  const auto test_set = sample_corpus(config, recovery_truth(), numbered_vocabulary(30), 100, 60, 14).corpus;
  TrainOptions opts;
  opts.epochs = 800;
  opts.convergence_tol = 0;
  opts.seed = 3;
  const auto r = train(train_set, config, opts);
  const auto predictions = predict_corpus(test_set, r.params, config, r.state.varphi, opts);
  const auto targets = test_set.targets();
  double mean = 0;
  for (double t : targets) mean += t;
  mean /= static_cast<double>(targets.size());
  const std::vector<double> constant(targets.size(), mean);
  const double baseline = rmse(constant, targets);
  const double model = rmse(predictions, targets);
  INFO("model rmse " << model << " baseline " << baseline);
  CHECK(model < baseline);
}

TEST_CASE("non-finite objective names the term") {
  const auto sample = small_synthetic(10, 10);
  const auto config = recovery_config();
  auto u = init_unconstrained(config, 30, 1, &sample.corpus);
  u.eta[0] = std::numeric_limits<double>::quiet_NaN();
  TrainOptions opts;
  opts.epochs = 3;
  try {
    (void)train_from(u, sample.corpus, config, opts);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(e.term() == "t_y");
  }
}
