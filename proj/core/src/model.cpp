#include "pftopics/model.hpp"

#include <cmath>
#include <map>
#include <random>
#include <string>

#include "pftopics/error.hpp"
#include "pftopics/parallel.hpp"

namespace pftopics {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

Eigen::VectorXd ModelConfig::alpha_or_default() const {
  if (alpha.size() == 0) return Eigen::VectorXd::Ones(num_topics);
  return alpha;
}

void ModelConfig::validate() const {
  if (num_topics < 1) throw InvalidArgument("number of topics must be >= 1");
  if (!(switch_prior > 0.0 && switch_prior <= 1.0)) throw InvalidArgument("switch prior p must be in (0, 1]");
  if (alpha.size() != 0) {
    if (alpha.size() != num_topics) throw InvalidArgument("alpha length must equal the number of topics");
    for (double a : alpha)
      if (!(a > 0.0) || !std::isfinite(a)) throw InvalidArgument("alpha entries must be positive");
  }
  if (target_kind == TargetKind::none) throw InvalidArgument("model target kind must be real or binary");
}

namespace {

void check_simplex(const Eigen::Ref<const Eigen::VectorXd>& row, double tol, const std::string& name) {
  for (double x : row)
    if (!(x >= 0.0) || !std::isfinite(x)) throw InvalidArgument(name + " has a negative or non-finite entry");
  if (std::abs(row.sum() - 1.0) > tol) throw InvalidArgument(name + " does not sum to 1");
}

}  // namespace

void ModelParams::validate(double tol) const {
  if (beta.rows() < 1 || beta.cols() < 1) throw InvalidArgument("beta is empty");
  for (Eigen::Index k = 0; k < beta.rows(); ++k) check_simplex(beta.row(k).transpose(), tol, "beta row " + std::to_string(k));
  if (pi.size() != beta.cols()) throw InvalidArgument("pi length must equal the vocabulary size");
  check_simplex(pi, tol, "pi");
  if (eta.size() != beta.rows()) throw InvalidArgument("eta length must equal the number of topics");
  if (!eta.allFinite()) throw InvalidArgument("eta has a non-finite entry");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be positive");
}

ModelConfig slda_special_case(ModelConfig config) {
  config.switch_prior = 1.0;
  return config;
}

namespace {

std::mt19937_64 document_stream(std::uint64_t seed, std::size_t doc) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(doc), static_cast<std::uint32_t>(std::uint64_t(doc) >> 32)};
  return std::mt19937_64(seq);
}

std::discrete_distribution<int> categorical(const Eigen::Ref<const Eigen::VectorXd>& probs) {
  return std::discrete_distribution<int>(probs.data(), probs.data() + probs.size());
}

}  // namespace

SampledCorpus sample_corpus(const ModelConfig& config, const ModelParams& params, const Vocabulary& vocabulary,
                            std::size_t num_docs, std::size_t tokens_per_doc, std::uint64_t rng_seed,
                            unsigned threads) {
  config.validate();
  params.validate();
  if (tokens_per_doc < 1) throw InvalidArgument("tokens_per_doc must be >= 1");
  if (params.num_topics() != config.num_topics) throw InvalidArgument("params and config disagree on K");
  if (static_cast<std::size_t>(params.vocabulary_size()) != vocabulary.size()) {
    throw InvalidArgument("params and vocabulary disagree on V");
  }

  const int K = config.num_topics;
  const Eigen::VectorXd alpha = config.alpha_or_default();
  const double p = config.switch_prior;

  std::vector<Eigen::VectorXd> beta_rows(K);
  for (int k = 0; k < K; ++k) beta_rows[k] = params.beta.row(k).transpose();

  SampledCorpus out;
  out.corpus.vocabulary = vocabulary;
  out.corpus.target_kind = config.target_kind;
  out.corpus.documents.resize(num_docs);
  out.latents.resize(num_docs);

  parallel_for(num_docs, threads, [&](std::size_t d) {
    auto rng = document_stream(rng_seed, d);
    std::vector<std::discrete_distribution<int>> topic_words;
    topic_words.reserve(K);
    for (int k = 0; k < K; ++k) topic_words.push_back(categorical(beta_rows[k]));
    auto background = categorical(params.pi);

    SampledLatents lat;
    lat.theta.resize(K);
    for (int k = 0; k < K; ++k) lat.theta[k] = std::gamma_distribution<double>(alpha[k], 1.0)(rng);
    const double total = lat.theta.sum();
    if (total > 0.0) {
      lat.theta /= total;
    } else {
      // Every gamma draw underflowed (tiny alpha); fall back to a vertex.
      lat.theta.setZero();
      lat.theta[std::uniform_int_distribution<int>(0, K - 1)(rng)] = 1.0;
    }
    auto pick_topic = categorical(lat.theta);
    std::bernoulli_distribution pick_switch(p);

    std::map<TermId, std::uint32_t> counts;
    for (std::size_t n = 0; n < tokens_per_doc; ++n) {
      const int z = pick_topic(rng);
      const bool xi = pick_switch(rng);
      const auto w = static_cast<TermId>(xi ? topic_words[z](rng) : background(rng));
      lat.topics.push_back(z);
      lat.switches.push_back(xi ? 1 : 0);
      lat.words.push_back(w);
      ++counts[w];
    }

    Document doc;
    doc.id = "sim" + std::to_string(d);
    for (auto [term, count] : counts) doc.counts.push_back({term, count});
    const double m = params.eta.dot(lat.theta);
    if (config.target_kind == TargetKind::real) {
      doc.target = std::normal_distribution<double>(m, std::sqrt(params.delta))(rng);
    } else {
      doc.target = std::bernoulli_distribution(sigmoid(m))(rng) ? 1.0 : 0.0;
    }
    out.corpus.documents[d] = std::move(doc);
    out.latents[d] = std::move(lat);
  });
  return out;
}

}  // namespace pftopics
