#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "pftopics/corpus.hpp"

namespace pftopics {

struct ModelConfig {
  int num_topics = 10;
  /// Prior probability that a token is routed to the relevant topics.
  double switch_prior = 0.2;
  /// Dirichlet concentration; empty means all ones.
  Eigen::VectorXd alpha;
  TargetKind target_kind = TargetKind::real;
  std::uint64_t seed = 0;

  /// Returns alpha, filling the all-ones default when unset.
  Eigen::VectorXd alpha_or_default() const;
  void validate() const;
};

/// Global parameters. `beta` is K x V (one topic per row, so a column holds
/// every topic's weight for one word).
struct ModelParams {
  Eigen::MatrixXd beta;
  Eigen::VectorXd pi;
  Eigen::VectorXd eta;
  double delta = 1.0;

  int num_topics() const noexcept { return static_cast<int>(beta.rows()); }
  int vocabulary_size() const noexcept { return static_cast<int>(beta.cols()); }

  void validate(double tol = 1e-8) const;
};

/// Per-document draws from the generative process, in token order.
struct SampledLatents {
  Eigen::VectorXd theta;
  std::vector<int> topics;
  std::vector<std::uint8_t> switches;
  std::vector<TermId> words;
};

struct SampledCorpus {
  Corpus corpus;
  std::vector<SampledLatents> latents;
};

/// Draws documents from the two-channel generative process. Document d uses
/// its own RNG stream seeded from (rng_seed, d), so output does not depend
/// on the thread count.
SampledCorpus sample_corpus(const ModelConfig& config, const ModelParams& params, const Vocabulary& vocabulary,
                            std::size_t num_docs, std::size_t tokens_per_doc, std::uint64_t rng_seed,
                            unsigned threads = 1);

/// sLDA is the p = 1 member of the family: no background channel.
ModelConfig slda_special_case(ModelConfig config);

/// Model as persisted on disk.
struct SavedModel {
  ModelConfig config;
  ModelParams params;
  Eigen::VectorXd varphi;
  Vocabulary vocabulary;
};

inline constexpr int kModelFormatVersion = 1;

std::string model_to_json(const SavedModel& model);
SavedModel model_from_json(const std::string& text);
void save_model(const SavedModel& model, const std::filesystem::path& path);
SavedModel load_model(const std::filesystem::path& path);

double sigmoid(double x);
double log_sigmoid(double x);

}  // namespace pftopics
