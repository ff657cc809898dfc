#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pftopics/corpus.hpp"
#include "pftopics/model.hpp"

namespace pftopics {

/// Document-level occurrence statistics of a reference corpus.
class CooccurrenceTable {
public:
  explicit CooccurrenceTable(const Corpus& reference);

  std::size_t num_documents() const noexcept { return num_documents_; }
  double probability(TermId w) const;
  double joint_probability(TermId a, TermId b) const;

private:
  std::size_t num_documents_ = 0;
  // Sorted document indices per term.
  std::vector<std::vector<std::uint32_t>> postings_;
};

inline constexpr double kCoherenceEpsilon = 1e-12;

/// log[(p(a,b) + eps) / (p(a) p(b))], or its normalized form divided by
/// -log(p(a,b) + eps).
double pmi(const CooccurrenceTable& table, TermId a, TermId b, bool normalized = false);

struct CoherenceOptions {
  std::size_t top_n = 50;
  bool normalized = false;
};

/// Coherence of one topic (a row over the vocabulary).
double topic_coherence(const Eigen::VectorXd& topic, const CooccurrenceTable& table,
                       const CoherenceOptions& options = {});

/// Mean topic coherence over the rows of `topics`.
double coherence(const Eigen::MatrixXd& topics, const Corpus& reference, const CoherenceOptions& options = {});
double coherence(const Eigen::MatrixXd& topics, const CooccurrenceTable& table, const CoherenceOptions& options = {});

double rmse(std::span<const double> predictions, std::span<const double> targets);

/// Mann-Whitney AUC; tied positive/negative pairs count one half.
double auc(std::span<const double> scores, std::span<const double> labels);

double relevant_fraction(const Eigen::VectorXd& varphi, double threshold = 0.5);

/// Sum over words of min(max_k beta_kv, pi_v).
double support_overlap(const ModelParams& params);

struct TopicWord {
  std::string term;
  TermId id = 0;
  double probability = 0.0;
  double varphi = 0.0;
};

struct TopicSummary {
  int topic = 0;
  double coefficient = 0.0;
  std::vector<TopicWord> words;
};

struct TopicReport {
  /// One entry per topic, in topic order.
  std::vector<TopicSummary> topics;
  std::vector<TopicWord> background;
  int highest_topic = 0;
  int lowest_topic = 0;

  std::string to_json() const;
  /// Aligned columns; highest- and lowest-coefficient topics first.
  std::string to_text() const;
};

/// Top `top_n` words of `row` by probability, ties broken by id.
std::vector<TermId> top_words(const Eigen::VectorXd& row, std::size_t top_n);

TopicReport topic_report(const ModelParams& params, const Eigen::VectorXd& varphi, const Vocabulary& vocabulary,
                         std::size_t top_n = 10);

struct Metrics {
  double coherence = 0.0;
  std::optional<double> rmse;
  std::optional<double> auc;
  double relevant_fraction = 0.0;

  std::string to_json() const;
};

}  // namespace pftopics
