#include "pftopics/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pftopics/error.hpp"

namespace pftopics {

CooccurrenceTable::CooccurrenceTable(const Corpus& reference)
    : num_documents_(reference.num_documents()), postings_(reference.vocabulary_size()) {
  if (num_documents_ == 0) throw InvalidArgument("coherence reference corpus is empty");
  for (std::size_t d = 0; d < reference.documents.size(); ++d)
    for (const auto& tc : reference.documents[d].counts) postings_.at(tc.term).push_back(static_cast<std::uint32_t>(d));
}

double CooccurrenceTable::probability(TermId w) const {
  return static_cast<double>(postings_.at(w).size()) / static_cast<double>(num_documents_);
}

double CooccurrenceTable::joint_probability(TermId a, TermId b) const {
  const auto& x = postings_.at(a);
  const auto& y = postings_.at(b);
  std::size_t both = 0;
  auto i = x.begin();
  auto j = y.begin();
  while (i != x.end() && j != y.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++both;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(both) / static_cast<double>(num_documents_);
}

double pmi(const CooccurrenceTable& table, TermId a, TermId b, bool normalized) {
  const double pa = table.probability(a);
  const double pb = table.probability(b);
  if (!(pa > 0.0 && pb > 0.0)) throw InvalidArgument("pmi of a word absent from the reference corpus");
  const double joint = table.joint_probability(a, b) + kCoherenceEpsilon;
  const double value = std::log(joint / (pa * pb));
  if (!normalized) return value;
  const double denom = -std::log(joint);
  // joint == 1 means both words occur in every document.
  return denom > 0.0 ? value / denom : 1.0;
}

std::vector<TermId> top_words(const Eigen::VectorXd& row, std::size_t top_n) {
  std::vector<TermId> ids(static_cast<std::size_t>(row.size()));
  std::iota(ids.begin(), ids.end(), TermId{0});
  top_n = std::min(top_n, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(top_n), ids.end(),
                    [&](TermId a, TermId b) { return row[a] > row[b] || (row[a] == row[b] && a < b); });
  ids.resize(top_n);
  return ids;
}

double topic_coherence(const Eigen::VectorXd& topic, const CooccurrenceTable& table,
                       const CoherenceOptions& options) {
  std::vector<TermId> words;
  for (auto w : top_words(topic, options.top_n))
    if (table.probability(w) > 0.0) words.push_back(w);
  const auto n = words.size();
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sum += pmi(table, words[i], words[j], options.normalized);
  return sum / static_cast<double>(n * (n - 1));
}

double coherence(const Eigen::MatrixXd& topics, const CooccurrenceTable& table, const CoherenceOptions& options) {
  if (options.top_n < 2) throw InvalidArgument("coherence needs top_n >= 2");
  double total = 0.0;
  int scored = 0;
  for (Eigen::Index k = 0; k < topics.rows(); ++k) {
    const double c = topic_coherence(topics.row(k).transpose(), table, options);
    if (std::isnan(c)) continue;
    total += c;
    ++scored;
  }
  if (scored == 0) throw InvalidArgument("no topic has two words present in the reference corpus");
  return total / scored;
}

double coherence(const Eigen::MatrixXd& topics, const Corpus& reference, const CoherenceOptions& options) {
  if (static_cast<std::size_t>(topics.cols()) != reference.vocabulary_size()) {
    throw InvalidArgument("topic width differs from the reference vocabulary");
  }
  return coherence(topics, CooccurrenceTable(reference), options);
}

double rmse(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw InvalidArgument("rmse: length mismatch");
  if (predictions.empty()) throw InvalidArgument("rmse: empty input");
  double sq = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    sq += e * e;
  }
  return std::sqrt(sq / static_cast<double>(predictions.size()));
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw InvalidArgument("auc: length mismatch");
  std::size_t positives = 0;
  for (double y : labels) {
    if (y != 0.0 && y != 1.0) throw InvalidArgument("auc: labels must be 0 or 1");
    positives += y == 1.0;
  }
  const std::size_t negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0) throw InvalidArgument("auc: labels contain a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

  // Sum of midranks of the positives.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] == 1.0) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(positives);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(negatives));
}

double relevant_fraction(const Eigen::VectorXd& varphi, double threshold) {
  if (varphi.size() == 0) return 0.0;
  return static_cast<double>((varphi.array() > threshold).count()) / static_cast<double>(varphi.size());
}

double support_overlap(const ModelParams& params) {
  return params.beta.colwise().maxCoeff().transpose().cwiseMin(params.pi).sum();
}

namespace {

std::vector<TopicWord> describe(const Eigen::VectorXd& row, const Eigen::VectorXd& varphi,
                                const Vocabulary& vocabulary, std::size_t top_n) {
  std::vector<TopicWord> out;
  for (auto w : top_words(row, top_n)) out.push_back({vocabulary.term(w), w, row[w], varphi[w]});
  return out;
}

nlohmann::json words_json(const std::vector<TopicWord>& words) {
  auto arr = nlohmann::json::array();
  for (const auto& w : words) arr.push_back({{"term", w.term}, {"id", w.id}, {"probability", w.probability}, {"varphi", w.varphi}});
  return arr;
}

}  // namespace

TopicReport topic_report(const ModelParams& params, const Eigen::VectorXd& varphi, const Vocabulary& vocabulary,
                         std::size_t top_n) {
  const auto V = static_cast<std::size_t>(params.vocabulary_size());
  if (top_n > V) throw InvalidArgument("top_n exceeds the vocabulary size");
  if (vocabulary.size() != V || static_cast<std::size_t>(varphi.size()) != V) {
    throw InvalidArgument("model and vocabulary sizes differ");
  }
  TopicReport report;
  for (int k = 0; k < params.num_topics(); ++k) {
    report.topics.push_back({k, params.eta[k], describe(params.beta.row(k).transpose(), varphi, vocabulary, top_n)});
  }
  report.background = describe(params.pi, varphi, vocabulary, top_n);
  Eigen::Index hi = 0, lo = 0;
  params.eta.maxCoeff(&hi);
  params.eta.minCoeff(&lo);
  report.highest_topic = static_cast<int>(hi);
  report.lowest_topic = static_cast<int>(lo);
  return report;
}

std::string TopicReport::to_json() const {
  nlohmann::json topics_json = nlohmann::json::array();
  for (const auto& t : topics) {
    topics_json.push_back({{"topic", t.topic}, {"coefficient", t.coefficient}, {"words", words_json(t.words)}});
  }
  nlohmann::json j{{"highest_topic", highest_topic},
                   {"lowest_topic", lowest_topic},
                   {"topics", std::move(topics_json)},
                   {"background", words_json(background)}};
  return j.dump();
}

std::string TopicReport::to_text() const {
  std::vector<int> order;
  if (!topics.empty()) {
    order.push_back(highest_topic);
    if (lowest_topic != highest_topic) order.push_back(lowest_topic);
    for (const auto& t : topics)
      if (t.topic != highest_topic && t.topic != lowest_topic) order.push_back(t.topic);
  }

  std::size_t width = 4;
  for (const auto& t : topics)
    for (const auto& w : t.words) width = std::max(width, w.term.size());
  for (const auto& w : background) width = std::max(width, w.term.size());

  std::ostringstream out;
  auto table = [&](const std::vector<TopicWord>& words) {
    out << "  " << std::left << std::setw(static_cast<int>(width)) << "term" << "  " << std::right << std::setw(10)
        << "prob" << "  " << std::setw(8) << "varphi" << '\n';
    for (const auto& w : words) {
      out << "  " << std::left << std::setw(static_cast<int>(width)) << w.term << "  " << std::right << std::fixed
          << std::setprecision(6) << std::setw(10) << w.probability << "  " << std::setprecision(4) << std::setw(8)
          << w.varphi << '\n';
    }
  };
  for (int k : order) {
    const auto& t = topics[static_cast<std::size_t>(k)];
    out << "topic " << t.topic << "  eta=" << std::fixed << std::setprecision(4) << t.coefficient;
    if (k == highest_topic) out << "  (highest)";
    if (k == lowest_topic) out << "  (lowest)";
    out << '\n';
    table(t.words);
    out << '\n';
  }
  out << "background\n";
  table(background);
  return out.str();
}

std::string Metrics::to_json() const {
  nlohmann::json j{{"coherence", coherence},
                   {"rmse", rmse ? nlohmann::json(*rmse) : nlohmann::json(nullptr)},
                   {"auc", auc ? nlohmann::json(*auc) : nlohmann::json(nullptr)},
                   {"relevant_fraction", relevant_fraction}};
  return j.dump();
}

}  // namespace pftopics
