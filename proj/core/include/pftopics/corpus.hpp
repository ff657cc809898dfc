#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pftopics {

using TermId = std::uint32_t;

enum class TargetKind { none, real, binary };

std::string_view to_string(TargetKind kind);
TargetKind parse_target_kind(std::string_view text);

/// Ordered set of unique terms; the position of a term is its id.
class Vocabulary {
public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> terms);

  std::size_t size() const noexcept { return terms_.size(); }
  bool empty() const noexcept { return terms_.empty(); }
  const std::string& term(TermId id) const { return terms_.at(id); }
  const std::vector<std::string>& terms() const noexcept { return terms_; }
  std::optional<TermId> find(std::string_view term) const;

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.terms_ == b.terms_; }

private:
  std::vector<std::string> terms_;
  std::unordered_map<std::string, TermId> index_;
};

struct TermCount {
  TermId term = 0;
  std::uint32_t count = 0;

  friend bool operator==(const TermCount&, const TermCount&) = default;
};

/// Sparse bag of words. `counts` is sorted by term id with no duplicates.
struct Document {
  std::string id;
  std::vector<TermCount> counts;
  std::optional<double> target;

  std::size_t num_tokens() const noexcept;
  std::size_t num_distinct() const noexcept { return counts.size(); }

  friend bool operator==(const Document&, const Document&) = default;
};

struct Corpus {
  Vocabulary vocabulary;
  std::vector<Document> documents;
  TargetKind target_kind = TargetKind::none;

  std::size_t num_documents() const noexcept { return documents.size(); }
  std::size_t vocabulary_size() const noexcept { return vocabulary.size(); }

  /// Throws InvalidArgument when a type invariant is broken.
  void validate() const;

  std::vector<double> targets() const;

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

Vocabulary read_vocabulary(const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& vocab_path, const std::filesystem::path& docs_path);

/// Parses the TAB-separated document format against an existing vocabulary.
/// `source` only labels error messages.
Corpus parse_documents(std::istream& in, Vocabulary vocabulary, const std::string& source = "<documents>");

void write_vocabulary(const Vocabulary& vocabulary, const std::filesystem::path& path);
void write_documents(const Corpus& corpus, std::ostream& out);
void write_corpus(const Corpus& corpus, const std::filesystem::path& vocab_path,
                  const std::filesystem::path& docs_path);

std::unordered_set<std::string> read_stoplist(const std::filesystem::path& path);

struct PruneResult {
  Corpus corpus;
  std::size_t dropped_documents = 0;
  std::size_t removed_terms = 0;
};

/// Drops the listed terms and re-indexes. Zero-token documents are dropped.
PruneResult remove_terms(const Corpus& corpus, const std::unordered_set<std::string>& terms);

/// Removes terms whose document frequency is below `min_docs` or above
/// `max_doc_frac * M`; boundary values are kept. Repeats until no further
/// term qualifies, so the result is a fixed point.
PruneResult prune_vocabulary(const Corpus& corpus, std::size_t min_docs = 10, double max_doc_frac = 0.5);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

/// Seeded shuffle followed by floor allocation of val/test; the remainder
/// goes to train.
CorpusSplit split_corpus(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed);

/// Sizes used by split_corpus for `num_documents` documents.
std::array<std::size_t, 3> split_sizes(std::size_t num_documents, SplitFractions fractions);

/// Document frequency per term.
std::vector<std::size_t> document_frequencies(const Corpus& corpus);

}  // namespace pftopics
