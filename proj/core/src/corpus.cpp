#include "pftopics/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "pftopics/error.hpp"

namespace pftopics {

std::string_view to_string(TargetKind kind) {
  switch (kind) {
    case TargetKind::none: return "none";
    case TargetKind::real: return "real";
    case TargetKind::binary: return "binary";
  }
  return "none";
}

TargetKind parse_target_kind(std::string_view text) {
  if (text == "none") return TargetKind::none;
  if (text == "real") return TargetKind::real;
  if (text == "binary") return TargetKind::binary;
  throw InvalidArgument("unknown target kind '" + std::string(text) + "'");
}

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
  index_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    if (!index_.emplace(terms_[i], static_cast<TermId>(i)).second) {
      throw InvalidArgument("duplicate vocabulary term '" + terms_[i] + "'");
    }
  }
}

std::optional<TermId> Vocabulary::find(std::string_view term) const {
  auto it = index_.find(std::string(term));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Document::num_tokens() const noexcept {
  std::size_t n = 0;
  for (const auto& tc : counts) n += tc.count;
  return n;
}

void Corpus::validate() const {
  if (vocabulary.empty()) throw InvalidArgument("vocabulary is empty");
  const auto V = vocabulary.size();
  for (const auto& doc : documents) {
    if (doc.counts.empty()) throw InvalidArgument("document '" + doc.id + "' has no tokens");
    TermId prev = 0;
    for (std::size_t i = 0; i < doc.counts.size(); ++i) {
      const auto& tc = doc.counts[i];
      if (tc.term >= V) throw InvalidArgument("document '" + doc.id + "': term id out of range");
      if (tc.count == 0) throw InvalidArgument("document '" + doc.id + "': zero count");
      if (i > 0 && tc.term <= prev) throw InvalidArgument("document '" + doc.id + "': counts not sorted by term");
      prev = tc.term;
    }
    if (target_kind == TargetKind::none) {
      if (doc.target) throw InvalidArgument("document '" + doc.id + "' has a target but corpus has none");
    } else {
      if (!doc.target) throw InvalidArgument("document '" + doc.id + "' is missing its target");
      if (!std::isfinite(*doc.target)) throw InvalidArgument("document '" + doc.id + "' has a non-finite target");
      if (target_kind == TargetKind::binary && *doc.target != 0.0 && *doc.target != 1.0) {
        throw InvalidArgument("document '" + doc.id + "' has a non-binary target");
      }
    }
  }
}

std::vector<double> Corpus::targets() const {
  std::vector<double> out;
  out.reserve(documents.size());
  for (const auto& doc : documents) out.push_back(doc.target.value_or(0.0));
  return out;
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  return ec == std::errc() && ptr == end;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

}  // namespace

Vocabulary read_vocabulary(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<std::string> terms;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) throw ParseError(path.string(), lineno, "empty vocabulary term");
    terms.push_back(line);
  }
  if (terms.empty()) throw ParseError(path.string(), 0, "vocabulary is empty");
  try {
    return Vocabulary(std::move(terms));
  } catch (const InvalidArgument& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

Corpus parse_documents(std::istream& in, Vocabulary vocabulary, const std::string& source) {
  Corpus corpus;
  const auto V = vocabulary.size();
  corpus.vocabulary = std::move(vocabulary);

  bool any_present = false;
  bool any_absent = false;
  bool all_binary = true;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3) throw ParseError(source, lineno, "expected 3 TAB-separated fields");

    Document doc;
    doc.id = std::string(fields[0]);
    if (doc.id.empty()) throw ParseError(source, lineno, "empty document id");

    if (fields[1] == "-") {
      any_absent = true;
    } else {
      double y = 0.0;
      if (!parse_number(fields[1], y) || !std::isfinite(y)) {
        throw ParseError(source, lineno, "bad target '" + std::string(fields[1]) + "'");
      }
      any_present = true;
      if (y != 0.0 && y != 1.0) all_binary = false;
      doc.target = y;
    }

    std::istringstream pairs{std::string(fields[2])};
    std::string pair;
    while (pairs >> pair) {
      auto colon = pair.find(':');
      if (colon == std::string::npos) throw ParseError(source, lineno, "expected termId:count, got '" + pair + "'");
      std::uint64_t term = 0;
      std::int64_t count = 0;
      if (!parse_number(std::string_view(pair).substr(0, colon), term) ||
          !parse_number(std::string_view(pair).substr(colon + 1), count)) {
        throw ParseError(source, lineno, "malformed pair '" + pair + "'");
      }
      if (term >= V) {
        throw ParseError(source, lineno, "term id " + std::to_string(term) + " out of range (V=" + std::to_string(V) + ")");
      }
      if (count <= 0) throw ParseError(source, lineno, "count must be positive in '" + pair + "'");
      doc.counts.push_back({static_cast<TermId>(term), static_cast<std::uint32_t>(count)});
    }
    if (doc.counts.empty()) throw ParseError(source, lineno, "document has no tokens");

    std::sort(doc.counts.begin(), doc.counts.end(), [](const auto& a, const auto& b) { return a.term < b.term; });
    // Repeated ids within a line are merged.
    std::vector<TermCount> merged;
    for (const auto& tc : doc.counts) {
      if (!merged.empty() && merged.back().term == tc.term) {
        merged.back().count += tc.count;
      } else {
        merged.push_back(tc);
      }
    }
    doc.counts = std::move(merged);

    if (any_present && any_absent) throw ParseError(source, lineno, "mixed target kinds (absent and present)");
    corpus.documents.push_back(std::move(doc));
  }

  if (!any_present) {
    corpus.target_kind = TargetKind::none;
  } else {
    corpus.target_kind = all_binary ? TargetKind::binary : TargetKind::real;
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& vocab_path, const std::filesystem::path& docs_path) {
  auto vocabulary = read_vocabulary(vocab_path);
  auto in = open_input(docs_path);
  return parse_documents(in, std::move(vocabulary), docs_path.string());
}

void write_vocabulary(const Vocabulary& vocabulary, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& term : vocabulary.terms()) out << term << '\n';
}

void write_documents(const Corpus& corpus, std::ostream& out) {
  out << std::setprecision(17);
  for (const auto& doc : corpus.documents) {
    out << doc.id << '\t';
    if (!doc.target) {
      out << '-';
    } else if (corpus.target_kind == TargetKind::binary) {
      out << (*doc.target == 1.0 ? '1' : '0');
    } else {
      out << *doc.target;
    }
    out << '\t';
    for (std::size_t i = 0; i < doc.counts.size(); ++i) {
      if (i) out << ' ';
      out << doc.counts[i].term << ':' << doc.counts[i].count;
    }
    out << '\n';
  }
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& vocab_path,
                  const std::filesystem::path& docs_path) {
  write_vocabulary(corpus.vocabulary, vocab_path);
  auto out = open_output(docs_path);
  write_documents(corpus, out);
}

std::unordered_set<std::string> read_stoplist(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (!line.empty()) out.insert(line);
  }
  return out;
}

std::vector<std::size_t> document_frequencies(const Corpus& corpus) {
  std::vector<std::size_t> df(corpus.vocabulary.size(), 0);
  for (const auto& doc : corpus.documents)
    for (const auto& tc : doc.counts) ++df[tc.term];
  return df;
}

namespace {

PruneResult keep_terms(const Corpus& corpus, const std::vector<bool>& keep) {
  std::vector<std::string> terms;
  std::vector<TermId> remap(corpus.vocabulary.size(), 0);
  for (std::size_t v = 0; v < keep.size(); ++v) {
    if (keep[v]) {
      remap[v] = static_cast<TermId>(terms.size());
      terms.push_back(corpus.vocabulary.term(static_cast<TermId>(v)));
    }
  }
  if (terms.empty()) throw InvalidArgument("pruning removes the entire vocabulary");

  PruneResult result;
  result.removed_terms = corpus.vocabulary.size() - terms.size();
  result.corpus.vocabulary = Vocabulary(std::move(terms));
  result.corpus.target_kind = corpus.target_kind;
  for (const auto& doc : corpus.documents) {
    Document out{doc.id, {}, doc.target};
    for (const auto& tc : doc.counts)
      if (keep[tc.term]) out.counts.push_back({remap[tc.term], tc.count});
    if (out.counts.empty()) {
      ++result.dropped_documents;
    } else {
      result.corpus.documents.push_back(std::move(out));
    }
  }
  return result;
}

}  // namespace

PruneResult remove_terms(const Corpus& corpus, const std::unordered_set<std::string>& terms) {
  std::vector<bool> keep(corpus.vocabulary.size());
  for (std::size_t v = 0; v < keep.size(); ++v) keep[v] = !terms.contains(corpus.vocabulary.term(static_cast<TermId>(v)));
  return keep_terms(corpus, keep);
}

PruneResult prune_vocabulary(const Corpus& corpus, std::size_t min_docs, double max_doc_frac) {
  if (!(max_doc_frac > 0.0 && max_doc_frac <= 1.0)) throw InvalidArgument("max_doc_frac must be in (0, 1]");

  PruneResult total{corpus, 0, 0};
  // Dropping empty documents lowers M, which can push another term over the
  // upper threshold; iterate to a fixed point.
  while (true) {
    const auto& current = total.corpus;
    const auto df = document_frequencies(current);
    const double upper = max_doc_frac * static_cast<double>(current.num_documents());
    std::vector<bool> keep(df.size());
    bool changed = false;
    for (std::size_t v = 0; v < df.size(); ++v) {
      keep[v] = df[v] >= min_docs && static_cast<double>(df[v]) <= upper;
      changed |= !keep[v];
    }
    if (!changed) return total;
    auto step = keep_terms(current, keep);
    step.dropped_documents += total.dropped_documents;
    step.removed_terms += total.removed_terms;
    total = std::move(step);
  }
}

std::array<std::size_t, 3> split_sizes(std::size_t num_documents, SplitFractions f) {
  if (!(f.train > 0 && f.val > 0 && f.test > 0)) throw InvalidArgument("split fractions must be positive");
  if (std::abs(f.train + f.val + f.test - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
  if (num_documents < 3) throw InvalidArgument("fewer documents than split parts");
  const double m = static_cast<double>(num_documents);
  // The slack absorbs fractions such as 626/5006 whose product rounds just
  // below an integer.
  const auto val = static_cast<std::size_t>(std::floor(f.val * m + 1e-9));
  const auto test = static_cast<std::size_t>(std::floor(f.test * m + 1e-9));
  if (val + test >= num_documents) throw InvalidArgument("split leaves no training documents");
  return {num_documents - val - test, val, test};
}

CorpusSplit split_corpus(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed) {
  const auto sizes = split_sizes(corpus.num_documents(), fractions);
  std::vector<std::size_t> order(corpus.num_documents());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  CorpusSplit split;
  Corpus* parts[3] = {&split.train, &split.val, &split.test};
  std::size_t pos = 0;
  for (int p = 0; p < 3; ++p) {
    parts[p]->vocabulary = corpus.vocabulary;
    parts[p]->target_kind = corpus.target_kind;
    for (std::size_t i = 0; i < sizes[p]; ++i) parts[p]->documents.push_back(corpus.documents[order[pos++]]);
  }
  return split;
}

}  // namespace pftopics
