#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pftopics/corpus.hpp"
#include "pftopics/inference.hpp"
#include "pftopics/model.hpp"

namespace pftopics::cli {

/// Bad invocation: unknown config keys, malformed flag values and the like.
class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs. The JSON config uses these field names; every
/// field is also a long flag with underscores turned into dashes.
struct RunConfig {
  int num_topics = 10;
  double p = 0.2;
  std::vector<double> alpha;
  std::uint64_t seed = 0;

  double learning_rate = 0.025;
  int epochs = 1000;
  std::size_t batch_size = 0;
  double convergence_tol = 1e-5;
  int convergence_window = 10;
  double gamma_floor = 1e-3;
  int validation_interval = 50;
  unsigned threads = 1;

  std::string vocab;
  std::string docs;
  std::string validation;
  std::string stoplist;
  std::string out_dir = ".";
  std::string model_out = "model.json";
  std::string log_out = "train_log.jsonl";

  std::vector<double> split{0.8, 0.1, 0.1};
  std::size_t min_docs = 10;
  double max_doc_frac = 0.5;

  std::size_t top_n = 50;
  bool npmi = false;
  std::string reference;

  std::vector<double> sweep_p;

  ModelConfig model_config(TargetKind kind) const;
  TrainOptions train_options() const;
  SplitFractions split_fractions() const;
};

/// Value of `--config` if present on the command line.
std::optional<std::filesystem::path> find_config_flag(int argc, const char* const* argv);

/// Overwrites fields named in the JSON object at `path`.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

enum OptionGroup : unsigned {
  kModelOptions = 1u << 0,
  kTrainOptions = 1u << 1,
  kCorpusOptions = 1u << 2,
  kPrepOptions = 1u << 3,
  kCoherenceOptions = 1u << 4,
  kOutputOptions = 1u << 5,
  kOutDirOption = 1u << 6,
};

/// Registers the flags of the selected groups, bound to `config`.
void add_run_options(CLI::App& app, RunConfig& config, unsigned groups);

/// Throws pftopics::InvalidArgument naming the first missing input file.
void require_file(const std::string& path, const char* flag);

}  // namespace pftopics::cli
