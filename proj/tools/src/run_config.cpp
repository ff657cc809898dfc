#include "run_config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include <json.hpp>

#include "pftopics/error.hpp"

namespace pftopics::cli {

using nlohmann::json;

ModelConfig RunConfig::model_config(TargetKind kind) const {
  ModelConfig c;
  c.num_topics = num_topics;
  c.switch_prior = p;
  if (!alpha.empty()) c.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), static_cast<Eigen::Index>(alpha.size()));
  c.target_kind = kind;
  c.seed = seed;
  return c;
}

TrainOptions RunConfig::train_options() const {
  TrainOptions o;
  o.learning_rate = learning_rate;
  o.epochs = epochs;
  o.batch_size = batch_size;
  o.seed = seed;
  o.convergence_tol = convergence_tol;
  o.convergence_window = convergence_window;
  o.gamma_floor = gamma_floor;
  o.validation_interval = validation_interval;
  o.threads = threads;
  return o;
}

SplitFractions RunConfig::split_fractions() const {
  if (split.size() != 3) throw UsageError("split needs three fractions (train, val, test)");
  return {split[0], split[1], split[2]};
}

std::optional<std::filesystem::path> find_config_flag(int argc, const char* const* argv) {
  const std::string flag = "--config";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == flag) {
      if (i + 1 >= argc) throw UsageError("--config needs a path");
      return std::filesystem::path(argv[i + 1]);
    }
    if (arg.starts_with(flag + "=")) return std::filesystem::path(arg.substr(flag.size() + 1));
  }
  return std::nullopt;
}

namespace {

template <typename T>
std::function<void(const json&)> setter(T& field) {
  return [&field](const json& j) { field = j.get<T>(); };
}

}  // namespace

void apply_config_file(RunConfig& c, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config '" + path.string() + "': " + e.what());
  }
  if (!j.is_object()) throw UsageError("config '" + path.string() + "' must be a JSON object");

  const std::map<std::string, std::function<void(const json&)>> fields{
      {"num_topics", setter(c.num_topics)},
      {"p", setter(c.p)},
      {"alpha", setter(c.alpha)},
      {"seed", setter(c.seed)},
      {"learning_rate", setter(c.learning_rate)},
      {"epochs", setter(c.epochs)},
      {"batch_size", setter(c.batch_size)},
      {"convergence_tol", setter(c.convergence_tol)},
      {"convergence_window", setter(c.convergence_window)},
      {"gamma_floor", setter(c.gamma_floor)},
      {"validation_interval", setter(c.validation_interval)},
      {"threads", setter(c.threads)},
      {"vocab", setter(c.vocab)},
      {"docs", setter(c.docs)},
      {"validation", setter(c.validation)},
      {"stoplist", setter(c.stoplist)},
      {"out_dir", setter(c.out_dir)},
      {"model_out", setter(c.model_out)},
      {"log_out", setter(c.log_out)},
      {"split", setter(c.split)},
      {"min_docs", setter(c.min_docs)},
      {"max_doc_frac", setter(c.max_doc_frac)},
      {"top_n", setter(c.top_n)},
      {"npmi", setter(c.npmi)},
      {"reference", setter(c.reference)},
      {"sweep_p", setter(c.sweep_p)},
  };
  for (const auto& [key, value] : j.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw UsageError("config '" + path.string() + "': unknown field '" + key + "'");
    try {
      it->second(value);
    } catch (const json::exception& e) {
      throw UsageError("config '" + path.string() + "': field '" + key + "': " + e.what());
    }
  }
}

void add_run_options(CLI::App& app, RunConfig& c, unsigned groups) {
  app.add_option("--config", "JSON run config; flags override its fields");
  if (groups & kModelOptions) {
    app.add_option("-K,--num-topics", c.num_topics, "Number of relevant topics")->capture_default_str();
    app.add_option("--p", c.p, "Switch prior in (0, 1]")->capture_default_str();
    app.add_option("--alpha", c.alpha, "Dirichlet concentration (K values; default all ones)")->delimiter(',');
    app.add_option("--seed", c.seed, "Random seed")->capture_default_str();
  }
  if (groups & kTrainOptions) {
    app.add_option("--learning-rate", c.learning_rate, "ADAM step size")->capture_default_str();
    app.add_option("--epochs", c.epochs, "Maximum epochs")->capture_default_str();
    app.add_option("--batch-size", c.batch_size, "Documents per step (0 = full batch)")->capture_default_str();
    app.add_option("--convergence-tol", c.convergence_tol, "Relative ELBO change that stops training (0 disables)")
        ->capture_default_str();
    app.add_option("--convergence-window", c.convergence_window, "Epochs spanned by the convergence test")
        ->capture_default_str();
    app.add_option("--gamma-floor", c.gamma_floor, "Lower bound added to document Dirichlet parameters")
        ->capture_default_str();
    app.add_option("--validation-interval", c.validation_interval, "Epochs between validation scores")
        ->capture_default_str();
    app.add_option("--validation", c.validation, "Validation documents file");
    app.add_option("--sweep-p", c.sweep_p, "Train once per switch prior, e.g. 0.05,0.1,0.2")->delimiter(',');
  }
  if (groups & (kTrainOptions | kCorpusOptions)) {
    app.add_option("--threads", c.threads, "Worker threads (also PFTOPICS_THREADS)")->capture_default_str();
  }
  if (groups & kCorpusOptions) {
    app.add_option("--vocab", c.vocab, "Vocabulary file");
    app.add_option("--docs", c.docs, "Documents file");
  }
  if (groups & kPrepOptions) {
    app.add_option("--stoplist", c.stoplist, "Stop-word file, one term per line");
    app.add_option("--split", c.split, "Train,val,test fractions")->delimiter(',');
    app.add_option("--min-docs", c.min_docs, "Drop terms in fewer documents")->capture_default_str();
    app.add_option("--max-doc-frac", c.max_doc_frac, "Drop terms in more than this fraction of documents")
        ->capture_default_str();
  }
  if (groups & kOutputOptions) {
    app.add_option("--model-out", c.model_out, "Model JSON path")->capture_default_str();
    app.add_option("--log-out", c.log_out, "Training log path (JSON lines)")->capture_default_str();
  }
  if (groups & kOutDirOption) app.add_option("--out-dir", c.out_dir, "Output directory")->capture_default_str();
  if (groups & kCoherenceOptions) {
    app.add_option("--top-n", c.top_n, "Top words per topic for coherence")->capture_default_str();
    app.add_flag("--npmi", c.npmi, "Normalize each pair score");
    app.add_option("--reference", c.reference, "Documents file used as the coherence reference");
  }
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw InvalidArgument(std::string(flag) + " is required");
  if (!std::filesystem::is_regular_file(path)) {
    throw InvalidArgument(std::string("input file '") + path + "' (" + flag + ") does not exist");
  }
}

}  // namespace pftopics::cli
