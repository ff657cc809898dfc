#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "pftopics/error.hpp"
#include "pftopics/eval.hpp"
#include "pftopics/inference.hpp"

namespace pftopics::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Corpus load_documents(const Vocabulary& vocabulary, const std::string& path, const char* flag) {
  require_file(path, flag);
  std::ifstream in(path);
  return parse_documents(in, vocabulary, path);
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string format_p(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", p);
  return buf;
}

// model.json -> model_p0.1.json
fs::path with_p_suffix(const fs::path& path, double p) {
  fs::path out = path;
  out.replace_filename(path.stem().string() + "_p" + format_p(p) + path.extension().string());
  return out;
}

std::vector<std::string> document_ids(const Corpus& c) {
  std::vector<std::string> ids;
  for (const auto& d : c.documents) ids.push_back(d.id);
  return ids;
}

}  // namespace

int cmd_prep(const RunConfig& config, std::ostream& out, std::ostream& err) {
  require_file(config.vocab, "--vocab");
  require_file(config.docs, "--docs");
  const Corpus raw = load_corpus(config.vocab, config.docs);

  Corpus corpus = raw;
  std::size_t stop_removed = 0, dropped = 0;
  if (!config.stoplist.empty()) {
    require_file(config.stoplist, "--stoplist");
    auto r = remove_terms(corpus, read_stoplist(config.stoplist));
    stop_removed = r.removed_terms;
    dropped += r.dropped_documents;
    corpus = std::move(r.corpus);
  }
  auto pruned = prune_vocabulary(corpus, config.min_docs, config.max_doc_frac);
  dropped += pruned.dropped_documents;
  corpus = std::move(pruned.corpus);

  const auto split = split_corpus(corpus, config.split_fractions(), config.seed);

  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  write_vocabulary(corpus.vocabulary, dir / "vocab.txt");
  const std::pair<const char*, const Corpus*> parts[] = {
      {"corpus.txt", &corpus}, {"train.txt", &split.train}, {"val.txt", &split.val}, {"test.txt", &split.test}};
  for (auto [name, part] : parts) {
    auto file = open_output(dir / name);
    write_documents(*part, file);
  }

  json manifest{{"input", {{"vocab", config.vocab}, {"docs", config.docs}}},
                {"seed", config.seed},
                {"fractions", config.split},
                {"min_docs", config.min_docs},
                {"max_doc_frac", config.max_doc_frac},
                {"train", document_ids(split.train)},
                {"val", document_ids(split.val)},
                {"test", document_ids(split.test)}};
  open_output(dir / "manifest.json") << manifest.dump(1) << '\n';

  json summary{{"V", corpus.vocabulary_size()},
               {"M", corpus.num_documents()},
               {"input_V", raw.vocabulary_size()},
               {"input_M", raw.num_documents()},
               {"stopwords_removed", stop_removed},
               {"pruned_terms", pruned.removed_terms},
               {"dropped_documents", dropped},
               {"target_kind", std::string(to_string(corpus.target_kind))},
               {"split",
                {{"train", split.train.num_documents()},
                 {"val", split.val.num_documents()},
                 {"test", split.test.num_documents()}}},
               {"out_dir", dir.string()}};
  out << summary.dump() << '\n';
  err << "prep: V=" << corpus.vocabulary_size() << " M=" << corpus.num_documents() << " -> " << dir.string() << '\n';
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  require_file(config.vocab, "--vocab");
  require_file(config.docs, "--docs");
  const Corpus corpus = load_corpus(config.vocab, config.docs);
  if (corpus.target_kind == TargetKind::none) throw InvalidArgument("training documents have no targets");

  std::optional<Corpus> validation;
  if (!config.validation.empty()) validation = load_documents(corpus.vocabulary, config.validation, "--validation");
  std::optional<Corpus> reference;
  if (!config.reference.empty()) reference = load_documents(corpus.vocabulary, config.reference, "--reference");
  const CooccurrenceTable table(reference ? *reference : corpus);
  const CoherenceOptions coherence_options{config.top_n, config.npmi};

  const bool sweep = !config.sweep_p.empty();
  const std::vector<double> ps = sweep ? config.sweep_p : std::vector<double>{config.p};
  json runs = json::array();
  for (double p : ps) {
    RunConfig run = config;
    run.p = p;
    const ModelConfig model_config = run.model_config(corpus.target_kind);
    const TrainOptions options = run.train_options();
    const fs::path model_path = sweep ? with_p_suffix(config.model_out, p) : fs::path(config.model_out);
    const fs::path log_path = sweep ? with_p_suffix(config.log_out, p) : fs::path(config.log_out);

    auto log = open_output(log_path);
    const auto result = train(corpus, model_config, options, validation ? &*validation : nullptr,
                              [&](const EpochRecord& r) { log << r.to_json() << '\n'; });
    log.close();

    SavedModel saved{model_config, result.params, result.state.varphi, corpus.vocabulary};
    if (model_path.has_parent_path()) fs::create_directories(model_path.parent_path());
    save_model(saved, model_path);

    const auto& last = result.history.back();
    json record{{"p", p},
                {"elbo", last.elbo},
                {"val_metric", optional_json(last.val_metric)},
                {"relevant_fraction", last.relevant_fraction},
                {"coherence", coherence(result.params.beta, table, coherence_options)},
                {"epochs", last.epoch},
                {"converged", result.converged},
                {"model", model_path.string()},
                {"log", log_path.string()}};
    err << "train: p=" << format_p(p) << " epochs=" << last.epoch << " elbo=" << last.elbo << '\n';
    runs.push_back(std::move(record));
  }

  if (!sweep) {
    out << runs[0].dump() << '\n';
    return 0;
  }
  out << json{{"runs", runs}}.dump() << '\n';
  const auto cell = [](const json& v) {
    if (v.is_null()) return std::string("-");
    std::ostringstream s;
    s << std::setprecision(6) << v.get<double>();
    return s.str();
  };
  err << std::left << std::setw(8) << "p" << std::setw(14) << "coherence" << std::setw(14) << "val_metric"
      << "relevant_fraction\n";
  for (const auto& r : runs) {
    err << std::setw(8) << format_p(r["p"].get<double>()) << std::setw(14) << cell(r["coherence"]) << std::setw(14)
        << cell(r["val_metric"]) << cell(r["relevant_fraction"]) << '\n';
  }
  return 0;
}

int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& out, std::ostream& err) {
  require_file(args.model, "--model");
  const SavedModel model = load_model(args.model);
  if (!config.vocab.empty()) {
    require_file(config.vocab, "--vocab");
    if (!(read_vocabulary(config.vocab) == model.vocabulary)) {
      throw InvalidArgument("vocabulary mismatch: '" + config.vocab + "' differs from the model vocabulary");
    }
  }
  const Corpus corpus = load_documents(model.vocabulary, config.docs, "--docs");
  std::optional<Corpus> reference;
  if (!config.reference.empty()) reference = load_documents(model.vocabulary, config.reference, "--reference");

  Metrics metrics;
  metrics.coherence = coherence(model.params.beta, reference ? *reference : corpus, {config.top_n, config.npmi});
  metrics.relevant_fraction = relevant_fraction(model.varphi);
  if (corpus.target_kind != TargetKind::none) {
    if (model.config.target_kind == TargetKind::binary && corpus.target_kind != TargetKind::binary) {
      throw InvalidArgument("binary model evaluated on real-valued targets");
    }
    const auto predictions =
        predict_corpus(corpus, model.params, model.config, model.varphi, config.train_options());
    const auto targets = corpus.targets();
    if (model.config.target_kind == TargetKind::binary) {
      metrics.auc = auc(predictions, targets);
    } else {
      metrics.rmse = rmse(predictions, targets);
    }
  }
  out << metrics.to_json() << '\n';

  if (args.topics > 0 || !args.report_json.empty()) {
    const auto n = std::min<std::size_t>(args.topics > 0 ? args.topics : 10, model.vocabulary.size());
    const auto report = topic_report(model.params, model.varphi, model.vocabulary, n);
    if (!args.report_json.empty()) open_output(args.report_json) << report.to_json() << '\n';
    if (args.topics > 0) {
      if (args.report_out.empty()) {
        err << report.to_text();
      } else {
        open_output(args.report_out) << report.to_text();
      }
    }
  }
  return 0;
}

int cmd_predict(const RunConfig& config, const PredictArgs& args, std::ostream& out, std::ostream&) {
  require_file(args.model, "--model");
  const SavedModel model = load_model(args.model);
  const Corpus corpus = load_documents(model.vocabulary, config.docs, "--docs");
  const auto predictions = predict_corpus(corpus, model.params, model.config, model.varphi, config.train_options());

  std::ofstream file;
  if (!args.out.empty()) file = open_output(args.out);
  std::ostream& sink = args.out.empty() ? out : file;
  for (std::size_t d = 0; d < corpus.num_documents(); ++d) {
    json line{{"id", corpus.documents[d].id}, {"prediction", predictions[d]}};
    if (corpus.documents[d].target) line["target"] = *corpus.documents[d].target;
    sink << line.dump() << '\n';
  }
  return 0;
}

int cmd_simulate(const RunConfig& config, const SimulateArgs& args, std::ostream& out, std::ostream& err) {
  require_file(args.truth, "--truth");
  SavedModel truth = load_model(args.truth);
  if (args.p) {
    truth.config.switch_prior = *args.p;
    truth.config.validate();
  }
  const auto sample = sample_corpus(truth.config, truth.params, truth.vocabulary, args.num_docs, args.tokens_per_doc,
                                    config.seed, config.threads);

  const fs::path dir = config.out_dir;
  fs::create_directories(dir);
  write_corpus(sample.corpus, dir / "vocab.txt", dir / "docs.txt");
  auto latents = open_output(dir / "latents.jsonl");
  std::size_t tokens = 0, relevant = 0;
  for (std::size_t d = 0; d < sample.latents.size(); ++d) {
    const auto& l = sample.latents[d];
    tokens += l.switches.size();
    for (auto x : l.switches) relevant += x;
    json line{{"id", sample.corpus.documents[d].id},
              {"theta", std::vector<double>(l.theta.data(), l.theta.data() + l.theta.size())},
              {"z", l.topics},
              {"xi", l.switches},
              {"words", l.words}};
    latents << line.dump() << '\n';
  }
  out << json{{"documents", sample.corpus.num_documents()},
              {"V", sample.corpus.vocabulary_size()},
              {"tokens", tokens},
              {"relevant_tokens", relevant},
              {"target_kind", std::string(to_string(sample.corpus.target_kind))},
              {"out_dir", dir.string()}}
             .dump()
      << '\n';
  err << "simulate: " << sample.corpus.num_documents() << " documents -> " << dir.string() << '\n';
  return 0;
}

}  // namespace pftopics::cli
