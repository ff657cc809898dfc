#include "pftopics/cli.hpp"

#include <CLI11.hpp>

#include "commands.hpp"
#include "pftopics/error.hpp"
#include "pftopics/parallel.hpp"
#include "run_config.hpp"

namespace pftopics::cli {

namespace {

void add_eval_options(CLI::App& app, EvalArgs& args) {
  app.add_option("--model", args.model, "Model JSON file")->required();
  app.add_option("--topics", args.topics, "Print a report with this many words per topic");
  app.add_option("--report-out", args.report_out, "Write the text report here instead of standard error");
  app.add_option("--report-json", args.report_json, "Also write the report as JSON");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  RunConfig config;
  config.threads = default_thread_count();
  try {
    if (const auto path = find_config_flag(argc, argv)) apply_config_file(config, *path);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }

  CLI::App app{"Prediction-focused supervised topic models", "pftopics"};
  app.require_subcommand(1);
  // Repeated flags: the last one wins, as with config overrides.
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  auto* prep = app.add_subcommand("prep", "Prune and split a bag-of-words corpus");
  add_run_options(*prep, config, kCorpusOptions | kPrepOptions | kOutDirOption);
  prep->add_option("--seed", config.seed, "Shuffle seed")->capture_default_str();

  auto* train_cmd = app.add_subcommand("train", "Fit a model by ELBO ascent");
  add_run_options(*train_cmd, config,
                  kModelOptions | kTrainOptions | kCorpusOptions | kOutputOptions | kCoherenceOptions);

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Score a model on a document set");
  add_run_options(*eval, config, kCorpusOptions | kCoherenceOptions);
  add_eval_options(*eval, eval_args);

  EvalArgs topic_args;
  topic_args.topics = 10;
  auto* topics = app.add_subcommand("topics", "Same as eval with --topics 10");
  add_run_options(*topics, config, kCorpusOptions | kCoherenceOptions);
  add_eval_options(*topics, topic_args);

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Write one prediction per document as JSON lines");
  add_run_options(*predict_cmd, config, kCorpusOptions);
  predict_cmd->add_option("--model", predict_args.model, "Model JSON file")->required();
  predict_cmd->add_option("--out", predict_args.out, "Output file (default standard output)");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Sample a synthetic corpus from a model file");
  add_run_options(*simulate, config, kOutDirOption);
  simulate->add_option("--truth", sim_args.truth, "Model JSON holding the generating parameters")->required();
  simulate->add_option("--num-docs", sim_args.num_docs, "Documents to draw")->capture_default_str();
  simulate->add_option("--tokens-per-doc", sim_args.tokens_per_doc, "Tokens per document")->capture_default_str();
  simulate->add_option("--p", sim_args.p, "Override the switch prior");
  simulate->add_option("--seed", config.seed, "Sampling seed")->capture_default_str();
  simulate->add_option("--threads", config.threads, "Worker threads")->capture_default_str();

  VerifyArgs verify_args;
  auto* verify = app.add_subcommand("verify", "Check the bound and switch posteriors against exact computation");
  verify->add_option("--instances", verify_args.instances, "Random instances for the bound check")
      ->capture_default_str();
  verify->add_option("--states", verify_args.states, "Variational states per instance")->capture_default_str();
  verify->add_option("--switch-instances", verify_args.switch_instances,
                     "Instances for each switch-posterior check")
      ->capture_default_str();
  verify->add_option("--seed", verify_args.seed, "Instance seed")->capture_default_str();
  verify->add_option("--quadrature-points", verify_args.quadrature_points, "Points per simplex dimension")
      ->capture_default_str();
  verify->add_option("--max-topics", verify_args.max_topics, "Largest K in a random instance")->capture_default_str();
  verify->add_option("--max-vocabulary", verify_args.max_vocabulary, "Largest vocabulary in a random instance")->capture_default_str();
  verify->add_option("--max-tokens", verify_args.max_tokens, "Largest document length in a random instance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (prep->parsed()) return cmd_prep(config, out, err);
    if (train_cmd->parsed()) return cmd_train(config, out, err);
    if (eval->parsed()) return cmd_eval(config, eval_args, out, err);
    if (topics->parsed()) return cmd_eval(config, topic_args, out, err);
    if (predict_cmd->parsed()) return cmd_predict(config, predict_args, out, err);
    if (simulate->parsed()) return cmd_simulate(config, sim_args, out, err);
    if (verify->parsed()) return cmd_verify(config, verify_args, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << (e.term().empty() ? "" : " [term " + e.term() + "]") << '\n';
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomainError;
  }
  return kExitUsage;
}

}  // namespace pftopics::cli
