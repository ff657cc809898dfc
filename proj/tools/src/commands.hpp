#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "run_config.hpp"

namespace pftopics::cli {

struct EvalArgs {
  std::string model;
  std::size_t topics = 0;
  std::string report_out;
  std::string report_json;
};

struct PredictArgs {
  std::string model;
  std::string out;
};

struct SimulateArgs {
  std::string truth;
  std::size_t num_docs = 500;
  std::size_t tokens_per_doc = 60;
  std::optional<double> p;
};

struct VerifyArgs {
  int instances = 100;
  int switch_instances = 20;
  int states = 1;
  std::uint64_t seed = 0;
  int quadrature_points = 200;
  int max_topics = 3;
  int max_vocabulary = 6;
  int max_tokens = 6;
};

int cmd_prep(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);
int cmd_eval(const RunConfig& config, const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_predict(const RunConfig& config, const PredictArgs& args, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& config, const SimulateArgs& args, std::ostream& out, std::ostream& err);
int cmd_verify(const RunConfig& config, const VerifyArgs& args, std::ostream& out, std::ostream& err);

}  // namespace pftopics::cli
