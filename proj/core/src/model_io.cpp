#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pftopics/error.hpp"
#include "pftopics/model.hpp"

namespace pftopics {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j, const char* name, std::size_t expected) {
  const auto& node = j.at(name);
  auto values = node.get<std::vector<double>>();
  if (values.size() != expected) {
    throw InvalidArgument(std::string("model field '") + name + "' has length " + std::to_string(values.size()) +
                          ", expected " + std::to_string(expected));
  }
  return Eigen::Map<Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

std::string model_to_json(const SavedModel& model) {
  const auto& params = model.params;
  const int K = params.num_topics();
  json beta = json::array();
  for (int k = 0; k < K; ++k) beta.push_back(vector_json(params.beta.row(k).transpose()));

  json j;
  j["format_version"] = kModelFormatVersion;
  j["K"] = K;
  j["V"] = params.vocabulary_size();
  j["vocab"] = model.vocabulary.terms();
  j["beta"] = std::move(beta);
  j["pi"] = vector_json(params.pi);
  j["eta"] = vector_json(params.eta);
  j["delta"] = params.delta;
  j["p"] = model.config.switch_prior;
  j["alpha"] = vector_json(model.config.alpha_or_default());
  j["varphi"] = vector_json(model.varphi);
  j["target_kind"] = std::string(to_string(model.config.target_kind));
  j["seed"] = model.config.seed;
  return j.dump(1);
}

SavedModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidArgument(std::string("model JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kModelFormatVersion) {
      throw InvalidArgument("unsupported model format_version");
    }
    const int K = j.at("K").get<int>();
    const int V = j.at("V").get<int>();
    if (K < 1 || V < 1) throw InvalidArgument("model K and V must be positive");

    SavedModel model;
    model.vocabulary = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
    if (static_cast<int>(model.vocabulary.size()) != V) throw InvalidArgument("model vocab length differs from V");

    const auto& beta = j.at("beta");
    if (!beta.is_array() || static_cast<int>(beta.size()) != K) throw InvalidArgument("model beta must have K rows");
    model.params.beta.resize(K, V);
    for (int k = 0; k < K; ++k) {
      auto row = beta[k].get<std::vector<double>>();
      if (static_cast<int>(row.size()) != V) throw InvalidArgument("model beta row has wrong length");
      for (int v = 0; v < V; ++v) model.params.beta(k, v) = row[v];
    }
    model.params.pi = vector_from(j, "pi", V);
    model.params.eta = vector_from(j, "eta", K);
    model.params.delta = j.at("delta").get<double>();
    model.varphi = vector_from(j, "varphi", V);

    model.config.num_topics = K;
    model.config.switch_prior = j.at("p").get<double>();
    model.config.alpha = vector_from(j, "alpha", K);
    model.config.target_kind = parse_target_kind(j.at("target_kind").get<std::string>());
    model.config.seed = j.value("seed", std::uint64_t{0});

    model.config.validate();
    model.params.validate(1e-6);
    return model;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model JSON: ") + e.what());
  }
}

void save_model(const SavedModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << model_to_json(model) << '\n';
}

SavedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace pftopics
