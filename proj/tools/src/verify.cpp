#include <json.hpp>

#include "commands.hpp"
#include "pftopics/error.hpp"
#include "pftopics/oracle.hpp"

namespace pftopics::cli {

int cmd_verify(const RunConfig&, const VerifyArgs& args, std::ostream& out, std::ostream& err) {
  if (args.max_topics < 1 || args.max_topics > oracle::kMaxTopics || args.max_vocabulary < 2 ||
      args.max_vocabulary > oracle::kMaxVocabulary || args.max_tokens < 1 || args.max_tokens > oracle::kMaxTokens) {
    throw InvalidArgument("enumeration bounds exceeded: need K <= 3, 2 <= V <= 6, N <= 6");
  }
  if (args.instances < 1 || args.states < 1 || args.switch_instances < 0 || args.quadrature_points < 2) {
    throw InvalidArgument("instance, state and quadrature counts must be positive");
  }
  oracle::InstanceOptions options;
  options.max_topics = args.max_topics;
  options.max_vocabulary = args.max_vocabulary;
  options.max_tokens = args.max_tokens;

  const auto bound = oracle::check_bound(args.seed, args.instances, options, args.states, args.quadrature_points);
  const auto disjoint =
      oracle::check_switch_posteriors(args.seed + 1, args.switch_instances, true, options, args.quadrature_points);
  const auto overlap =
      oracle::check_switch_posteriors(args.seed + 2, args.switch_instances, false, options, args.quadrature_points);

  const bool bound_ok = bound.passed == bound.checks;
  const bool disjoint_ok = disjoint.passed == disjoint.instances;
  const bool overlap_ok = overlap.passed == overlap.instances;

  nlohmann::json report{
      {"bound",
       {{"instances", bound.instances},
        {"checks", bound.checks},
        {"passed", bound.passed},
        {"min_margin", bound.min_margin},
        {"monte_carlo", bound.monte_carlo}}},
      {"disjoint_point_mass", {{"instances", disjoint.instances}, {"passed", disjoint.passed}}},
      {"overlap_interior", {{"instances", overlap.instances}, {"passed", overlap.passed}}},
      {"ok", bound_ok && disjoint_ok && overlap_ok}};
  out << report.dump() << '\n';

  auto line = [&](bool ok, const char* name, int passed, int total) {
    err << (ok ? "PASS " : "FAIL ") << name << ' ' << passed << '/' << total;
  };
  line(bound_ok, "elbo <= exact", bound.passed, bound.checks);
  err << " (min margin " << bound.min_margin << ")\n";
  line(disjoint_ok, "disjoint switch posteriors in {0,1}", disjoint.passed, disjoint.instances);
  err << '\n';
  line(overlap_ok, "overlapping switch posteriors interior", overlap.passed, overlap.instances);
  err << '\n';
  return bound_ok && disjoint_ok && overlap_ok ? 0 : 1;
}

}  // namespace pftopics::cli
