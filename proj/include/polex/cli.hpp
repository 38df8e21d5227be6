#pragma once

// Command-line front end: train, explain, serve, export-domain.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "polex/artifacts.hpp"
#include "polex/domain_io.hpp"
#include "polex/domains.hpp"
#include "polex/dqn.hpp"
#include "polex/explain.hpp"
#include "polex/render.hpp"
#include "polex/service_http.hpp"
#include "polex/solvers.hpp"
#include "polex/tree.hpp"

namespace polex::cli {

inline constexpr const char* kArtifactEnv = "POLEX_ARTIFACTS";
inline constexpr const char* kDefaultArtifactDir = "artifacts";
inline constexpr double kRequiredFidelity = 0.99;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kLowFidelity = 3 };

inline std::filesystem::path artifact_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kArtifactEnv); env && *env) return env;
  return kDefaultArtifactDir;
}

inline const std::vector<std::string>& builtin_domains() {
  static const std::vector<std::string> names{"taxi", "stackbot", "stackbot-cautious", "chain",
                                              "treatment"};
  return names;
}

inline std::optional<DomainModel> builtin_domain(const std::string& name) {
  if (name == "taxi") return domains::build_taxi();
  if (name == "stackbot") return domains::build_stackbot();
  if (name == "stackbot-cautious") return domains::build_stackbot(domains::cautious_stackbot_config());
  if (name == "chain") return domains::build_two_state_chain();
  if (name == "treatment") return domains::build_synthetic_treatment();
  return std::nullopt;
}

struct UsageError : Error {
  using Error::Error;
};

inline DomainModel resolve_domain(const std::string& spec) {
  if (auto d = builtin_domain(spec)) return std::move(*d);
  if (std::filesystem::exists(spec)) return load_domain(spec);
  std::string known;
  for (const auto& n : builtin_domains()) known += " " + n;
  throw UsageError("unknown domain '" + spec + "' (built-in:" + known + ", or a domain file path)");
}

// ---------------------------------------------------------------------------
// Hyperparameter overrides: --set key=value
// ---------------------------------------------------------------------------

class Overrides {
 public:
  explicit Overrides(const std::vector<std::string>& pairs) {
    for (const auto& p : pairs) {
      const auto eq = p.find('=');
      if (eq == std::string::npos || eq == 0)
        throw UsageError("override '" + p + "' is not of the form key=value");
      values_[p.substr(0, eq)] = p.substr(eq + 1);
    }
  }

  double number(const std::string& key, double fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double x = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("");
      return x;
    } catch (const std::exception&) {
      throw UsageError("override " + key + " expects a number, got '" + it->second + "'");
    }
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const double x = number(key, double(fallback));
    if (x < 0 || x != std::floor(x))
      throw UsageError("override " + key + " expects a non-negative integer");
    return static_cast<std::size_t>(x);
  }

  std::string text(const std::string& key, const std::string& fallback) {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  void reject_unused(const std::string& solver) const {
    for (const auto& [k, _] : values_)
      if (!used_.count(k))
        throw UsageError("override '" + k + "' does not apply to solver " + solver);
  }

 private:
  std::map<std::string, std::string> values_;
  std::set<std::string> used_;
};

inline std::vector<std::size_t> parse_hidden(const std::string& text) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('x', start);
    if (end == std::string::npos) end = text.size();
    const auto part = text.substr(start, end - start);
    if (part.empty() || part.find_first_not_of("0123456789") != std::string::npos)
      throw UsageError("hidden layer spec '" + text + "' must look like 64x64");
    out.push_back(std::stoul(part));
    start = end + 1;
  }
  if (out.empty()) throw UsageError("hidden layer spec is empty");
  return out;
}

// Default budgets per solver. Those for the model-free learners are sized
// for the built-in domains.
inline LinearQConfig linear_q_defaults(const DomainModel& domain) {
  LinearQConfig cfg;
  cfg.gamma = domain.discount();
  return cfg;
}

inline DqnConfig dqn_defaults(const DomainModel& domain) {
  DqnConfig cfg;
  cfg.gamma = domain.discount();
  return cfg;
}

inline TrainedPolicy train_policy(const DomainModel& domain, const std::string& solver,
                                  std::uint64_t seed, Overrides& ov) {
  Rng rng(seed);
  if (solver == "model-based") {
    PolicyIterationOptions opt;
    opt.tol = ov.number("tol", opt.tol);
    const std::size_t k = ov.count("k", 50);
    if (k == 0) throw UsageError("k must be at least 1");
    ov.reject_unused(solver);
    return model_based_learn(domain, k, rng, opt);
  }
  if (solver == "linear-q") {
    auto cfg = linear_q_defaults(domain);
    cfg.alpha = ov.number("alpha", cfg.alpha);
    cfg.episodes = ov.count("episodes", cfg.episodes);
    cfg.max_steps = ov.count("max_steps", cfg.max_steps);
    cfg.epsilon.start = ov.number("epsilon_start", cfg.epsilon.start);
    cfg.epsilon.end = ov.number("epsilon_end", cfg.epsilon.end);
    cfg.epsilon.decay_episodes = ov.count("epsilon_decay_episodes", cfg.epsilon.decay_episodes);
    cfg.features = parse_linear_features(ov.text("features", to_string(cfg.features)));
    ov.reject_unused(solver);
    return linear_q_learn(domain, cfg, rng);
  }
  if (solver == "dqn") {
    auto cfg = dqn_defaults(domain);
    if (const auto h = ov.text("hidden", ""); !h.empty()) cfg.hidden = parse_hidden(h);
    cfg.inputs = parse_input_encoding(ov.text("inputs", to_string(cfg.inputs)));
    cfg.buffer_capacity = ov.count("buffer_capacity", cfg.buffer_capacity);
    cfg.batch_size = ov.count("batch_size", cfg.batch_size);
    cfg.target_sync_interval = ov.count("target_sync_interval", cfg.target_sync_interval);
    cfg.alpha = ov.number("alpha", cfg.alpha);
    cfg.episodes = ov.count("episodes", cfg.episodes);
    cfg.max_steps = ov.count("max_steps", cfg.max_steps);
    cfg.epsilon.start = ov.number("epsilon_start", cfg.epsilon.start);
    cfg.epsilon.end = ov.number("epsilon_end", cfg.epsilon.end);
    cfg.epsilon.decay_episodes = ov.count("epsilon_decay_episodes", cfg.epsilon.decay_episodes);
    ov.reject_unused(solver);
    if (cfg.target_sync_interval == 0) throw UsageError("target_sync_interval must be positive");
    return dqn_learn(domain, cfg, rng);
  }
  throw UsageError("unknown solver '" + solver + "' (expected model-based, linear-q or dqn)");
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string domain;
  std::string solver;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> overrides;
};

inline int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  const DomainModel domain = resolve_domain(args.domain);
  Overrides ov(args.overrides);
  const auto t0 = std::chrono::steady_clock::now();
  const TrainedPolicy policy = train_policy(domain, args.solver, args.seed, ov);
  const SurrogateTree tree = fit_tree(domain.states(), policy.pi(), domain.num_actions());
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto dir = artifact_root(args.out) / domain.name();
  nlohmann::json run_info = {{"seed", args.seed},
                             {"hyperparameters", policy.provenance()},
                             {"num_states", domain.num_states()},
                             {"tree_nodes", tree.nodes().size()},
                             {"tree_depth", tree.depth()},
                             {"wall_time_seconds", seconds}};
  write_artifacts(dir, domain, policy, tree, run_info);
  out << "trained " << domain.name() << " with " << policy.solver() << " (seed " << args.seed
      << ") in " << seconds << " s\n"
      << "  fidelity " << tree.fidelity() << ", tree nodes " << tree.nodes().size()
      << ", artifacts in " << dir.string() << "\n";
  if (tree.fidelity() < kRequiredFidelity) {
    err << "polex: surrogate fidelity " << tree.fidelity() << " is below the required "
        << kRequiredFidelity << "\n";
    return kLowFidelity;
  }
  return kOk;
}

inline std::filesystem::path resolve_artifact_dir(const std::string& spec) {
  if (std::filesystem::is_directory(spec) && std::filesystem::exists(std::filesystem::path(spec) / kManifestFile))
    return spec;
  return artifact_root("") / spec;
}

inline constexpr const char* kQueryForms =
    "expected one of: why <state> | whynot <state> <action> | when <action>";

inline ActionId parse_action_arg(const DomainModel& domain, const std::string& text) {
  if (!text.empty() && text.find_first_not_of("0123456789") == std::string::npos) {
    const auto a = std::stoull(text);
    if (a >= domain.num_actions()) throw UsageError("action " + text + " does not exist");
    return static_cast<ActionId>(a);
  }
  if (const auto a = domain.find_action(text)) return *a;
  throw UsageError("unknown action '" + text + "'");
}

inline StateId parse_state_arg(const DomainModel& domain, const std::string& text) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
    throw UsageError("state must be a non-negative integer, got '" + text + "'");
  const auto s = std::stoull(text);
  if (s >= domain.num_states()) throw UsageError("state " + text + " does not exist");
  return static_cast<StateId>(s);
}

inline Explanation run_query(const ArtifactBundle& b, const std::vector<std::string>& q) {
  if (q.size() == 2 && q[0] == "why")
    return explain_why(b.domain, b.policy, b.tree, parse_state_arg(b.domain, q[1]));
  if (q.size() == 3 && q[0] == "whynot")
    return explain_why_not(b.domain, b.policy, b.tree, parse_state_arg(b.domain, q[1]),
                           parse_action_arg(b.domain, q[2]));
  if (q.size() == 2 && q[0] == "when") return explain_when(b.domain, b.tree, parse_action_arg(b.domain, q[1]));
  throw UsageError(std::string("malformed query; ") + kQueryForms);
}

inline int cmd_explain(const std::string& artifact, const std::vector<std::string>& query,
                       const std::string& format, std::ostream& out) {
  if (format != "text" && format != "json") throw UsageError("--format must be text or json");
  if (query.empty()) throw UsageError(std::string("missing query; ") + kQueryForms);
  const auto bundle = read_artifacts(resolve_artifact_dir(artifact));
  const auto e = run_query(bundle, query);
  if (format == "json")
    out << render::explanation(bundle.domain, e).dump(2) << "\n";
  else
    out << render::explanation_text(bundle.domain, e);
  return kOk;
}

inline int cmd_export(const std::string& name, const std::string& path, std::ostream& out) {
  const auto domain = resolve_domain(name);
  if (path.empty())
    out << serialize_domain(domain);
  else
    save_domain(domain, path);
  return kOk;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Train agents on discrete domains and explain their policies", "polex"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a policy and fit its surrogate tree");
  train_cmd->add_option("domain", train.domain, "Built-in domain name or domain file")->required();
  train_cmd->add_option("solver", train.solver, "model-based | linear-q | dqn")->required();
  train_cmd->add_option("--seed", train.seed, "Random seed");
  train_cmd->add_option("--out", train.out, std::string("Artifact directory (default $") +
                                                kArtifactEnv + " or ./" + kDefaultArtifactDir + ")");
  train_cmd->add_option("--set", train.overrides, "Hyperparameter override key=value")
      ->take_all()
      ->allow_extra_args(false);

  std::string artifact, format = "text";
  std::vector<std::string> query;
  auto* explain_cmd = app.add_subcommand("explain", "Answer a why / whynot / when question");
  explain_cmd->add_option("artifact", artifact, "Artifact directory or trained domain name")->required();
  explain_cmd->add_option("query", query, kQueryForms);
  explain_cmd->add_option("--format", format, "text | json");

  std::string serve_dir, host = "127.0.0.1";
  int port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "Serve trained artifacts over HTTP");
  serve_cmd->add_option("--dir", serve_dir, "Artifact directory");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port");

  std::string export_name, export_path;
  auto* export_cmd = app.add_subcommand("export-domain", "Write a domain file");
  export_cmd->add_option("domain", export_name, "Built-in domain name or domain file")->required();
  export_cmd->add_option("--out", export_path, "Output file (default stdout)");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*train_cmd) return cmd_train(train, out, err);
    if (*explain_cmd) return cmd_explain(artifact, query, format, out);
    if (*export_cmd) return cmd_export(export_name, export_path, out);
    if (*serve_cmd) return serve(Workspace::load(artifact_root(serve_dir)), host, port, err);
  } catch (const UsageError& e) {
    err << "polex: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "polex: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace polex::cli
