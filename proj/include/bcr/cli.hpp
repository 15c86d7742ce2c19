#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bcr/corpus.hpp"
#include "bcr/error.hpp"
#include "bcr/eval_harness.hpp"
#include "bcr/extraction.hpp"
#include "bcr/grouping.hpp"
#include "bcr/manifest.hpp"
#include "bcr/probe.hpp"
#include "bcr/reward.hpp"
#include "bcr/sim_env.hpp"
#include "bcr/verification.hpp"

namespace bcr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Small parsing and file helpers

inline std::vector<std::string> split_list(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) {
    const auto t = detail::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

inline double parse_number(const std::string& s) {
  if (auto r = parse_real(s)) return *r;
  throw ConfigError("not a number: " + s);
}

inline std::vector<std::size_t> parse_n_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    const double v = parse_number(item);
    if (v < 1 || v != static_cast<double>(static_cast<std::size_t>(v))) {
      throw ConfigError("n values must be positive integers: " + item);
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("empty n list");
  return out;
}

inline RewardWeights parse_weights(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != 2 && parts.size() != 3) throw ConfigError("weights are w_acc,w_fmt[,w_len]: " + s);
  RewardWeights w{parse_number(parts[0]), parse_number(parts[1]), parts.size() == 3 ? parse_number(parts[2]) : 0.0};
  w.validate();
  return w;
}

inline std::array<double, kClassCount> parse_mix(const std::string& s) {
  const auto parts = split_list(s);
  if (parts.size() != kClassCount) throw BadMix("mix needs three proportions (easy,medium,hard)");
  return {parse_number(parts[0]), parse_number(parts[1]), parse_number(parts[2])};
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::vector<nlohmann::json> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (detail::trim(line).empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(number, e.what());
    }
  }
  return out;
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& rows) {
  std::string content;
  for (const auto& r : rows) content += r.dump() + "\n";
  detail::write_file(path, content);
}

inline std::vector<ProblemGroup> read_groups(const std::filesystem::path& path) {
  std::vector<ProblemGroup> groups;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) groups.push_back(group_from_json(j, ++line));
  return groups;
}

inline ToyPolicy load_policy(const std::optional<std::string>& path, const SimConfig& config = {}) {
  if (!path) return ToyPolicy(config);
  std::ifstream in(*path);
  if (!in) throw IoFailure("cannot open " + *path);
  try {
    return ToyPolicy::from_json(config, nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("bad policy file " + *path + ": " + e.what());
  }
}

/// Writes `<primary output>.manifest.json` describing the run.
inline void write_manifest(const std::string& command, const nlohmann::json& resolved, std::uint64_t seed,
                           std::vector<std::string> inputs, std::vector<std::string> outputs,
                           const std::string& started) {
  if (outputs.empty()) return;
  RunManifest m;
  m.command = command;
  m.config_hash = config_hash(resolved);
  m.seed = seed;
  m.input_paths = std::move(inputs);
  m.output_paths = std::move(outputs);
  m.started = started;
  m.finished = utc_timestamp();
  detail::write_file(manifest_path_for(m.output_paths.front()), to_json(m).dump(2) + "\n");
}

inline ReportFormat format_for(const std::optional<std::string>& explicit_format, const std::string& path) {
  if (explicit_format) return report_format_from_string(*explicit_format);
  return std::filesystem::path(path).extension() == ".json" ? ReportFormat::json : ReportFormat::csv;
}

// ---------------------------------------------------------------------------
// Subcommands

struct CorpusGenerateArgs {
  std::size_t count = 300;
  std::uint64_t seed = 0;
  std::string mix = "1/3,1/3,1/3";
  std::string out;
};

inline int run_corpus_generate(const CorpusGenerateArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  const auto corpus = generate_corpus(a.count, a.seed, parse_mix(a.mix));
  save_corpus(corpus, a.out);
  out << nlohmann::json{{"problems", corpus.size()}, {"out", a.out}}.dump() << "\n";
  write_manifest("corpus generate", {{"count", a.count}, {"seed", a.seed}, {"mix", a.mix}}, a.seed, {}, {a.out},
                 started);
  return kExitOk;
}

struct CorpusProbeArgs {
  std::string in;
  std::string out;
  std::size_t rollouts = 4;
  std::size_t parallel = 1;
  std::size_t retries = 2;
  std::uint64_t seed = 0;
  std::int64_t max_tokens = 32768;
  double temperature = 0.6;
  double top_p = 0.9;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  std::optional<std::string> policy;
};

inline int run_corpus_probe(const CorpusProbeArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  const Corpus corpus = load_corpus(a.in);
  ProbeConfig cfg;
  cfg.rollouts = a.rollouts;
  cfg.parallelism = a.parallel;
  cfg.retries = a.retries;
  cfg.seed = a.seed;
  cfg.max_tokens = a.max_tokens;
  std::unique_ptr<PolicyAdapter> probe;
  if (a.endpoint) {
    DecodingConfig decoding{a.temperature, a.top_p, a.max_tokens};
    FetchOptions fetch;
    fetch.retries = 0;  // retried per rollout by the prober
    probe = std::make_unique<EndpointPolicy>(*a.endpoint, a.model.value_or("default"), decoding, fetch);
  } else {
    probe = std::make_unique<ToyPolicy>(load_policy(a.policy));
  }
  const Corpus scored = estimate_difficulty(corpus, *probe, cfg);
  save_corpus(scored, a.out);
  out << nlohmann::json{{"problems", scored.size()}, {"out", a.out}}.dump() << "\n";
  nlohmann::json resolved{{"rollouts", a.rollouts},       {"retries", a.retries},
                          {"seed", a.seed},               {"max_tokens", a.max_tokens},
                          {"temperature", a.temperature}, {"top_p", a.top_p},
                          {"endpoint", a.endpoint.value_or("")}, {"model", a.model.value_or("")},
                          {"policy", a.policy.value_or("")}};
  write_manifest("corpus probe", resolved, a.seed, {a.in}, {a.out}, started);
  return kExitOk;
}

struct GroupsBuildArgs {
  std::string in;
  std::string out;
  std::size_t n = 3;
  std::uint64_t seed = 0;
  std::size_t strata = 0;
  bool no_shuffle = false;
  std::optional<std::int64_t> budget;
  double lambda = 0.5;
  std::int64_t granularity = 512;
  std::optional<std::string> leftovers;
};

inline std::int64_t budget_from_corpus(const Corpus& corpus, std::size_t n, double lambda, std::int64_t granularity) {
  std::vector<double> lengths;
  for (const auto& p : corpus.problems) {
    if (!p.difficulty) throw MissingDifficulty(p.id);
    lengths.push_back(*p.difficulty);
  }
  return select_budget(lengths, n, {lambda, granularity});
}

inline int run_groups_build(const GroupsBuildArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  const Corpus corpus = load_corpus(a.in);
  const std::int64_t budget = a.budget ? *a.budget : budget_from_corpus(corpus, a.n, a.lambda, a.granularity);
  GroupingConfig cfg{a.n, a.seed, a.strata, !a.no_shuffle};
  const auto result = build_groups(corpus, cfg, budget);
  std::vector<nlohmann::json> rows;
  for (const auto& g : result.groups) rows.push_back(to_json(g));
  write_jsonl(a.out, rows);
  std::vector<std::string> outputs{a.out};
  const std::string leftover_path = a.leftovers.value_or(a.out + ".leftovers.jsonl");
  if (!result.leftovers.empty() || a.leftovers) {
    Corpus rest{result.leftovers, corpus.source};
    std::string content;
    for (const auto& p : rest.problems) content += to_json(p).dump() + "\n";
    detail::write_file(leftover_path, content);
    outputs.push_back(leftover_path);
  }
  nlohmann::json leftover_ids = nlohmann::json::array();
  for (const auto& p : result.leftovers) leftover_ids.push_back(p.id);
  out << nlohmann::json{{"groups", result.groups.size()},
                        {"budget", budget},
                        {"leftovers", leftover_ids},
                        {"max_mean_deviation", result.max_mean_deviation}}
             .dump()
      << "\n";
  nlohmann::json resolved{{"n", a.n},           {"seed", a.seed},   {"strata", a.strata},
                          {"shuffle", !a.no_shuffle}, {"budget", budget}, {"lambda", a.lambda},
                          {"granularity", a.granularity}};
  write_manifest("groups build", resolved, a.seed, {a.in}, outputs, started);
  return kExitOk;
}

struct GroupsBudgetArgs {
  std::optional<std::string> in;
  std::optional<std::string> lengths;
  std::size_t n = 3;
  double lambda = 0.5;
  std::int64_t granularity = 512;
};

inline int run_groups_budget(const GroupsBudgetArgs& a, std::ostream& out) {
  std::vector<double> lengths;
  if (a.lengths) {
    for (const auto& item : split_list(*a.lengths)) lengths.push_back(parse_number(item));
  } else if (a.in) {
    for (const auto& p : load_corpus(*a.in).problems) {
      if (!p.difficulty) throw MissingDifficulty(p.id);
      lengths.push_back(*p.difficulty);
    }
  } else {
    throw ConfigError("give --in or --lengths");
  }
  const auto budget = select_budget(lengths, a.n, {a.lambda, a.granularity});
  double mean = 0.0;
  for (double l : lengths) mean += l;
  mean /= static_cast<double>(lengths.size());
  out << nlohmann::json{{"budget", budget}, {"mean_length", mean}, {"n", a.n}, {"lambda", a.lambda}}.dump() << "\n";
  return kExitOk;
}

struct ExtractArgs {
  std::size_t n = 3;
  std::string in;
  std::string out;
  bool lenient = false;
};

inline int run_extract(const ExtractArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  std::vector<nlohmann::json> rows;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(a.in)) {
    ++line;
    if (!j.contains("completion") || !j["completion"].is_string()) throw MalformedRecord(line, "missing completion");
    auto r = to_json(extract_answers(j["completion"].get<std::string>(), a.n, {a.lenient}));
    r["group_id"] = j.value("group_id", std::to_string(line));
    rows.push_back(std::move(r));
  }
  write_jsonl(a.out, rows);
  out << nlohmann::json{{"records", rows.size()}, {"out", a.out}}.dump() << "\n";
  write_manifest("extract", {{"n", a.n}, {"lenient", a.lenient}}, 0, {a.in}, {a.out}, started);
  return kExitOk;
}

struct VerifyArgs {
  std::string candidate;
  std::string truth;
  double tolerance = 1e-6;
  bool no_rational = false;
  bool no_string = false;
};

inline int run_verify(const VerifyArgs& a, std::ostream& out) {
  if (a.truth.empty()) throw ConfigError("truth must be non-empty");
  VerifyConfig cfg;
  cfg.numeric_tolerance = a.tolerance;
  cfg.enable_rational = !a.no_rational;
  cfg.enable_normalized_string = !a.no_string;
  const auto verdict = verify_detailed(a.candidate, a.truth, cfg);
  out << nlohmann::json{{"match", verdict.match},
                        {"stage", verdict.stage ? nlohmann::json(std::string(to_string(*verdict.stage)))
                                                : nlohmann::json(nullptr)}}
             .dump()
      << "\n";
  return verdict.match ? kExitOk : kExitDomain;
}

struct RewardArgs {
  std::string weights = "2,1,0";
  std::string groups;
  std::string completions;
  std::string out;
  std::optional<std::int64_t> max_len;
  std::string format_rule = "section";
  bool lenient = false;
};

inline int run_reward(const RewardArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  const auto weights = parse_weights(a.weights);
  RewardOptions options;
  options.extraction.lenient = a.lenient;
  if (a.format_rule == "anywhere") {
    options.format_rule = FormatRule::marker_anywhere;
  } else if (a.format_rule != "section") {
    throw ConfigError("format rule must be section or anywhere");
  }
  std::map<std::string, ProblemGroup> by_id;
  for (auto& g : read_groups(a.groups)) by_id.emplace(g.group_id, std::move(g));
  std::vector<nlohmann::json> rows;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(a.completions)) {
    ++line;
    const auto id = j.value("group_id", std::string{});
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw MalformedRecord(line, "unknown group_id '" + id + "'");
    if (!j.contains("completion") || !j["completion"].is_string()) throw MalformedRecord(line, "missing completion");
    const std::int64_t tokens = j.value("tokens", std::int64_t{0});
    auto r = to_json(total_reward(j["completion"].get<std::string>(), tokens, it->second, weights,
                                  a.max_len.value_or(it->second.budget), options));
    r["group_id"] = id;
    rows.push_back(std::move(r));
  }
  write_jsonl(a.out, rows);
  out << nlohmann::json{{"records", rows.size()}, {"out", a.out}}.dump() << "\n";
  write_manifest("reward",
                 {{"weights", a.weights}, {"max_len", a.max_len.value_or(0)}, {"format_rule", a.format_rule},
                  {"lenient", a.lenient}},
                 0, {a.groups, a.completions}, {a.out}, started);
  return kExitOk;
}

struct TrainSimArgs {
  std::string arm = "implicit";
  std::size_t steps = 500;
  std::uint64_t seed = 0;
  std::string out = "train_log.jsonl";
  std::optional<std::string> policy_out;
  std::size_t corpus_size = 300;
  std::size_t group_size = 3;
  double learning_rate = 0.5;
  double beta = 0.01;
  std::size_t candidates = 4;
  double lambda = 0.5;
  std::int64_t granularity = 32;
  bool normalize_std = false;
  std::size_t parallel = 1;
  std::size_t checkpoint_every = 0;
  std::string checkpoint_n = "1,2,3,4,5";
  std::optional<std::string> checkpoint_out;
  std::size_t eval_size = 300;
};

inline int run_train_sim(const TrainSimArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  SimConfig env;
  env.seed = a.seed;
  env.corpus_size = a.corpus_size;
  env.group_size = a.group_size;
  env.compression_ratio = a.lambda;
  env.rounding_granularity = a.granularity;
  TrainConfig train;
  train.seed = a.seed;
  train.steps = a.steps;
  train.learning_rate = a.learning_rate;
  train.kl_coefficient = a.beta;
  train.candidates_per_group = a.candidates;
  train.normalize_by_std = a.normalize_std;
  train.parallelism = a.parallel;
  const auto weights = arm_weights(a.arm);

  std::vector<nlohmann::json> checkpoints;
  StepObserver observer;
  std::optional<Corpus> held_out;
  if (a.checkpoint_every > 0) {
    held_out = generate_corpus(a.eval_size, derive_seed(a.seed, "checkpoint/corpus"), env.class_mix, env);
    const auto ns = parse_n_list(a.checkpoint_n);
    observer = [&, ns](std::size_t step, const ToyPolicy& policy, std::int64_t budget) {
      if (step % a.checkpoint_every != 0 && step != a.steps) return;
      EvalConfig ec;
      ec.n_values = ns;
      ec.decoding.max_tokens = budget;
      ec.seed = a.seed;
      const auto result = evaluate(PolicySource(policy), *held_out, ec);
      nlohmann::json rows = nlohmann::json::array();
      for (const auto& s : result.summary) rows.push_back(to_json(s));
      checkpoints.push_back({{"step", step}, {"arm", a.arm}, {"summary", rows}});
    };
  }

  const auto log = run_bcr_training(env, train, weights, a.arm, observer);
  std::vector<nlohmann::json> rows;
  for (const auto& r : log.rows) rows.push_back(to_json(r));
  write_jsonl(a.out, rows);
  std::vector<std::string> outputs{a.out};
  if (a.policy_out) {
    detail::write_file(*a.policy_out, log.policy.to_json().dump(2) + "\n");
    outputs.push_back(*a.policy_out);
  }
  if (a.checkpoint_out) {
    write_jsonl(*a.checkpoint_out, checkpoints);
    outputs.push_back(*a.checkpoint_out);
  }
  out << nlohmann::json{{"arm", a.arm},
                        {"steps", a.steps},
                        {"budget", log.budget},
                        {"final", to_json(log.rows.back())}}
             .dump()
      << "\n";
  nlohmann::json resolved{{"arm", a.arm},
                          {"steps", a.steps},
                          {"seed", a.seed},
                          {"corpus_size", a.corpus_size},
                          {"group_size", a.group_size},
                          {"learning_rate", a.learning_rate},
                          {"beta", a.beta},
                          {"candidates", a.candidates},
                          {"lambda", a.lambda},
                          {"granularity", a.granularity},
                          {"normalize_std", a.normalize_std},
                          {"checkpoint_every", a.checkpoint_every},
                          {"checkpoint_n", a.checkpoint_n},
                          {"eval_size", a.eval_size}};
  write_manifest("train-sim", resolved, a.seed, {}, outputs, started);
  return kExitOk;
}

struct EvalArgs {
  std::string in;
  std::string n = "1";
  std::string out = "report.csv";
  std::optional<std::string> format;
  std::optional<std::string> records;
  std::optional<std::string> endpoint;
  std::optional<std::string> model;
  double temperature = 0.6;
  double top_p = 0.9;
  std::int64_t max_tokens = 32768;
  std::size_t parallel = 4;
  std::size_t retries = 3;
  std::int64_t backoff_ms = 250;
  bool skip_failed = false;
  bool lenient = false;
  std::optional<std::string> policy;
  std::uint64_t seed = 0;
};

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  const Corpus corpus = load_corpus(a.in);
  EvalConfig cfg;
  cfg.n_values = parse_n_list(a.n);
  cfg.decoding = {a.temperature, a.top_p, a.max_tokens};
  cfg.endpoint = a.endpoint;
  cfg.model_name = a.model;
  cfg.parallelism = a.parallel;
  cfg.retries = a.retries;
  cfg.seed = a.seed;
  cfg.skip_failed = a.skip_failed;
  cfg.extraction.lenient = a.lenient;

  std::unique_ptr<CompletionSource> source;
  std::optional<ToyPolicy> toy;
  if (a.endpoint) {
    FetchOptions fetch;
    fetch.retries = a.retries;
    fetch.initial_backoff = std::chrono::milliseconds(a.backoff_ms);
    source = std::make_unique<EndpointSource>(*a.endpoint, a.model.value_or("default"), cfg.decoding, fetch);
  } else {
    toy = load_policy(a.policy);
    source = std::make_unique<PolicySource>(*toy);
  }
  const auto result = evaluate(*source, corpus, cfg);
  emit_report(result.records, result.summary, format_for(a.format, a.out), a.out);
  std::vector<std::string> outputs{a.out};
  if (a.records) {
    std::vector<nlohmann::json> rows;
    for (const auto& r : result.records) rows.push_back(to_json(r));
    write_jsonl(*a.records, rows);
    outputs.push_back(*a.records);
  }
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& s : result.summary) summary.push_back(to_json(s));
  out << summary.dump() << "\n";
  nlohmann::json resolved{{"n", a.n},
                          {"temperature", a.temperature},
                          {"top_p", a.top_p},
                          {"max_tokens", a.max_tokens},
                          {"endpoint", a.endpoint.value_or("")},
                          {"model", a.model.value_or("")},
                          {"retries", a.retries},
                          {"skip_failed", a.skip_failed},
                          {"lenient", a.lenient},
                          {"policy", a.policy.value_or("")},
                          {"seed", a.seed}};
  std::vector<std::string> inputs{a.in};
  if (a.policy) inputs.push_back(*a.policy);
  write_manifest("eval", resolved, a.seed, inputs, outputs, started);
  return kExitOk;
}

struct ReportArgs {
  std::string checkpoints;
  std::string out = "trajectory.csv";
  std::optional<std::string> format;
};

inline int run_report(const ReportArgs& a, std::ostream& out) {
  const std::string started = utc_timestamp();
  std::vector<std::pair<std::size_t, std::vector<SummaryRow>>> checkpoints;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(a.checkpoints)) {
    ++line;
    try {
      std::vector<SummaryRow> rows;
      for (const auto& s : j.at("summary")) {
        rows.push_back(SummaryRow{s.at("n").get<std::size_t>(), s.at("accuracy_pct").get<double>(),
                                  s.at("tokens_per_problem").get<double>(), s.value("groups", std::size_t{0}),
                                  s.value("failures", std::size_t{0})});
      }
      checkpoints.emplace_back(j.at("step").get<std::size_t>(), std::move(rows));
    } catch (const nlohmann::json::exception& e) {
      throw MalformedRecord(line, e.what());
    }
  }
  const auto points = trajectory_points(checkpoints);
  detail::write_file(a.out, render_trajectory(points, format_for(a.format, a.out)));
  out << nlohmann::json{{"points", points.size()}, {"out", a.out}}.dump() << "\n";
  write_manifest("report", {{"format", a.format.value_or("")}}, 0, {a.checkpoints}, {a.out}, started);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

/// Parses argv and runs one subcommand. Returns 0 on success, 1 on a domain
/// error (bad data, unreachable endpoint, verification mismatch) and 2 on a
/// usage error.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Batched multi-problem reasoning: corpus prep, grouping, rewards, training sim and evaluation", "bcr"};
  app.set_config("--config", "", "TOML file with option values; command-line flags take precedence");
  app.require_subcommand(1);

  // corpus
  auto* corpus = app.add_subcommand("corpus", "Create or score problem corpora");
  corpus->require_subcommand(1);
  CorpusGenerateArgs gen;
  auto* generate = corpus->add_subcommand("generate", "Write a synthetic arithmetic corpus");
  generate->add_option("--count", gen.count, "Number of problems")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  generate->add_option("--mix", gen.mix, "Easy,medium,hard proportions")->capture_default_str();
  generate->add_option("--out", gen.out, "Output JSONL")->required();

  CorpusProbeArgs probe;
  auto* probe_cmd = corpus->add_subcommand("probe", "Attach difficulty = mean probe completion length");
  probe_cmd->add_option("--in", probe.in, "Input corpus JSONL")->required();
  probe_cmd->add_option("--out", probe.out, "Output corpus JSONL")->required();
  probe_cmd->add_option("--rollouts", probe.rollouts, "Completions per problem")->capture_default_str();
  probe_cmd->add_option("--parallel", probe.parallel, "Concurrent problems")->capture_default_str();
  probe_cmd->add_option("--retries", probe.retries, "Retries per rollout")->capture_default_str();
  probe_cmd->add_option("--seed", probe.seed, "Random seed")->capture_default_str();
  probe_cmd->add_option("--max-tokens", probe.max_tokens, "Completion cap")->capture_default_str();
  probe_cmd->add_option("--temperature", probe.temperature, "Sampling temperature")->capture_default_str();
  probe_cmd->add_option("--top-p", probe.top_p, "Nucleus sampling mass")->capture_default_str();
  probe_cmd->add_option("--endpoint", probe.endpoint, "Chat-completions URL (default: built-in toy policy)");
  probe_cmd->add_option("--model", probe.model, "Model name sent to the endpoint");
  probe_cmd->add_option("--policy", probe.policy, "Toy policy JSON to probe with");

  // groups
  auto* groups = app.add_subcommand("groups", "Build problem groups and budgets");
  groups->require_subcommand(1);
  GroupsBuildArgs build;
  auto* build_cmd = groups->add_subcommand("build", "Difficulty-stratified groups with rendered prompts");
  build_cmd->add_option("--in", build.in, "Scored corpus JSONL")->required();
  build_cmd->add_option("--out", build.out, "Groups JSONL")->required();
  build_cmd->add_option("--n", build.n, "Problems per group")->capture_default_str();
  build_cmd->add_option("--seed", build.seed, "Random seed")->capture_default_str();
  build_cmd->add_option("--strata", build.strata, "Difficulty bins (0: one per slot)")->capture_default_str();
  build_cmd->add_flag("--no-shuffle", build.no_shuffle, "Keep stratum order inside each group");
  build_cmd->add_option("--budget", build.budget, "Token budget (default: derived from difficulties)");
  build_cmd->add_option("--lambda", build.lambda, "Compression ratio")->capture_default_str();
  build_cmd->add_option("--granularity", build.granularity, "Budget rounding step")->capture_default_str();
  build_cmd->add_option("--leftovers", build.leftovers, "Where to write ungrouped problems");

  GroupsBudgetArgs budget;
  auto* budget_cmd = groups->add_subcommand("budget", "Select the shared token budget");
  budget_cmd->add_option("--in", budget.in, "Scored corpus JSONL");
  budget_cmd->add_option("--lengths", budget.lengths, "Comma-separated probe lengths");
  budget_cmd->add_option("--n", budget.n, "Problems per group")->capture_default_str();
  budget_cmd->add_option("--lambda", budget.lambda, "Compression ratio")->capture_default_str();
  budget_cmd->add_option("--granularity", budget.granularity, "Rounding step")->capture_default_str();

  ExtractArgs extract;
  auto* extract_cmd = app.add_subcommand("extract", "Pull per-problem answers out of completions");
  extract_cmd->add_option("--n", extract.n, "Problems per completion")->capture_default_str();
  extract_cmd->add_option("--in", extract.in, "JSONL with group_id and completion")->required();
  extract_cmd->add_option("--out", extract.out, "Answers JSONL")->required();
  extract_cmd->add_flag("--lenient", extract.lenient, "Loose answer-marker matching");

  VerifyArgs ver;
  auto* verify_cmd = app.add_subcommand("verify", "Check one answer against the truth (exit 0 match, 1 mismatch)");
  verify_cmd->add_option("--candidate", ver.candidate, "Candidate answer")->required();
  verify_cmd->add_option("--truth", ver.truth, "Ground truth")->required();
  verify_cmd->add_option("--tolerance", ver.tolerance, "Numeric tolerance")->capture_default_str();
  verify_cmd->add_flag("--no-rational", ver.no_rational, "Skip the exact-value stage");
  verify_cmd->add_flag("--no-string", ver.no_string, "Skip the normalized-string stage");

  RewardArgs rew;
  auto* reward_cmd = app.add_subcommand("reward", "Score completions against their groups");
  reward_cmd->add_option("--weights", rew.weights, "w_acc,w_fmt,w_len")->capture_default_str();
  reward_cmd->add_option("--groups", rew.groups, "Groups JSONL")->required();
  reward_cmd->add_option("--completions", rew.completions, "JSONL with group_id, completion, tokens")->required();
  reward_cmd->add_option("--out", rew.out, "Rewards JSONL")->required();
  reward_cmd->add_option("--max-len", rew.max_len, "Length normaliser (default: group budget)");
  reward_cmd->add_option("--format-rule", rew.format_rule, "section or anywhere")->capture_default_str();
  reward_cmd->add_flag("--lenient", rew.lenient, "Loose answer-marker matching");

  TrainSimArgs tr;
  auto* train_cmd = app.add_subcommand("train-sim", "Train the toy policy in the simulated environment");
  train_cmd->add_option("--arm", tr.arm, "implicit, penalty-211 or penalty-511")->capture_default_str();
  train_cmd->add_option("--steps", tr.steps, "Training steps")->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--out", tr.out, "Training log JSONL")->capture_default_str();
  train_cmd->add_option("--policy-out", tr.policy_out, "Save the trained policy as JSON");
  train_cmd->add_option("--corpus-size", tr.corpus_size, "Synthetic training problems")->capture_default_str();
  train_cmd->add_option("--n", tr.group_size, "Problems per group")->capture_default_str();
  train_cmd->add_option("--lr", tr.learning_rate, "Learning rate")->capture_default_str();
  train_cmd->add_option("--beta", tr.beta, "KL coefficient")->capture_default_str();
  train_cmd->add_option("--candidates", tr.candidates, "Completions per group and step")->capture_default_str();
  train_cmd->add_option("--lambda", tr.lambda, "Compression ratio")->capture_default_str();
  train_cmd->add_option("--granularity", tr.granularity, "Budget rounding step")->capture_default_str();
  train_cmd->add_flag("--normalize-std", tr.normalize_std, "Scale advantages by the group reward spread");
  train_cmd->add_option("--parallel", tr.parallel, "Concurrent candidates")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Evaluate every k steps (0: never)")
      ->capture_default_str();
  train_cmd->add_option("--checkpoint-n", tr.checkpoint_n, "Group sizes for checkpoint evals")->capture_default_str();
  train_cmd->add_option("--checkpoint-out", tr.checkpoint_out, "Checkpoint summaries JSONL");
  train_cmd->add_option("--eval-size", tr.eval_size, "Held-out problems for checkpoints")->capture_default_str();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Accuracy and tokens per problem with N problems per prompt");
  eval_cmd->add_option("--in", ev.in, "Benchmark corpus JSONL")->required();
  eval_cmd->add_option("--n", ev.n, "Comma-separated group sizes")->capture_default_str();
  eval_cmd->add_option("--out", ev.out, "Summary report (.csv or .json)")->capture_default_str();
  eval_cmd->add_option("--format", ev.format, "csv or json (default: from --out extension)");
  eval_cmd->add_option("--records", ev.records, "Per-group records JSONL");
  eval_cmd->add_option("--endpoint", ev.endpoint, "Chat-completions URL (default: built-in toy policy)");
  eval_cmd->add_option("--model", ev.model, "Model name sent to the endpoint");
  eval_cmd->add_option("--temperature", ev.temperature, "Sampling temperature")->capture_default_str();
  eval_cmd->add_option("--top-p", ev.top_p, "Nucleus sampling mass")->capture_default_str();
  eval_cmd->add_option("--max-tokens", ev.max_tokens, "Completion cap per prompt")->capture_default_str();
  eval_cmd->add_option("--parallel", ev.parallel, "Concurrent requests")->capture_default_str();
  eval_cmd->add_option("--retries", ev.retries, "Retries per request")->capture_default_str();
  eval_cmd->add_option("--backoff-ms", ev.backoff_ms, "First retry delay")->capture_default_str();
  eval_cmd->add_flag("--skip-failed", ev.skip_failed, "Leave failed groups out of the averages");
  eval_cmd->add_flag("--lenient", ev.lenient, "Loose answer-marker matching");
  eval_cmd->add_option("--policy", ev.policy, "Toy policy JSON (when no endpoint is given)");
  eval_cmd->add_option("--seed", ev.seed, "Random seed")->capture_default_str();

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Turn checkpoint summaries into a tokens/accuracy trajectory");
  report_cmd->add_option("--checkpoints", rep.checkpoints, "Checkpoint JSONL from train-sim")->required();
  report_cmd->add_option("--out", rep.out, "Trajectory file (.csv or .json)")->capture_default_str();
  report_cmd->add_option("--format", rep.format, "csv or json (default: from --out extension)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (generate->parsed()) return run_corpus_generate(gen, out);
    if (probe_cmd->parsed()) return run_corpus_probe(probe, out);
    if (build_cmd->parsed()) return run_groups_build(build, out);
    if (budget_cmd->parsed()) return run_groups_budget(budget, out);
    if (extract_cmd->parsed()) return run_extract(extract, out);
    if (verify_cmd->parsed()) return run_verify(ver, out);
    if (reward_cmd->parsed()) return run_reward(rew, out);
    if (train_cmd->parsed()) return run_train_sim(tr, out);
    if (eval_cmd->parsed()) return run_eval(ev, out);
    if (report_cmd->parsed()) return run_report(rep, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitDomain;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace bcr::cli
