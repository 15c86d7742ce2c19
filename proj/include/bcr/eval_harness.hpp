#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "bcr/corpus.hpp"
#include "bcr/error.hpp"
#include "bcr/extraction.hpp"
#include "bcr/grouping.hpp"
#include "bcr/parallel.hpp"
#include "bcr/policy.hpp"
#include "bcr/reward.hpp"
#include "bcr/seed.hpp"
#include "bcr/verification.hpp"

namespace bcr {

struct DecodingConfig {
  double temperature = 0.6;
  double top_p = 0.9;
  std::int64_t max_tokens = 32768;

  void validate() const {
    if (!(temperature >= 0.0)) throw ConfigError("temperature must be non-negative");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must lie in (0, 1]");
    if (max_tokens <= 0) throw ConfigError("max_tokens must be positive");
  }
};

struct FetchOptions {
  std::size_t retries = 3;
  std::chrono::milliseconds initial_backoff{250};
  std::chrono::seconds timeout{600};
  // Name of the environment variable holding a bearer token, if any.
  std::string api_key_env = "BCR_API_KEY";
};

struct FetchResult {
  std::string text;
  std::int64_t completion_tokens = 0;
  bool token_count_estimated = false;
};

namespace detail {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

inline ParsedUrl parse_endpoint(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) throw ConfigError("endpoint must be an http(s) URL: " + std::string(url));
  const auto path_begin = url.find('/', scheme_end + 3);
  ParsedUrl out;
  out.origin = std::string(url.substr(0, path_begin));
  std::string path = path_begin == std::string_view::npos ? std::string{} : std::string(url.substr(path_begin));
  while (!path.empty() && path.back() == '/') path.pop_back();
  constexpr std::string_view suffix = "/chat/completions";
  if (path.empty()) path = "/v1";
  if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0) {
    path += suffix;
  }
  out.path = std::move(path);
  return out;
}

inline std::int64_t whitespace_tokens(std::string_view text) {
  std::int64_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

inline bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace detail

/// One chat-completion request with a single user message. Connection
/// errors, 408, 429 and 5xx are retried with doubling backoff.
inline FetchResult fetch_completion(const std::string& endpoint, const std::string& model, const std::string& prompt,
                                    const DecodingConfig& decoding, const FetchOptions& options = {}) {
  decoding.validate();
  const auto url = detail::parse_endpoint(endpoint);
  const nlohmann::json request{{"model", model},
                               {"messages", nlohmann::json::array({{{"role", "user"}, {"content", prompt}}})},
                               {"temperature", decoding.temperature},
                               {"top_p", decoding.top_p},
                               {"max_tokens", decoding.max_tokens}};
  const std::string body = request.dump();

  httplib::Headers headers;
  if (!options.api_key_env.empty()) {
    if (const char* key = std::getenv(options.api_key_env.c_str()); key != nullptr && *key != '\0') {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }

  std::string last_error;
  auto backoff = options.initial_backoff;
  for (std::size_t attempt = 0; attempt <= options.retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(url.origin);
    client.set_connection_timeout(options.timeout);
    client.set_read_timeout(options.timeout);
    client.set_write_timeout(options.timeout);
    auto res = client.Post(url.path, headers, body, "application/json");
    if (!res) {
      last_error = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (detail::transient_status(res->status)) continue;
      throw EndpointUnavailable(url.origin + url.path + ": " + last_error);
    }
    nlohmann::json reply;
    try {
      reply = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse(std::string("response is not JSON: ") + e.what());
    }
    FetchResult out;
    try {
      const auto& content = reply.at("choices").at(0).at("message").at("content");
      out.text = content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw MalformedResponse(std::string("response lacks choices[0].message.content: ") + e.what());
    }
    const auto usage = reply.find("usage");
    if (usage != reply.end() && usage->is_object() && usage->contains("completion_tokens") &&
        (*usage)["completion_tokens"].is_number_integer()) {
      out.completion_tokens = (*usage)["completion_tokens"].get<std::int64_t>();
    } else {
      out.completion_tokens = detail::whitespace_tokens(out.text);
      out.token_count_estimated = true;
    }
    return out;
  }
  throw EndpointUnavailable(url.origin + url.path + " after " + std::to_string(options.retries + 1) +
                            " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Completion sources

class CompletionSource {
 public:
  virtual ~CompletionSource() = default;
  virtual Completion complete(const ProblemGroup& group, std::uint64_t seed) const = 0;
  // Whether wall-clock latency is meaningful for this source.
  virtual bool timed() const { return true; }
};

/// Samples a local policy; the group budget is the decoding cap.
class PolicySource final : public CompletionSource {
 public:
  explicit PolicySource(const PolicyAdapter& policy) : policy_(policy) {}
  Completion complete(const ProblemGroup& group, std::uint64_t seed) const override {
    return policy_.sample(group.prompt, group.budget, seed);
  }
  bool timed() const override { return false; }

 private:
  const PolicyAdapter& policy_;
};

class EndpointSource final : public CompletionSource {
 public:
  EndpointSource(std::string endpoint, std::string model, DecodingConfig decoding, FetchOptions options = {})
      : endpoint_(std::move(endpoint)), model_(std::move(model)), decoding_(decoding), options_(std::move(options)) {}

  Completion complete(const ProblemGroup& group, std::uint64_t) const override {
    auto r = fetch_completion(endpoint_, model_, group.prompt, decoding_, options_);
    Completion c;
    c.text = std::move(r.text);
    c.tokens = r.completion_tokens;
    c.token_count_estimated = r.token_count_estimated;
    return c;
  }

 private:
  std::string endpoint_;
  std::string model_;
  DecodingConfig decoding_;
  FetchOptions options_;
};

/// Remote model seen through the policy contract, for difficulty probing.
/// It cannot be trained.
class EndpointPolicy final : public PolicyAdapter {
 public:
  EndpointPolicy(std::string endpoint, std::string model, DecodingConfig decoding, FetchOptions options = {})
      : source_(std::move(endpoint), std::move(model), decoding, std::move(options)) {}

  Completion sample(std::string_view prompt, std::int64_t budget, std::uint64_t seed) const override {
    ProblemGroup g;
    g.prompt = std::string(prompt);
    g.budget = budget;
    return source_.complete(g, seed);
  }
  double log_prob(const ActionTrace&) const override { return 0.0; }
  double kl_to_reference() const override { return 0.0; }
  void apply_update(const PolicySignal&, double) override {
    throw ConfigError("an endpoint-backed policy cannot be updated");
  }

 private:
  EndpointSource source_;
};

// ---------------------------------------------------------------------------
// Evaluation

struct EvalConfig {
  std::vector<std::size_t> n_values{1};
  DecodingConfig decoding;
  std::optional<std::string> endpoint;
  std::optional<std::string> model_name;
  std::size_t parallelism = 1;
  std::size_t retries = 3;
  std::uint64_t seed = 0;
  // Leave failed groups out of the averages instead of scoring them all-wrong.
  bool skip_failed = false;
  VerifyConfig verify;
  ExtractionOptions extraction;
  PromptTemplate prompt_template = PromptTemplate::standard();

  void validate() const {
    decoding.validate();
    if (n_values.empty()) throw ConfigError("at least one n value is required");
    for (auto n : n_values) {
      if (n == 0) throw ConfigError("n values must be positive");
    }
    if (parallelism == 0) throw ConfigError("parallelism must be positive");
  }
};

struct EvalRecord {
  std::string group_id;
  std::size_t n = 0;  // configured group size; the last group may hold fewer problems
  std::vector<std::string> member_ids;
  std::vector<bool> per_problem_correct;
  std::int64_t generated_tokens = 0;
  std::vector<ExtractionStage> extraction_stages;
  std::int64_t latency_ms = 0;
  bool failed = false;
  bool token_count_estimated = false;
  std::string error;
};

struct SummaryRow {
  std::size_t n = 0;
  double accuracy_pct = 0.0;
  double tokens_per_problem = 0.0;
  std::size_t groups = 0;
  std::size_t failures = 0;

  bool operator==(const SummaryRow&) const = default;
};

struct EvalResult {
  std::vector<EvalRecord> records;
  std::vector<SummaryRow> summary;
};

/// Benchmark order, ceil(M/n) groups, the last one possibly short.
inline std::vector<ProblemGroup> pack_eval_groups(const Corpus& corpus, std::size_t n, std::int64_t budget,
                                                  const PromptTemplate& tmpl = PromptTemplate::standard()) {
  if (n == 0) throw ConfigError("n must be positive");
  if (budget <= 0) throw ConfigError("budget must be positive");
  if (corpus.size() < n) throw CorpusTooSmall(corpus.size(), n);
  const std::size_t count = (corpus.size() + n - 1) / n;
  const std::size_t width = std::to_string(count).size();
  std::vector<ProblemGroup> groups;
  groups.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    ProblemGroup g;
    const std::string index = std::to_string(k);
    g.group_id = "n" + std::to_string(n) + "-g" + std::string(width - index.size(), '0') + index;
    const std::size_t end = std::min(corpus.size(), (k + 1) * n);
    for (std::size_t i = k * n; i < end; ++i) g.members.push_back(corpus.problems[i]);
    g.budget = budget;
    g.prompt = render_prompt(g, tmpl);
    groups.push_back(std::move(g));
  }
  return groups;
}

inline EvalRecord score_group(const ProblemGroup& group, std::size_t n, const Completion& completion,
                              const EvalConfig& config) {
  EvalRecord r;
  r.group_id = group.group_id;
  r.n = n;
  for (const auto& m : group.members) r.member_ids.push_back(m.id);
  const auto extracted = extract_answers(completion.text, group.members.size(), config.extraction);
  r.per_problem_correct = accuracy_reward(extracted, group, config.verify).second;
  r.extraction_stages = extracted.stages;
  r.generated_tokens = completion.tokens;
  r.token_count_estimated = completion.token_count_estimated;
  return r;
}

/// Deterministic fold over records ordered by group id.
inline std::vector<SummaryRow> summarize(std::vector<EvalRecord> records, bool skip_failed = false) {
  std::sort(records.begin(), records.end(), [](const EvalRecord& a, const EvalRecord& b) {
    return a.n != b.n ? a.n < b.n : a.group_id < b.group_id;
  });
  std::vector<SummaryRow> rows;
  std::size_t problems = 0, correct = 0;
  std::int64_t tokens = 0;
  auto flush = [&] {
    if (rows.empty()) return;
    auto& row = rows.back();
    row.accuracy_pct = problems == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / static_cast<double>(problems);
    row.tokens_per_problem = problems == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(problems);
  };
  for (const auto& r : records) {
    if (rows.empty() || rows.back().n != r.n) {
      flush();
      rows.push_back(SummaryRow{r.n});
      problems = correct = 0;
      tokens = 0;
    }
    auto& row = rows.back();
    ++row.groups;
    if (r.failed) {
      ++row.failures;
      if (skip_failed) continue;
    }
    problems += r.per_problem_correct.size();
    correct += static_cast<std::size_t>(std::count(r.per_problem_correct.begin(), r.per_problem_correct.end(), true));
    tokens += r.generated_tokens;
  }
  flush();
  return rows;
}

/// Packs the corpus for every n, queries the source, extracts and verifies.
/// All groups share one sampling seed, so a stochastic local policy makes the
/// same draw for a given problem under every n.
inline EvalResult evaluate(const CompletionSource& source, const Corpus& corpus, const EvalConfig& config) {
  config.validate();
  EvalResult result;
  const std::uint64_t seed = derive_seed(config.seed, "eval/sample");
  for (const std::size_t n : config.n_values) {
    const auto groups = pack_eval_groups(corpus, n, config.decoding.max_tokens, config.prompt_template);
    std::vector<EvalRecord> records(groups.size());
    parallel_for(groups.size(), config.parallelism, [&](std::size_t k) {
      const auto& g = groups[k];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        records[k] = score_group(g, n, source.complete(g, seed), config);
      } catch (const Error& e) {
        EvalRecord r;
        r.group_id = g.group_id;
        r.n = n;
        for (const auto& m : g.members) r.member_ids.push_back(m.id);
        r.per_problem_correct.assign(g.members.size(), false);
        r.extraction_stages.assign(g.members.size(), ExtractionStage::none);
        r.failed = true;
        r.error = e.what();
        records[k] = std::move(r);
      }
      if (source.timed()) {
        records[k].latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                    std::chrono::steady_clock::now() - t0)
                                    .count();
      }
    });
    result.records.insert(result.records.end(), std::make_move_iterator(records.begin()),
                          std::make_move_iterator(records.end()));
  }
  result.summary = summarize(result.records, config.skip_failed);
  return result;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { csv, json };

inline ReportFormat report_format_from_string(std::string_view s) {
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("unknown report format: " + std::string(s));
}

namespace detail {

inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return ec == std::errc{} ? std::string(buf.data(), end) : std::string("nan");
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << content;
  if (!out) throw IoFailure("failed writing " + path.string());
}

}  // namespace detail

inline nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json stages = nlohmann::json::array();
  for (auto s : r.extraction_stages) stages.push_back(std::string(to_string(s)));
  nlohmann::json j{{"group_id", r.group_id},
                   {"n", r.n},
                   {"member_ids", r.member_ids},
                   {"per_problem_correct", r.per_problem_correct},
                   {"generated_tokens", r.generated_tokens},
                   {"extraction_stages", stages},
                   {"latency_ms", r.latency_ms},
                   {"failed", r.failed},
                   {"token_count_estimated", r.token_count_estimated}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

inline nlohmann::json to_json(const SummaryRow& s) {
  return {{"n", s.n},
          {"accuracy_pct", s.accuracy_pct},
          {"tokens_per_problem", s.tokens_per_problem},
          {"groups", s.groups},
          {"failures", s.failures}};
}

inline std::string render_report(const std::vector<EvalRecord>& records, const std::vector<SummaryRow>& summary,
                                 ReportFormat format) {
  if (records.empty()) throw Error("nothing to report: no evaluation records");
  if (format == ReportFormat::csv) {
    std::string out = "n,accuracy_pct,tokens_per_problem,groups,failures\n";
    for (const auto& s : summary) {
      out += std::to_string(s.n) + ',' + detail::format_number(s.accuracy_pct) + ',' +
             detail::format_number(s.tokens_per_problem) + ',' + std::to_string(s.groups) + ',' +
             std::to_string(s.failures) + '\n';
    }
    return out;
  }
  nlohmann::json j{{"summary", nlohmann::json::array()}, {"records", nlohmann::json::array()}};
  for (const auto& s : summary) j["summary"].push_back(to_json(s));
  for (const auto& r : records) j["records"].push_back(to_json(r));
  return j.dump(2) + "\n";
}

inline void emit_report(const std::vector<EvalRecord>& records, const std::vector<SummaryRow>& summary,
                        ReportFormat format, const std::filesystem::path& path) {
  detail::write_file(path, render_report(records, summary, format));
}

/// One point of an accuracy/efficiency trajectory: the eval summary of the
/// policy saved at a training step.
struct TrajectoryPoint {
  std::size_t step = 0;
  std::size_t n = 0;
  double tokens_per_problem = 0.0;
  double accuracy_pct = 0.0;
};

inline std::vector<TrajectoryPoint> trajectory_points(
    const std::vector<std::pair<std::size_t, std::vector<SummaryRow>>>& checkpoints) {
  std::vector<TrajectoryPoint> points;
  for (const auto& [step, rows] : checkpoints) {
    for (const auto& s : rows) points.push_back({step, s.n, s.tokens_per_problem, s.accuracy_pct});
  }
  std::stable_sort(points.begin(), points.end(), [](const TrajectoryPoint& a, const TrajectoryPoint& b) {
    return a.n != b.n ? a.n < b.n : a.step < b.step;
  });
  return points;
}

inline std::string render_trajectory(const std::vector<TrajectoryPoint>& points, ReportFormat format) {
  if (points.empty()) throw Error("nothing to report: no trajectory points");
  if (format == ReportFormat::csv) {
    std::string out = "step,n,tokens_per_problem,accuracy_pct\n";
    for (const auto& p : points) {
      out += std::to_string(p.step) + ',' + std::to_string(p.n) + ',' + detail::format_number(p.tokens_per_problem) +
             ',' + detail::format_number(p.accuracy_pct) + '\n';
    }
    return out;
  }
  nlohmann::json j = nlohmann::json::array();
  for (const auto& p : points) {
    j.push_back({{"step", p.step},
                 {"n", p.n},
                 {"tokens_per_problem", p.tokens_per_problem},
                 {"accuracy_pct", p.accuracy_pct}});
  }
  return j.dump(2) + "\n";
}

}  // namespace bcr
