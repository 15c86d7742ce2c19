#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcr/corpus.hpp"
#include "bcr/error.hpp"
#include "bcr/seed.hpp"

namespace bcr {

/// Prompt layout for a multi-problem group. `{i}` in `answer_line` and
/// `section_header` is replaced by the 1-based problem number.
struct PromptTemplate {
  std::string system_prefix;
  std::string answer_line;
  std::string system_suffix;
  std::string section_header;

  static PromptTemplate standard() {
    return PromptTemplate{
        "[system]\n"
        "You are an expert mathematics tutor.\n"
        "Your task is to solve **multiple** math problems sequentially in a single response.\n"
        "Please strictly follow these rules:\n"
        "1. Use Markdown headers (### Problem X) to separate each problem.\n"
        "2. For each problem, show detailed step-by-step reasoning, then immediately put\n"
        "   the final answer right after the reasoning.\n"
        "3. Put the final answer for each problem immediately after solving it, in the\n"
        "   following format:\n",
        "   After Problem {i}: Answer{i}: \\boxed{...}\n",
        "4. Each answer should appear right after its corresponding problem's reasoning,\n"
        "   before moving to the next problem.\n"
        "5. Do not include any other text in your response.\n",
        "### Problem {i}",
    };
  }
};

/// N problems sharing one prompt and one completion-token budget.
struct ProblemGroup {
  std::string group_id;
  std::vector<Problem> members;
  std::string prompt;
  std::int64_t budget = 0;

  std::size_t size() const noexcept { return members.size(); }
};

struct GroupingConfig {
  std::size_t group_size = 3;
  std::uint64_t seed = 0;
  // Number of difficulty bins; 0 means one bin per group slot.
  std::size_t strata_count = 0;
  bool shuffle_within_group = true;
};

struct BudgetConfig {
  double compression_ratio = 0.5;
  std::int64_t rounding_granularity = 512;
};

struct GroupingResult {
  std::vector<ProblemGroup> groups;
  std::vector<Problem> leftovers;
  // max over groups of |group mean difficulty - corpus mean difficulty|
  double max_mean_deviation = 0.0;
};

namespace detail {

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

// Parses "### Problem 12"-style header lines: optional leading blanks, "###",
// optional blanks, "Problem", blanks, digits. Returns the number or -1.
inline int parse_header_line(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (line.substr(i, 3) != "###") return -1;
  i += 3;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (line.substr(i, 7) != "Problem") return -1;
  i += 7;
  std::size_t blanks = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i, ++blanks;
  const std::size_t digits_begin = i;
  while (i < line.size() && line[i] >= '0' && line[i] <= '9') ++i;
  if (i == digits_begin || i - digits_begin > 6) return -1;
  (void)blanks;
  return std::stoi(std::string(line.substr(digits_begin, i - digits_begin)));
}

}  // namespace detail

inline std::string render_prompt(const ProblemGroup& group,
                                 const PromptTemplate& tmpl = PromptTemplate::standard()) {
  std::string out = tmpl.system_prefix;
  const std::size_t n = group.members.size();
  for (std::size_t i = 1; i <= n; ++i) {
    out += detail::replace_all(tmpl.answer_line, "{i}", std::to_string(i));
  }
  out += tmpl.system_suffix;
  for (std::size_t i = 1; i <= n; ++i) {
    out += '\n';
    out += detail::replace_all(tmpl.section_header, "{i}", std::to_string(i));
    out += '\n';
    out += group.members[i - 1].statement;
    out += '\n';
  }
  return out;
}

/// Problem statements of a rendered prompt, in header order. Only lines that
/// are themselves section headers count, so the "(### Problem X)" mention in
/// the system text is ignored.
inline std::vector<std::string> parse_prompt_statements(std::string_view prompt) {
  std::vector<std::string> statements;
  std::string current;
  bool in_section = false;
  std::size_t pos = 0;
  while (pos <= prompt.size()) {
    const auto eol = std::min(prompt.find('\n', pos), prompt.size());
    const auto line = prompt.substr(pos, eol - pos);
    if (detail::parse_header_line(line) >= 0) {
      if (in_section) statements.emplace_back(detail::trim(current));
      current.clear();
      in_section = true;
    } else if (in_section) {
      current.append(line);
      current.push_back('\n');
    }
    if (eol == prompt.size()) break;
    pos = eol + 1;
  }
  if (in_section) statements.emplace_back(detail::trim(current));
  return statements;
}

inline std::size_t count_section_markers(std::string_view prompt) {
  std::size_t count = 0;
  std::size_t pos = 0;
  while (pos < prompt.size()) {
    const auto eol = std::min(prompt.find('\n', pos), prompt.size());
    if (detail::parse_header_line(prompt.substr(pos, eol - pos)) >= 0) ++count;
    pos = eol + 1;
  }
  return count;
}

/// Token budget for a group of `group_size`: group_size * mean(probe) * ratio,
/// rounded to the nearest multiple of the granularity with ties rounding up.
/// Never returns less than one granule.
inline std::int64_t select_budget(std::span<const double> probe_lengths, std::size_t group_size,
                                  const BudgetConfig& config = {}) {
  if (probe_lengths.empty()) throw EmptyProbeSet();
  if (!(config.compression_ratio > 0.0 && config.compression_ratio <= 1.0)) {
    throw ConfigError("compression ratio must lie in (0, 1]");
  }
  if (config.rounding_granularity <= 0) throw ConfigError("rounding granularity must be positive");
  if (group_size == 0) throw ConfigError("group size must be positive");

  const double mean = std::accumulate(probe_lengths.begin(), probe_lengths.end(), 0.0) /
                      static_cast<double>(probe_lengths.size());
  const double raw = static_cast<double>(group_size) * mean * config.compression_ratio;
  const auto g = static_cast<double>(config.rounding_granularity);
  const auto multiples = static_cast<std::int64_t>(std::floor(raw / g + 0.5));
  return std::max<std::int64_t>(1, multiples) * config.rounding_granularity;
}

inline double mean_difficulty(std::span<const Problem> problems) {
  double sum = 0.0;
  for (const auto& p : problems) sum += p.difficulty.value_or(0.0);
  return problems.empty() ? 0.0 : sum / static_cast<double>(problems.size());
}

/// Partitions a scored corpus into floor(M/N) difficulty-balanced groups.
///
/// M mod N problems are drawn at random as leftovers. The rest are sorted by
/// difficulty, cut into contiguous strata, shuffled inside each stratum and
/// dealt round-robin, so with N strata every group holds exactly one problem
/// per stratum. With a single stratum this is plain random grouping.
inline GroupingResult build_groups(const Corpus& corpus, const GroupingConfig& config,
                                   std::int64_t budget,
                                   const PromptTemplate& tmpl = PromptTemplate::standard()) {
  const std::size_t n = config.group_size;
  if (n == 0) throw ConfigError("group size must be positive");
  if (budget <= 0) throw ConfigError("group budget must be positive");
  for (const auto& p : corpus.problems) {
    if (!p.difficulty) throw MissingDifficulty(p.id);
  }
  if (corpus.size() < n) throw CorpusTooSmall(corpus.size(), n);

  const std::size_t group_count = corpus.size() / n;
  const std::size_t strata = config.strata_count == 0 ? n : config.strata_count;

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  GroupingResult result;
  const std::size_t leftover_count = corpus.size() % n;
  if (leftover_count > 0) {
    Rng rng(derive_seed(config.seed, "grouping/leftovers"));
    rng.shuffle(order);
    std::vector<std::size_t> dropped(order.end() - static_cast<std::ptrdiff_t>(leftover_count),
                                     order.end());
    order.resize(order.size() - leftover_count);
    std::sort(dropped.begin(), dropped.end());
    for (auto idx : dropped) result.leftovers.push_back(corpus.problems[idx]);
  }

  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = corpus.problems[a];
    const auto& pb = corpus.problems[b];
    if (*pa.difficulty != *pb.difficulty) return *pa.difficulty < *pb.difficulty;
    return pa.id < pb.id;
  });

  std::vector<std::size_t> dealt;
  dealt.reserve(order.size());
  const std::size_t base = order.size() / strata;
  const std::size_t extra = order.size() % strata;
  std::size_t begin = 0;
  for (std::size_t s = 0; s < strata; ++s) {
    const std::size_t len = base + (s < extra ? 1 : 0);
    std::vector<std::size_t> stratum(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(begin + len));
    Rng rng(derive_seed(config.seed, "grouping/stratum/" + std::to_string(s)));
    rng.shuffle(stratum);
    dealt.insert(dealt.end(), stratum.begin(), stratum.end());
    begin += len;
  }

  std::vector<std::vector<std::size_t>> slots(group_count);
  for (std::size_t j = 0; j < dealt.size(); ++j) slots[j % group_count].push_back(dealt[j]);

  const double global_mean = mean_difficulty(corpus.problems);
  const std::size_t width = std::to_string(group_count).size();
  for (std::size_t k = 0; k < group_count; ++k) {
    auto& members = slots[k];
    if (config.shuffle_within_group) {
      Rng rng(derive_seed(config.seed, "grouping/group/" + std::to_string(k)));
      rng.shuffle(members);
    }
    ProblemGroup group;
    std::string index = std::to_string(k);
    group.group_id = "g" + std::string(width - std::min(width, index.size()), '0') + index;
    for (auto idx : members) group.members.push_back(corpus.problems[idx]);
    group.budget = budget;
    group.prompt = render_prompt(group, tmpl);
    result.max_mean_deviation =
        std::max(result.max_mean_deviation, std::abs(mean_difficulty(group.members) - global_mean));
    result.groups.push_back(std::move(group));
  }
  return result;
}

inline nlohmann::json to_json(const ProblemGroup& g) {
  nlohmann::json ids = nlohmann::json::array();
  nlohmann::json statements = nlohmann::json::array();
  nlohmann::json answers = nlohmann::json::array();
  for (const auto& m : g.members) {
    ids.push_back(m.id);
    statements.push_back(m.statement);
    answers.push_back(m.answer);
  }
  return {{"group_id", g.group_id}, {"member_ids", ids}, {"statements", statements},
          {"answers", answers},     {"prompt", g.prompt}, {"budget", g.budget}};
}

inline ProblemGroup group_from_json(const nlohmann::json& j, std::size_t line = 0) {
  try {
    ProblemGroup g;
    g.group_id = j.at("group_id").get<std::string>();
    const auto ids = j.at("member_ids").get<std::vector<std::string>>();
    const auto answers = j.at("answers").get<std::vector<std::string>>();
    std::vector<std::string> statements;
    if (j.contains("statements")) statements = j.at("statements").get<std::vector<std::string>>();
    if (answers.size() != ids.size()) throw MalformedRecord(line, "answers and member_ids differ in length");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      g.members.push_back(Problem{ids[i], i < statements.size() ? statements[i] : std::string{},
                                  answers[i], std::nullopt});
    }
    g.prompt = j.value("prompt", std::string{});
    g.budget = j.at("budget").get<std::int64_t>();
    if (g.budget <= 0) throw MalformedRecord(line, "budget must be positive");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw MalformedRecord(line, e.what());
  }
}

}  // namespace bcr
