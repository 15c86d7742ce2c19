#pragma once

#include <cctype>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcr/grouping.hpp"

namespace bcr {

enum class ExtractionStage { section_match, global_match, positional, none };

inline std::string_view to_string(ExtractionStage s) {
  switch (s) {
    case ExtractionStage::section_match: return "section_match";
    case ExtractionStage::global_match: return "global_match";
    case ExtractionStage::positional: return "positional";
    case ExtractionStage::none: return "none";
  }
  return "none";
}

inline ExtractionStage stage_from_string(std::string_view s) {
  if (s == "section_match") return ExtractionStage::section_match;
  if (s == "global_match") return ExtractionStage::global_match;
  if (s == "positional") return ExtractionStage::positional;
  return ExtractionStage::none;
}

struct ExtractedAnswerSet {
  std::vector<std::optional<std::string>> answers;
  std::vector<ExtractionStage> stages;
  std::size_t raw_boxed_count = 0;

  std::size_t filled() const {
    std::size_t k = 0;
    for (const auto& a : answers) k += a.has_value();
    return k;
  }
};

struct ExtractionOptions {
  // Accept any letter case for "Answer", blanks before the number and any
  // run of blanks between the colon and \boxed{.
  bool lenient = false;
};

inline constexpr std::string_view kBoxedOpen = "\\boxed{";

/// Content of a \boxed{...} whose opening brace ends right before `start`.
/// Tracks brace depth and skips the character after each backslash.
inline std::optional<std::string> extract_boxed(std::string_view text, std::size_t start) {
  int depth = 1;
  std::size_t i = start;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\\') {
      i += 2;
      continue;
    }
    if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return std::string(text.substr(start, i - start));
    }
    ++i;
  }
  return std::nullopt;
}

struct BoxedOccurrence {
  std::size_t position = 0;  // index of the backslash of \boxed{
  std::string content;
};

/// Every complete \boxed{...} in reading order. Scanning resumes after the
/// closing brace of a match, so nested boxes inside a matched one are not
/// reported separately. An unterminated box is skipped and scanning resumes
/// inside it.
inline std::vector<BoxedOccurrence> find_all_boxed(std::string_view text) {
  std::vector<BoxedOccurrence> out;
  std::size_t pos = text.find(kBoxedOpen);
  while (pos != std::string_view::npos) {
    const std::size_t body = pos + kBoxedOpen.size();
    if (auto content = extract_boxed(text, body)) {
      const std::size_t next = body + content->size() + 1;
      out.push_back({pos, std::move(*content)});
      pos = text.find(kBoxedOpen, next);
    } else {
      pos = text.find(kBoxedOpen, pos + 1);
    }
  }
  return out;
}

namespace detail {

struct MarkerHit {
  std::size_t marker = 0;  // start of "Answer"
  std::size_t body = 0;    // first character after \boxed{
};

inline bool iequal_prefix(std::string_view text, std::size_t at, std::string_view word) {
  if (at + word.size() > text.size()) return false;
  for (std::size_t k = 0; k < word.size(); ++k) {
    if (std::tolower(static_cast<unsigned char>(text[at + k])) !=
        std::tolower(static_cast<unsigned char>(word[k]))) {
      return false;
    }
  }
  return true;
}

inline std::optional<std::size_t> marker_body_at(std::string_view text, std::size_t at,
                                                 std::size_t index, bool lenient) {
  constexpr std::string_view word = "Answer";
  const bool word_ok = lenient ? iequal_prefix(text, at, word) : text.substr(at, word.size()) == word;
  if (!word_ok) return std::nullopt;
  std::size_t i = at + word.size();
  if (lenient) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
  }
  const std::string number = std::to_string(index);
  if (text.substr(i, number.size()) != number) return std::nullopt;
  i += number.size();
  if (i >= text.size() || text[i] != ':') return std::nullopt;
  ++i;
  if (lenient) {
    while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n' || text[i] == '\r')) ++i;
  } else if (i < text.size() && text[i] == ' ') {
    ++i;
  }
  if (text.substr(i, kBoxedOpen.size()) != kBoxedOpen) return std::nullopt;
  return i + kBoxedOpen.size();
}

// First "Answer{index}: \boxed{...}" in [begin, end) whose box closes before `end`.
inline std::optional<std::pair<MarkerHit, std::string>> find_marker(std::string_view text,
                                                                    std::size_t begin,
                                                                    std::size_t end,
                                                                    std::size_t index,
                                                                    bool lenient) {
  const std::string_view scope = text.substr(0, end);
  for (std::size_t at = begin; at < end; ++at) {
    const char c = scope[at];
    if (c != 'A' && !(lenient && c == 'a')) continue;
    const auto body = marker_body_at(scope, at, index, lenient);
    if (!body) continue;
    if (auto content = extract_boxed(scope, *body)) {
      return std::make_pair(MarkerHit{at, *body}, std::move(*content));
    }
  }
  return std::nullopt;
}

struct Section {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Section spans keyed by problem number (1-based); the first header wins
// when a number repeats.
inline std::vector<std::optional<Section>> split_sections(std::string_view text, std::size_t n) {
  std::vector<std::pair<int, std::size_t>> headers;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto eol = std::min(text.find('\n', pos), text.size());
    const int number = parse_header_line(text.substr(pos, eol - pos));
    if (number >= 0) headers.emplace_back(number, pos);
    pos = eol + 1;
  }
  std::vector<std::optional<Section>> sections(n);
  for (std::size_t h = 0; h < headers.size(); ++h) {
    const auto [number, begin] = headers[h];
    const std::size_t end = h + 1 < headers.size() ? headers[h + 1].second : text.size();
    if (number >= 1 && static_cast<std::size_t>(number) <= n && !sections[number - 1]) {
      sections[number - 1] = Section{begin, end};
    }
  }
  return sections;
}

}  // namespace detail

/// Splits a multi-problem completion into `n` answers. Slots are filled by
/// the section-scoped marker first, then by the marker anywhere in the text,
/// then by the i-th boxed expression overall if no other slot claimed it.
inline ExtractedAnswerSet extract_answers(std::string_view completion, std::size_t n,
                                          const ExtractionOptions& options = {}) {
  ExtractedAnswerSet out;
  out.answers.assign(n, std::nullopt);
  out.stages.assign(n, ExtractionStage::none);
  std::vector<std::optional<std::size_t>> claimed(n);  // body offset used by each slot

  const auto sections = detail::split_sections(completion, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!sections[i]) continue;
    if (auto hit = detail::find_marker(completion, sections[i]->begin, sections[i]->end, i + 1,
                                       options.lenient)) {
      out.answers[i] = std::move(hit->second);
      out.stages[i] = ExtractionStage::section_match;
      claimed[i] = hit->first.body;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (out.answers[i]) continue;
    if (auto hit = detail::find_marker(completion, 0, completion.size(), i + 1, options.lenient)) {
      out.answers[i] = std::move(hit->second);
      out.stages[i] = ExtractionStage::global_match;
      claimed[i] = hit->first.body;
    }
  }

  auto boxed = find_all_boxed(completion);
  out.raw_boxed_count = boxed.size();
  for (std::size_t i = 0; i < n && i < boxed.size(); ++i) {
    if (out.answers[i]) continue;
    const std::size_t body = boxed[i].position + kBoxedOpen.size();
    bool taken = false;
    for (const auto& c : claimed) taken = taken || (c && *c == body);
    if (taken) continue;
    out.answers[i] = boxed[i].content;
    out.stages[i] = ExtractionStage::positional;
    claimed[i] = body;
  }
  return out;
}

inline nlohmann::json to_json(const ExtractedAnswerSet& set) {
  nlohmann::json answers = nlohmann::json::array();
  nlohmann::json stages = nlohmann::json::array();
  for (std::size_t i = 0; i < set.answers.size(); ++i) {
    answers.push_back(set.answers[i] ? nlohmann::json(*set.answers[i]) : nlohmann::json(nullptr));
    stages.push_back(std::string(to_string(set.stages[i])));
  }
  return {{"answers", answers}, {"stages", stages}, {"raw_boxed_count", set.raw_boxed_count}};
}

}  // namespace bcr
