#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcr/error.hpp"

namespace bcr {

/// One math question with its ground-truth answer.
///
/// `difficulty` is the mean completion length a probe policy needed for the
/// problem; it is absent until estimate_difficulty() has run.
struct Problem {
  std::string id;
  std::string statement;
  std::string answer;
  std::optional<double> difficulty;

  bool operator==(const Problem&) const = default;
};

/// Ordered problem set. `source` is a provenance label (usually the file it
/// was read from) and does not take part in equality.
struct Corpus {
  std::vector<Problem> problems;
  std::string source;

  std::size_t size() const noexcept { return problems.size(); }
  bool operator==(const Corpus& other) const { return problems == other.problems; }
};

enum class CorpusFormat { jsonl };

inline nlohmann::json to_json(const Problem& p) {
  nlohmann::json j = {{"id", p.id}, {"statement", p.statement}, {"answer", p.answer}};
  if (p.difficulty) j["difficulty"] = *p.difficulty;
  return j;
}

inline Problem problem_from_json(const nlohmann::json& j, std::size_t line) {
  if (!j.is_object()) throw MalformedRecord(line, "record is not a JSON object");
  auto required_string = [&](const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
      throw MalformedRecord(line, std::string("missing or non-string \"") + key + "\"");
    }
    auto value = it->get<std::string>();
    if (value.empty()) throw MalformedRecord(line, std::string("empty \"") + key + "\"");
    return value;
  };

  Problem p;
  p.id = required_string("id");
  p.statement = required_string("statement");
  p.answer = required_string("answer");
  if (auto it = j.find("difficulty"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) throw MalformedRecord(line, "\"difficulty\" is not a number");
    const double d = it->get<double>();
    if (!std::isfinite(d) || d < 0.0) {
      throw MalformedRecord(line, "\"difficulty\" must be finite and non-negative");
    }
    p.difficulty = d;
  }
  return p;
}

/// Checks the corpus invariants: non-empty, unique ids, well-formed fields.
inline void validate(const Corpus& corpus) {
  if (corpus.problems.empty()) throw EmptyCorpus();
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < corpus.problems.size(); ++i) {
    const auto& p = corpus.problems[i];
    if (p.id.empty() || p.statement.empty() || p.answer.empty()) {
      throw MalformedRecord(i + 1, "id, statement and answer must be non-empty");
    }
    if (p.difficulty && (!std::isfinite(*p.difficulty) || *p.difficulty < 0.0)) {
      throw MalformedRecord(i + 1, "difficulty must be finite and non-negative");
    }
    if (!seen.insert(p.id).second) throw DuplicateId(p.id);
  }
}

inline Corpus parse_corpus(std::istream& in, std::string source = {}) {
  Corpus corpus;
  corpus.source = std::move(source);
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw MalformedRecord(line_no, e.what());
    }
    Problem p = problem_from_json(j, line_no);
    if (!seen.insert(p.id).second) throw DuplicateId(p.id);
    corpus.problems.push_back(std::move(p));
  }
  if (corpus.problems.empty()) throw EmptyCorpus();
  return corpus;
}

inline Corpus load_corpus(const std::filesystem::path& path, CorpusFormat = CorpusFormat::jsonl) {
  std::ifstream in(path);
  if (!in) throw IoFailure("cannot open corpus file " + path.string());
  return parse_corpus(in, path.string());
}

inline std::string serialize_corpus(const Corpus& corpus) {
  std::ostringstream out;
  for (const auto& p : corpus.problems) out << to_json(p).dump() << '\n';
  return out.str();
}

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  validate(corpus);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoFailure("cannot write corpus file " + path.string());
  out << serialize_corpus(corpus);
  if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace bcr
