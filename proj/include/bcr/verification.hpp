#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include <boost/multiprecision/cpp_int.hpp>

#include "bcr/error.hpp"

namespace bcr {

using Rational = boost::multiprecision::cpp_rational;

enum class VerifyStage { rational, numeric, normalized_string };

inline std::string_view to_string(VerifyStage s) {
  switch (s) {
    case VerifyStage::rational: return "rational";
    case VerifyStage::numeric: return "numeric";
    case VerifyStage::normalized_string: return "normalized_string";
  }
  return "normalized_string";
}

struct VerifyConfig {
  double numeric_tolerance = 1e-6;
  bool enable_rational = true;
  bool enable_numeric = true;
  bool enable_normalized_string = true;
};

struct VerifyVerdict {
  bool match = false;
  std::optional<VerifyStage> stage;
};

namespace detail {

inline bool is_letter(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }

inline std::string replace_command(std::string s, std::string_view from, std::string_view to) {
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    const std::size_t after = pos + from.size();
    if (after < s.size() && is_letter(s[after])) {
      pos = after;
      continue;
    }
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

// True when s[0] == '{' and its matching '}' is the last character.
inline bool braces_wrap_whole(std::string_view s) {
  if (s.size() < 2 || s.front() != '{' || s.back() != '}') return false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\') {
      ++i;
      continue;
    }
    if (s[i] == '{') ++depth;
    if (s[i] == '}' && --depth == 0) return i + 1 == s.size();
  }
  return false;
}

inline std::string normalize_once(std::string s) {
  std::string compact;
  compact.reserve(s.size());
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
  }
  compact = replace_command(std::move(compact), "\\dfrac", "\\frac");
  compact = replace_command(std::move(compact), "\\tfrac", "\\frac");
  compact = replace_command(std::move(compact), "\\left", "");
  compact = replace_command(std::move(compact), "\\right", "");
  if (compact.size() >= 2 && compact.front() == '$' && compact.back() == '$') {
    compact = compact.substr(1, compact.size() - 2);
  } else if (braces_wrap_whole(compact)) {
    compact = compact.substr(1, compact.size() - 2);
  }
  return compact;
}

inline std::optional<Rational> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s.front() == '+' || s.front() == '-') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  const auto dot = s.find('.');
  const std::string_view whole = s.substr(0, dot);
  const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (whole.empty() && frac.empty()) return std::nullopt;
  for (char c : whole) if (c < '0' || c > '9') return std::nullopt;
  for (char c : frac) if (c < '0' || c > '9') return std::nullopt;
  using boost::multiprecision::cpp_int;
  // cpp_int reads a leading 0 as an octal prefix
  std::string digits = std::string(whole) + std::string(frac);
  digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size()));
  cpp_int numerator(digits.empty() ? std::string("0") : digits);
  cpp_int denominator = boost::multiprecision::pow(cpp_int(10), static_cast<unsigned>(frac.size()));
  Rational value(numerator, denominator);
  return negative ? Rational(-value) : value;
}

}  // namespace detail

/// Canonical spelling used by the string stage: no whitespace, \dfrac and
/// \tfrac as \frac, no \left or \right, outer $...$ or {...} removed. Applied
/// until it stops changing, so it is idempotent.
inline std::string normalize_latex(std::string_view s) {
  std::string current(s);
  for (;;) {
    std::string next = detail::normalize_once(current);
    if (next == current) return current;
    current = std::move(next);
  }
}

/// Exact value of integers, finite decimals, a/b and \frac{a}{b}, each with an
/// optional sign and an optional percent suffix.
inline std::optional<Rational> parse_rational(std::string_view raw) {
  std::string s = normalize_latex(raw);
  std::string_view v = s;
  bool percent = false;
  if (v.size() >= 2 && v.substr(v.size() - 2) == "\\%") {
    percent = true;
    v.remove_suffix(2);
  } else if (!v.empty() && v.back() == '%') {
    percent = true;
    v.remove_suffix(1);
  }
  bool negative = false;
  if (!v.empty() && (v.front() == '-' || v.front() == '+') && v.substr(1, 5) == "\\frac") {
    negative = v.front() == '-';
    v.remove_prefix(1);
  }

  std::optional<Rational> value;
  if (v.substr(0, 5) == "\\frac") {
    std::string_view rest = v.substr(5);
    auto take_group = [&](std::string_view& r) -> std::optional<std::string_view> {
      if (r.empty() || r.front() != '{') return std::nullopt;
      const auto close = r.find('}');
      if (close == std::string_view::npos) return std::nullopt;
      auto inner = r.substr(1, close - 1);
      r.remove_prefix(close + 1);
      return inner;
    };
    auto num = take_group(rest);
    auto den = num ? take_group(rest) : std::nullopt;
    if (!num || !den || !rest.empty()) return std::nullopt;
    auto a = detail::parse_decimal(*num);
    auto b = detail::parse_decimal(*den);
    if (!a || !b || *b == 0) return std::nullopt;
    value = *a / *b;
  } else if (const auto slash = v.find('/'); slash != std::string_view::npos) {
    auto a = detail::parse_decimal(v.substr(0, slash));
    auto b = detail::parse_decimal(v.substr(slash + 1));
    if (!a || !b || *b == 0) return std::nullopt;
    value = *a / *b;
  } else {
    value = detail::parse_decimal(v);
  }
  if (!value) return std::nullopt;
  if (negative) *value = -*value;
  if (percent) *value /= 100;
  return value;
}

/// Real value of anything parse_rational accepts, plus floating-point
/// literals with exponents. Infinities and NaN are rejected.
inline std::optional<double> parse_real(std::string_view raw) {
  if (auto r = parse_rational(raw)) return static_cast<double>(*r);
  const std::string s = normalize_latex(raw);
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double value = 0.0;
  const auto [end, ec] = std::from_chars(first, s.data() + s.size(), value);
  if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

namespace detail {

// The tolerance as the exact decimal it was written as, so 1e-6 means 10^-6.
inline Rational tolerance_as_rational(double eps) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), eps, std::chars_format::fixed);
  if (ec != std::errc{}) return Rational(eps);
  return parse_decimal(std::string_view(buf.data(), static_cast<std::size_t>(end - buf.data())))
      .value_or(Rational(eps));
}

inline bool stage_matches(VerifyStage stage, std::string_view candidate, std::string_view truth,
                          const VerifyConfig& config) {
  switch (stage) {
    case VerifyStage::rational: {
      if (!config.enable_rational) return false;
      const auto c = parse_rational(candidate);
      const auto t = parse_rational(truth);
      return c && t && *c == *t;
    }
    case VerifyStage::numeric: {
      if (!config.enable_numeric) return false;
      const auto cr = parse_rational(candidate);
      const auto tr = parse_rational(truth);
      if (cr && tr) {
        const Rational eps = tolerance_as_rational(config.numeric_tolerance);
        const Rational scale = abs(*tr) > 1 ? Rational(abs(*tr)) : Rational(1);
        return abs(*cr - *tr) <= eps * scale;
      }
      const auto c = parse_real(candidate);
      const auto t = parse_real(truth);
      if (!c || !t) return false;
      return std::abs(*c - *t) <= config.numeric_tolerance * std::max(1.0, std::abs(*t));
    }
    case VerifyStage::normalized_string:
      return config.enable_normalized_string && normalize_latex(candidate) == normalize_latex(truth);
  }
  return false;
}

}  // namespace detail

inline constexpr std::array<VerifyStage, 3> kDefaultStageOrder{
    VerifyStage::rational, VerifyStage::numeric, VerifyStage::normalized_string};

inline VerifyVerdict verify_detailed(std::string_view candidate, std::string_view truth,
                                     const VerifyConfig& config = {},
                                     const std::array<VerifyStage, 3>& order = kDefaultStageOrder) {
  if (!(config.numeric_tolerance > 0.0) || !std::isfinite(config.numeric_tolerance)) {
    throw ConfigError("numeric tolerance must be positive and finite");
  }
  for (auto stage : order) {
    if (detail::stage_matches(stage, candidate, truth, config)) return {true, stage};
  }
  return {};
}

inline bool verify(std::string_view candidate, std::string_view truth, const VerifyConfig& config = {}) {
  return verify_detailed(candidate, truth, config).match;
}

}  // namespace bcr
