#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bcr/seed.hpp"

namespace bcr {

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> input_paths;
  std::vector<std::string> output_paths;
  std::string started;
  std::string finished;
};

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// 16 hex digits of FNV-1a over the compact dump of `resolved`. nlohmann
/// objects keep keys sorted, so the hash ignores the order options were given in.
inline std::string config_hash(const nlohmann::json& resolved) {
  const std::uint64_t h = fnv1a64(resolved.dump());
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) out[static_cast<std::size_t>(15 - i)] = digits[(h >> (4 * i)) & 0xF];
  return out;
}

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command},         {"config_hash", m.config_hash},   {"seed", m.seed},
          {"input_paths", m.input_paths}, {"output_paths", m.output_paths}, {"started", m.started},
          {"finished", m.finished}};
}

inline std::filesystem::path manifest_path_for(const std::filesystem::path& output) {
  return output.string() + ".manifest.json";
}

}  // namespace bcr
