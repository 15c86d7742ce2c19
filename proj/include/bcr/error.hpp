#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bcr {

// Base of every domain error. The CLI maps these to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (out-of-range weights, empty n lists, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class MalformedRecord : public Error {
 public:
  MalformedRecord(std::size_t line, const std::string& why)
      : Error("malformed record at line " + std::to_string(line) + ": " + why), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class DuplicateId : public Error {
 public:
  explicit DuplicateId(std::string id) : Error("duplicate problem id: " + id), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class EmptyCorpus : public Error {
 public:
  EmptyCorpus() : Error("corpus is empty") {}
};

class ProbeFailure : public Error {
 public:
  ProbeFailure(std::string id, const std::string& cause)
      : Error("probe failed for problem " + id + ": " + cause), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class MissingDifficulty : public Error {
 public:
  explicit MissingDifficulty(std::string id)
      : Error("problem has no difficulty estimate: " + id), id_(std::move(id)) {}
  const std::string& id() const noexcept { return id_; }

 private:
  std::string id_;
};

class CorpusTooSmall : public Error {
 public:
  CorpusTooSmall(std::size_t size, std::size_t needed)
      : Error("corpus of " + std::to_string(size) + " problems cannot fill a group of " +
              std::to_string(needed)) {}
};

class EmptyProbeSet : public Error {
 public:
  EmptyProbeSet() : Error("probe length set is empty") {}
};

class NonFiniteReward : public Error {
 public:
  explicit NonFiniteReward(std::size_t index)
      : Error("reward at candidate " + std::to_string(index) + " is not finite"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class BadMix : public Error {
 public:
  using Error::Error;
};

class EndpointUnavailable : public Error {
 public:
  using Error::Error;
};

class MalformedResponse : public Error {
 public:
  using Error::Error;
};

class IoFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace bcr
