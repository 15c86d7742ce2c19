#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "bcr/error.hpp"
#include "bcr/grouping.hpp"

namespace bcr {

/// Canned behaviour of the local chat-completion stub.
///
/// With `fixed_completion` set, every request gets that text. Otherwise the
/// reply is assembled per problem: for each "### Problem i" statement of the
/// prompt the matching entry contributes a templated section and its token
/// count. Unknown statements get a section with no answer and no tokens.
struct StubScript {
  struct Entry {
    std::string answer_text;
    std::int64_t tokens = 0;
  };
  std::map<std::string, Entry> by_statement;
  std::optional<std::string> fixed_completion;
  std::int64_t fixed_tokens = 0;
  // Added to the per-problem tokens of every assembled reply.
  std::int64_t overhead_tokens = 0;
  bool omit_usage = false;
  // The first `fail_first` requests are answered with `fail_status`.
  std::size_t fail_first = 0;
  int fail_status = 500;

  static StubScript from_json(const nlohmann::json& j) {
    StubScript s;
    try {
      if (j.contains("entries")) {
        for (const auto& e : j.at("entries")) {
          s.by_statement[e.at("statement").get<std::string>()] =
              Entry{e.at("answer_text").get<std::string>(), e.at("tokens").get<std::int64_t>()};
        }
      }
      if (j.contains("fixed_completion")) s.fixed_completion = j.at("fixed_completion").get<std::string>();
      s.fixed_tokens = j.value("fixed_tokens", std::int64_t{0});
      s.overhead_tokens = j.value("overhead_tokens", std::int64_t{0});
      s.omit_usage = j.value("omit_usage", false);
      s.fail_first = j.value("fail_first", std::size_t{0});
      s.fail_status = j.value("fail_status", 500);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("bad stub script: ") + e.what());
    }
    return s;
  }

  std::pair<std::string, std::int64_t> respond(const std::string& prompt) const {
    if (fixed_completion) return {*fixed_completion, fixed_tokens};
    std::string text;
    std::int64_t tokens = overhead_tokens;
    const auto statements = parse_prompt_statements(prompt);
    for (std::size_t i = 0; i < statements.size(); ++i) {
      const std::string number = std::to_string(i + 1);
      text += "### Problem " + number + "\n";
      const auto it = by_statement.find(statements[i]);
      if (it == by_statement.end()) {
        text += "I could not solve this one.\n\n";
        continue;
      }
      text += "Reasoning for problem " + number + ".\nAnswer" + number + ": \\boxed{" + it->second.answer_text +
              "}\n\n";
      tokens += it->second.tokens;
    }
    return {text, tokens};
  }
};

/// Minimal chat-completions endpoint on 127.0.0.1 for tests and local runs.
class StubServer {
 public:
  explicit StubServer(StubScript script) : script_(std::move(script)) {
    server_.Post(R"(/(v1/)?chat/completions)", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res);
    });
  }

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;
  ~StubServer() { stop(); }

  /// Binds `port` (0 picks a free one) and serves on a background thread.
  int start(int port = 0) {
    port_ = port == 0 ? server_.bind_to_any_port("127.0.0.1") : (server_.bind_to_port("127.0.0.1", port) ? port : -1);
    if (port_ < 0) throw EndpointUnavailable("stub server could not bind 127.0.0.1:" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  /// Serves on the calling thread until stop() is called elsewhere.
  void run(int port) {
    if (!server_.bind_to_port("127.0.0.1", port)) {
      throw EndpointUnavailable("stub server could not bind 127.0.0.1:" + std::to_string(port));
    }
    port_ = port;
    server_.listen_after_bind();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const noexcept { return port_; }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  std::size_t request_count() const noexcept { return requests_.load(); }

  std::vector<nlohmann::json> request_bodies() const {
    std::lock_guard lock(mutex_);
    return bodies_;
  }

 private:
  void handle(const httplib::Request& req, httplib::Response& res) {
    const std::size_t index = requests_.fetch_add(1);
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":"invalid json"})", "application/json");
      return;
    }
    {
      std::lock_guard lock(mutex_);
      bodies_.push_back(body);
    }
    if (index < script_.fail_first) {
      res.status = script_.fail_status;
      res.set_content(R"({"error":"scripted failure"})", "application/json");
      return;
    }
    std::string prompt;
    try {
      prompt = body.at("messages").at(0).at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":"missing messages[0].content"})", "application/json");
      return;
    }
    const auto [text, tokens] = script_.respond(prompt);
    nlohmann::json reply{
        {"id", "stub-" + std::to_string(index)},
        {"object", "chat.completion"},
        {"model", body.value("model", std::string("stub"))},
        {"choices",
         nlohmann::json::array(
             {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", text}}}, {"finish_reason", "stop"}}})}};
    if (!script_.omit_usage) reply["usage"] = {{"prompt_tokens", 0}, {"completion_tokens", tokens}, {"total_tokens", tokens}};
    res.set_content(reply.dump(), "application/json");
  }

  StubScript script_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<std::size_t> requests_{0};
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> bodies_;
};

}  // namespace bcr
