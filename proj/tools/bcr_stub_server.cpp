// Local chat-completions endpoint that replays a JSON script.
//
//   bcr_stub_server --script fixture.json --port 8089

#include <csignal>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bcr/stub_server.hpp"

namespace {
bcr::StubServer* g_server = nullptr;
void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}
}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chat-completions stub serving scripted replies", "bcr_stub_server"};
  std::string script_path;
  int port = 8089;
  app.add_option("--script", script_path, "JSON script (entries, fixed_completion, fail_first, omit_usage)")
      ->required();
  app.add_option("--port", port, "Port on 127.0.0.1")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  try {
    std::ifstream in(script_path);
    if (!in) {
      std::cerr << "error: cannot open " << script_path << "\n";
      return 1;
    }
    bcr::StubServer server(bcr::StubScript::from_json(nlohmann::json::parse(in)));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://127.0.0.1:" << port << "/v1" << std::endl;
    server.run(port);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
