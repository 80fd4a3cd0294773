#include <unistd.h>

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "mock_server.hpp"

namespace {
semalign::mock::MockLlmServer* running = nullptr;
}

int main(int argc, char** argv) {
  CLI::App app{"Scripted OpenAI-compatible chat/embeddings responder for offline tests"};
  std::string scenario;
  std::string host = "127.0.0.1";
  int port = 8089;
  app.add_option("scenario", scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  app.add_option("--host", host, "Bind address");
  app.add_option("--port", port, "Port (0 picks a free one)");
  CLI11_PARSE(app, argc, argv);

  try {
    auto server = semalign::mock::MockLlmServer::from_file(scenario);
    running = &server;
    std::signal(SIGINT, [](int) { running->stop(); });
    std::signal(SIGTERM, [](int) { running->stop(); });
    if (port == 0) {
      server.start(host, 0);
      std::cout << server.base_url() << std::endl;
      pause();
    } else {
      std::cout << "http://" << host << ":" << port << "/v1" << std::endl;
      server.listen(host, port);
    }
  } catch (const std::exception& e) {
    std::cerr << "mock_llm: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
