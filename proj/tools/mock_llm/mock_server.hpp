#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

namespace httplib {
class Server;
}

namespace semalign::mock {

/// Scripted stand-in for an OpenAI-compatible chat + embeddings service.
///
/// Scenario document:
///   {
///     "api_key": "sk-test",                          optional; enforces Bearer auth
///     "chat": {
///       "rules": [{"match": "substring", "replies": [reply...], "then": "default"|"repeat"}],
///       "default": reply                              optional
///     },
///     "embeddings": {"mode": "hash"|"basis", "dim": 16, "dim_sequence": [16, 17]}
///   }
///   reply = {"status": 200, "content": "..."} | {"status": 429} | {"raw_body": "..."}
///
/// A chat request is matched against the first rule whose substring occurs in
/// its user message; each rule replays its replies in order, then falls back
/// to the default (or repeats its last reply). A reply without "content"
/// carries a valid profile JSON derived from the user message.
class MockLlmServer {
 public:
  explicit MockLlmServer(nlohmann::json scenario);
  static MockLlmServer from_file(const std::filesystem::path& path);
  ~MockLlmServer();

  MockLlmServer(const MockLlmServer&) = delete;
  MockLlmServer& operator=(const MockLlmServer&) = delete;
  MockLlmServer(MockLlmServer&&) noexcept;

  /// Binds (port 0 picks a free one) and serves on a background thread.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  /// Serves on the calling thread until stop() is called from elsewhere.
  void listen(const std::string& host, int port);
  void stop();

  std::string base_url() const;

  struct Stats {
    std::size_t chat_requests = 0;
    std::size_t embedding_requests = 0;
    std::size_t embedded_texts = 0;
    std::vector<std::size_t> rule_hits;  // per scenario rule
    std::vector<std::string> user_messages;  // every chat user message, in arrival order
  };
  Stats stats() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

/// The reply content used when a scripted reply omits "content".
std::string default_profile_reply(const std::string& user_message);

/// Deterministic pseudo-embedding of `text`.
std::vector<double> hash_embedding(const std::string& text, std::size_t dim);
std::vector<double> basis_embedding(const std::string& text, std::size_t dim);

}  // namespace semalign::mock
