#include "mock_server.hpp"

#include <fstream>
#include <stdexcept>

#include "httplib.h"
#include "semalign/common/hashing.hpp"

namespace semalign::mock {
namespace {

std::uint64_t hex_word(const std::string& hex, std::size_t word) {
  return std::stoull(hex.substr(word * 16, 16), nullptr, 16);
}

nlohmann::json chat_body(const std::string& content) {
  return {{"id", "mock-chat"},
          {"object", "chat.completion"},
          {"model", "mock"},
          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}},
                        {"finish_reason", "stop"}}}}};
}

}  // namespace

std::string default_profile_reply(const std::string& user_message) {
  const auto tag = sha256_hex(user_message).substr(0, 12);
  return nlohmann::json{{"reasoning", "Mock reasoning " + tag + "."}, {"profile", "Mock profile " + tag + "."}}.dump();
}

std::vector<double> hash_embedding(const std::string& text, std::size_t dim) {
  std::vector<double> out(dim);
  for (std::size_t k = 0; k < dim; ++k) {
    const auto hex = sha256_hex(text + ":" + std::to_string(k / 4));
    const auto bits = hex_word(hex, k % 4) >> 11;
    out[k] = 2.0 * static_cast<double>(bits) * 0x1.0p-53 - 1.0;
  }
  return out;
}

std::vector<double> basis_embedding(const std::string& text, std::size_t dim) {
  std::vector<double> out(dim, 0.0);
  out[hex_word(sha256_hex(text), 0) % dim] = 1.0;
  return out;
}

struct MockLlmServer::State {
  nlohmann::json scenario;
  httplib::Server server;
  std::thread thread;
  std::string host;
  int port = 0;
  mutable std::mutex mutex;
  std::vector<std::size_t> cursors;
  Stats stats;

  httplib::Response& reply(httplib::Response& res, const nlohmann::json& spec, const std::string& user) {
    if (spec.contains("raw_body")) {
      res.status = spec.value("status", 200);
      res.set_content(spec.at("raw_body").get<std::string>(), "application/json");
      return res;
    }
    res.status = spec.value("status", 200);
    if (res.status != 200) {
      res.set_content(nlohmann::json{{"error", {{"message", "scripted failure"}}}}.dump(), "application/json");
      return res;
    }
    const auto content =
        spec.contains("content") ? spec.at("content").get<std::string>() : default_profile_reply(user);
    res.set_content(chat_body(content).dump(), "application/json");
    return res;
  }

  bool authorized(const httplib::Request& req, httplib::Response& res) const {
    if (!scenario.contains("api_key")) return true;
    if (req.get_header_value("Authorization") == "Bearer " + scenario.at("api_key").get<std::string>()) return true;
    res.status = 401;
    res.set_content(R"({"error":{"message":"invalid api key"}})", "application/json");
    return false;
  }

  void chat(const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    std::string user;
    try {
      const auto body = nlohmann::json::parse(req.body);
      for (const auto& m : body.at("messages")) {
        if (m.at("role") == "user") user = m.at("content").get<std::string>();
      }
    } catch (const nlohmann::json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":{"message":"bad request"}})", "application/json");
      return;
    }
    std::lock_guard lock(mutex);
    ++stats.chat_requests;
    stats.user_messages.push_back(user);
    const auto& chat_spec = scenario.contains("chat") ? scenario.at("chat") : nlohmann::json::object();
    const auto fallback = chat_spec.value("default", nlohmann::json::object());
    const auto rules = chat_spec.value("rules", nlohmann::json::array());
    for (std::size_t r = 0; r < rules.size(); ++r) {
      if (user.find(rules[r].at("match").get<std::string>()) == std::string::npos) continue;
      ++stats.rule_hits[r];
      const auto& replies = rules[r].at("replies");
      const auto k = cursors[r]++;
      if (k < replies.size()) {
        reply(res, replies[k], user);
      } else if (rules[r].value("then", "default") == "repeat" && !replies.empty()) {
        reply(res, replies.back(), user);
      } else {
        reply(res, fallback, user);
      }
      return;
    }
    reply(res, fallback, user);
  }

  void embeddings(const httplib::Request& req, httplib::Response& res) {
    if (!authorized(req, res)) return;
    std::vector<std::string> inputs;
    try {
      const auto body = nlohmann::json::parse(req.body);
      const auto& input = body.at("input");
      if (input.is_string()) {
        inputs.push_back(input.get<std::string>());
      } else {
        inputs = input.get<std::vector<std::string>>();
      }
    } catch (const nlohmann::json::exception&) {
      res.status = 400;
      res.set_content(R"({"error":{"message":"bad request"}})", "application/json");
      return;
    }
    std::lock_guard lock(mutex);
    const auto spec = scenario.value("embeddings", nlohmann::json::object());
    auto dim = spec.value("dim", std::size_t{16});
    if (spec.contains("dim_sequence")) {
      const auto& seq = spec.at("dim_sequence");
      dim = seq.at(std::min(stats.embedding_requests, seq.size() - 1)).get<std::size_t>();
    }
    ++stats.embedding_requests;
    stats.embedded_texts += inputs.size();
    const bool basis = spec.value("mode", "hash") == "basis";
    nlohmann::json data = nlohmann::json::array();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      data.push_back({{"object", "embedding"},
                      {"index", i},
                      {"embedding", basis ? basis_embedding(inputs[i], dim) : hash_embedding(inputs[i], dim)}});
    }
    res.set_content(nlohmann::json{{"object", "list"}, {"data", data}, {"model", "mock"}}.dump(),
                    "application/json");
  }

  void install_routes() {
    server.Post(R"(.*/chat/completions)", [this](const httplib::Request& q, httplib::Response& r) { chat(q, r); });
    server.Post(R"(.*/embeddings)", [this](const httplib::Request& q, httplib::Response& r) { embeddings(q, r); });
    server.Get("/_stats", [this](const httplib::Request&, httplib::Response& r) {
      std::lock_guard lock(mutex);
      r.set_content(nlohmann::json{{"chat_requests", stats.chat_requests},
                                   {"embedding_requests", stats.embedding_requests},
                                   {"rule_hits", stats.rule_hits}}
                        .dump(),
                    "application/json");
    });
  }
};

MockLlmServer::MockLlmServer(nlohmann::json scenario) : state_(std::make_unique<State>()) {
  state_->scenario = std::move(scenario);
  const auto rules = state_->scenario.contains("chat") ? state_->scenario["chat"].value("rules", nlohmann::json::array())
                                                       : nlohmann::json::array();
  state_->cursors.assign(rules.size(), 0);
  state_->stats.rule_hits.assign(rules.size(), 0);
  state_->install_routes();
}

MockLlmServer MockLlmServer::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path.string());
  return MockLlmServer(nlohmann::json::parse(in));
}

MockLlmServer::MockLlmServer(MockLlmServer&&) noexcept = default;

MockLlmServer::~MockLlmServer() {
  if (state_) stop();
}

int MockLlmServer::start(const std::string& host, int port) {
  state_->host = host;
  state_->port = port == 0 ? state_->server.bind_to_any_port(host) : port;
  if (port != 0 && !state_->server.bind_to_port(host, port)) throw std::runtime_error("cannot bind mock server");
  if (state_->port < 0) throw std::runtime_error("cannot bind mock server");
  state_->thread = std::thread([s = state_.get()] { s->server.listen_after_bind(); });
  state_->server.wait_until_ready();
  return state_->port;
}

void MockLlmServer::listen(const std::string& host, int port) {
  state_->host = host;
  state_->port = port;
  if (!state_->server.listen(host, port)) throw std::runtime_error("cannot listen on " + host);
}

void MockLlmServer::stop() {
  state_->server.stop();
  if (state_->thread.joinable()) state_->thread.join();
}

std::string MockLlmServer::base_url() const {
  return "http://" + state_->host + ":" + std::to_string(state_->port) + "/v1";
}

MockLlmServer::Stats MockLlmServer::stats() const {
  std::lock_guard lock(state_->mutex);
  return state_->stats;
}

}  // namespace semalign::mock
