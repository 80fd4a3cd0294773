#include "semalign/profilegen/client.hpp"

#include <cstdlib>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "semalign/common/errors.hpp"

namespace semalign {

void ClientConfig::apply_environment() {
  if (const char* url = std::getenv("OPENAI_BASE_URL"); url && *url) base_url = url;
  if (const char* key = std::getenv("OPENAI_API_KEY"); key && *key) api_key = key;
}

HttpTransport::HttpTransport(const ClientConfig& cfg) : api_key_(cfg.api_key), timeout_(cfg.timeout) {
  const auto scheme_end = cfg.base_url.find("://");
  if (scheme_end == std::string::npos) throw DataError("service URL '" + cfg.base_url + "' lacks a scheme");
  const auto path_start = cfg.base_url.find('/', scheme_end + 3);
  origin_ = cfg.base_url.substr(0, path_start);
  if (path_start != std::string::npos) prefix_ = cfg.base_url.substr(path_start);
  while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
}

std::string HttpTransport::endpoint(const std::string& path) const { return origin_ + prefix_ + path; }

HttpResponse HttpTransport::post(const std::string& path, const std::string& body) {
  // A client per call keeps the transport thread-safe; requests are few and slow.
  httplib::Client client(origin_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  if (!api_key_.empty()) client.set_bearer_token_auth(api_key_);
  const auto res = client.Post(prefix_ + path, body, "application/json");
  if (!res) throw ServiceError("POST " + endpoint(path) + ": " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

HttpResponse post_json(Transport& transport, const std::string& path, const std::string& body,
                       const ClientConfig& cfg) {
  auto delay = cfg.backoff_initial;
  for (int attempt = 0;; ++attempt) {
    auto res = transport.post(path, body);
    if (res.status >= 200 && res.status < 300) return res;
    const bool transient = res.status == 429 || res.status >= 500;
    if (!transient || attempt >= cfg.throttle_retries) {
      std::string detail = res.body.substr(0, 300);
      throw ServiceError("POST " + transport.endpoint(path) + ": HTTP " + std::to_string(res.status) +
                         (transient ? " after " + std::to_string(attempt + 1) + " attempts" : "") +
                         (detail.empty() ? "" : ": " + detail));
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

const char* const kCorrectiveSuffix =
    "\n\nYour previous reply could not be parsed. Reply with a single JSON object holding exactly the string "
    "fields \"reasoning\" and \"profile\", and no other text.";

namespace {

std::string chat_content(const HttpResponse& res, const std::string& url) {
  try {
    const auto j = nlohmann::json::parse(res.body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError("POST " + url + ": malformed chat completion response (" + e.what() + ")");
  }
}

}  // namespace

GenerationOutcome generate_profile(const PromptPair& prompt, EntityKind kind, const std::string& id,
                                   const ClientConfig& cfg, Transport& transport) {
  const std::string path = "/chat/completions";
  GenerationOutcome out;
  for (int attempt = 0; attempt <= cfg.retry_limit; ++attempt) {
    const std::string user = attempt == 0 ? prompt.user : prompt.user + kCorrectiveSuffix;
    const nlohmann::ordered_json request{
        {"model", cfg.chat_model},
        {"temperature", cfg.temperature},
        {"messages", {{{"role", "system"}, {"content", prompt.system}}, {{"role", "user"}, {"content", user}}}}};
    const auto res = post_json(transport, path, request.dump(), cfg);
    out.retries = attempt;
    if (auto reply = parse_profile_reply(chat_content(res, transport.endpoint(path)))) {
      out.profile = Profile{id,        kind, std::move(reply->profile), std::move(reply->reasoning), cfg.chat_model,
                            prompt_fingerprint(cfg.chat_model, prompt)};
      return out;
    }
  }
  out.error = "no parseable reply after " + std::to_string(cfg.retry_limit + 1) + " attempts";
  return out;
}

std::vector<std::vector<double>> request_embeddings(const std::vector<std::string>& texts, const ClientConfig& cfg,
                                                    Transport& transport) {
  const std::string path = "/embeddings";
  const nlohmann::json request{{"model", cfg.embedding_model}, {"input", texts}};
  const auto res = post_json(transport, path, request.dump(), cfg);
  const auto url = transport.endpoint(path);
  std::vector<std::vector<double>> out(texts.size());
  std::vector<bool> seen(texts.size(), false);
  try {
    const auto j = nlohmann::json::parse(res.body);
    const auto& data = j.at("data");
    if (data.size() != texts.size()) {
      throw ServiceError("POST " + url + ": expected " + std::to_string(texts.size()) + " embeddings, got " +
                         std::to_string(data.size()));
    }
    for (std::size_t k = 0; k < data.size(); ++k) {
      const auto index = data[k].contains("index") ? data[k].at("index").get<std::size_t>() : k;
      if (index >= texts.size() || seen[index]) throw ServiceError("POST " + url + ": bad embedding index");
      seen[index] = true;
      out[index] = data[k].at("embedding").get<std::vector<double>>();
      if (out[index].empty()) throw ServiceError("POST " + url + ": empty embedding");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ServiceError("POST " + url + ": malformed embeddings response (" + e.what() + ")");
  }
  for (const auto& v : out) {
    if (v.size() != out.front().size()) {
      throw ServiceError("POST " + url + ": embeddings of differing dimension in one response");
    }
  }
  return out;
}

}  // namespace semalign
