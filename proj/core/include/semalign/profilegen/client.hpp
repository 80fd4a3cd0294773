#pragma once

#include <chrono>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "semalign/profilegen/profile.hpp"
#include "semalign/profilegen/prompts.hpp"

namespace semalign {

/// Settings for an OpenAI-compatible chat and embedding service.
struct ClientConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string chat_model = "gpt-3.5-turbo";
  std::string embedding_model = "text-embedding-ada-002";
  double temperature = 0.0;
  int retry_limit = 2;      // extra attempts after an unparseable reply
  int throttle_retries = 5;  // extra attempts after 429 / 5xx
  std::chrono::milliseconds backoff_initial{500};
  std::size_t concurrency = 4;
  std::size_t embed_batch_size = 64;
  std::chrono::seconds timeout{120};

  /// Overrides `base_url` and `api_key` from OPENAI_BASE_URL / OPENAI_API_KEY.
  void apply_environment();
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// POSTs JSON bodies relative to a base URL. Implementations must be safe to
/// call from several threads.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body) = 0;
  virtual std::string endpoint(const std::string& path) const = 0;
};

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(const ClientConfig& cfg);
  HttpResponse post(const std::string& path, const std::string& body) override;
  std::string endpoint(const std::string& path) const override;

 private:
  std::string origin_;  // scheme://host[:port]
  std::string prefix_;  // path below the origin, no trailing slash
  std::string api_key_;
  std::chrono::seconds timeout_;
};

/// POST with exponential backoff on 429 and 5xx. Any other non-2xx status,
/// or exhausting the backoff budget, raises ServiceError naming the endpoint.
HttpResponse post_json(Transport& transport, const std::string& path, const std::string& body,
                       const ClientConfig& cfg);

struct GenerationOutcome {
  std::optional<Profile> profile;
  int retries = 0;  // attempts after the first
  std::string error;
};

/// Appended to the user message when re-asking after an unparseable reply.
extern const char* const kCorrectiveSuffix;

/// Chat call with strict reply parsing and up to `cfg.retry_limit` corrective
/// retries. Service failures propagate as ServiceError.
GenerationOutcome generate_profile(const PromptPair& prompt, EntityKind kind, const std::string& id,
                                   const ClientConfig& cfg, Transport& transport);

/// One embeddings request; vectors are returned in input order.
std::vector<std::vector<double>> request_embeddings(const std::vector<std::string>& texts, const ClientConfig& cfg,
                                                    Transport& transport);

}  // namespace semalign
