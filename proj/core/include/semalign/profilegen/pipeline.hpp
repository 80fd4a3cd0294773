#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "semalign/align/semantic_store.hpp"
#include "semalign/profilegen/client.hpp"
#include "semalign/profilegen/profile.hpp"
#include "semalign/profilegen/prompts.hpp"

namespace semalign {

/// On-disk cache of profiles (keyed by prompt fingerprint) and embeddings
/// (keyed by model and input text). Writes are serialized.
class ServiceCache {
 public:
  explicit ServiceCache(std::filesystem::path dir);

  std::optional<Profile> find_profile(const std::string& fingerprint) const;
  void store_profile(const Profile& profile);
  std::optional<std::vector<double>> find_embedding(const std::string& key) const;
  void store_embedding(const std::string& key, const std::vector<double>& vec);

  static std::string embedding_key(const std::string& model, const std::string& text);

 private:
  void write_atomically(const std::filesystem::path& path, const std::string& content);

  std::filesystem::path dir_;
  std::mutex mutex_;
};

enum class EntityStatus { succeeded, failed, cached };

struct ReportEntry {
  std::string id;
  EntityKind kind = EntityKind::item;
  EntityStatus status = EntityStatus::succeeded;
  int retries = 0;
  std::string error;
};

/// One entry per processed entity.
struct RunReport {
  std::vector<ReportEntry> entries;

  std::size_t count(EntityStatus status) const;
  void append(const RunReport& other);
  std::string to_json() const;
};

/// Everything needed to generate one profile.
struct ProfileJob {
  std::string id;
  EntityKind kind = EntityKind::item;
  PromptPair prompt;
  std::string fallback;  // profile text used when generation fails
};

struct ProfileBatch {
  std::vector<Profile> profiles;  // same order as the jobs; failures hold fallbacks
  RunReport report;
};

std::vector<ProfileJob> item_jobs(const std::vector<ItemText>& items, const PromptTemplates& templates,
                                  const PromptOptions& options, std::uint64_t seed);

/// `item_profiles` maps item id to profile text; see build_user_prompt.
std::vector<ProfileJob> user_jobs(const std::vector<UserHistory>& users,
                                  const std::map<std::string, std::string>& item_profiles,
                                  const PromptTemplates& templates, const PromptOptions& options, std::uint64_t seed);

/// Interaction histories of every user in `train`, in user index order. The
/// user's review of an item is taken from that item's reviews. Every item in
/// `train` needs an entry in `items`.
std::vector<UserHistory> build_user_histories(const InteractionSet& train, const std::vector<ItemText>& items);

/// Deterministic stand-ins built from raw text.
std::string item_fallback_text(const ItemText& item);
std::string user_fallback_text(const UserHistory& user, std::size_t max_items);

/// Runs the jobs with at most `cfg.concurrency` requests in flight. Cache hits
/// skip the service. The first ServiceError aborts the batch and is rethrown.
ProfileBatch generate_profiles(const std::vector<ProfileJob>& jobs, const ClientConfig& cfg, Transport& transport,
                               ServiceCache* cache = nullptr);

struct EmbedStats {
  std::size_t requests = 0;
  std::size_t cached = 0;
};

/// Embeds the profile of every listed user and item, `cfg.embed_batch_size`
/// texts per request. The dimension is whatever the service returns.
SemanticStore embed_profiles(const std::vector<Profile>& profiles, const IdMap& users, const IdMap& items,
                             const ClientConfig& cfg, Transport& transport, ServiceCache* cache = nullptr,
                             EmbedStats* stats = nullptr);

}  // namespace semalign
