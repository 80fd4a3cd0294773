#include "semalign/profilegen/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/hashing.hpp"

namespace semalign {

ServiceCache::ServiceCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_ / "profiles");
  std::filesystem::create_directories(dir_ / "embeddings");
}

namespace {

std::optional<nlohmann::json> read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // a torn or foreign file is a miss
  }
}

}  // namespace

std::optional<Profile> ServiceCache::find_profile(const std::string& fingerprint) const {
  const auto j = read_json_file(dir_ / "profiles" / (fingerprint + ".json"));
  if (!j) return std::nullopt;
  std::istringstream line(j->dump());
  auto parsed = parse_profiles_jsonl(line);
  if (parsed.size() != 1 || parsed[0].fingerprint != fingerprint) return std::nullopt;
  return parsed[0];
}

void ServiceCache::store_profile(const Profile& profile) {
  std::ostringstream out;
  write_profiles_jsonl(out, {profile});
  write_atomically(dir_ / "profiles" / (profile.fingerprint + ".json"), out.str());
}

std::optional<std::vector<double>> ServiceCache::find_embedding(const std::string& key) const {
  const auto j = read_json_file(dir_ / "embeddings" / (key + ".json"));
  if (!j || !j->is_array() || j->empty()) return std::nullopt;
  return j->get<std::vector<double>>();
}

void ServiceCache::store_embedding(const std::string& key, const std::vector<double>& vec) {
  write_atomically(dir_ / "embeddings" / (key + ".json"), nlohmann::json(vec).dump());
}

std::string ServiceCache::embedding_key(const std::string& model, const std::string& text) {
  return sha256_hex(model + "\n" + text);
}

void ServiceCache::write_atomically(const std::filesystem::path& path, const std::string& content) {
  std::lock_guard lock(mutex_);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write cache entry " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

std::size_t RunReport::count(EntityStatus status) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [status](const ReportEntry& e) { return e.status == status; }));
}

void RunReport::append(const RunReport& other) {
  entries.insert(entries.end(), other.entries.begin(), other.entries.end());
}

std::string RunReport::to_json() const {
  auto status_name = [](EntityStatus s) {
    switch (s) {
      case EntityStatus::succeeded:
        return "succeeded";
      case EntityStatus::failed:
        return "failed";
      case EntityStatus::cached:
        return "cached";
    }
    return "failed";
  };
  nlohmann::ordered_json j{{"succeeded", count(EntityStatus::succeeded)},
                           {"failed", count(EntityStatus::failed)},
                           {"cached", count(EntityStatus::cached)},
                           {"entities", nlohmann::ordered_json::array()}};
  for (const auto& e : entries) {
    nlohmann::ordered_json row{
        {"id", e.id}, {"kind", to_string(e.kind)}, {"status", status_name(e.status)}, {"retries", e.retries}};
    if (!e.error.empty()) row["error"] = e.error;
    j["entities"].push_back(std::move(row));
  }
  return j.dump(2);
}

std::vector<UserHistory> build_user_histories(const InteractionSet& train, const std::vector<ItemText>& items) {
  std::map<std::string, const ItemText*> by_id;
  for (const auto& item : items) by_id.emplace(item.id, &item);
  std::vector<UserHistory> out(train.users.size());
  for (std::uint32_t u = 0; u < train.users.size(); ++u) out[u].id = train.users.raw(u);
  const auto lists = train.items_by_user();
  for (std::uint32_t u = 0; u < lists.size(); ++u) {
    for (const auto v : lists[u]) {
      const auto& raw = train.items.raw(v);
      const auto it = by_id.find(raw);
      if (it == by_id.end()) throw DataError("no text for item '" + raw + "'");
      UserItem entry{raw, it->second->title, std::nullopt};
      for (const auto& review : it->second->reviews) {
        if (review.user == out[u].id) {
          entry.review = review.text;
          break;
        }
      }
      out[u].items.push_back(std::move(entry));
    }
  }
  return out;
}

std::string item_fallback_text(const ItemText& item) {
  std::string out = item.title;
  if (item.description) {
    out += ". " + *item.description;
  } else {
    for (const auto& [key, value] : item.attributes) out += ". " + key + ": " + value;
  }
  return out;
}

std::string user_fallback_text(const UserHistory& user, std::size_t max_items) {
  std::string out = "Interacted with:";
  const auto n = std::min(max_items, user.items.size());
  for (std::size_t i = 0; i < n; ++i) out += (i == 0 ? " " : "; ") + user.items[i].title;
  return out;
}

std::vector<ProfileJob> item_jobs(const std::vector<ItemText>& items, const PromptTemplates& templates,
                                  const PromptOptions& options, std::uint64_t seed) {
  std::vector<ProfileJob> jobs;
  jobs.reserve(items.size());
  for (const auto& item : items) {
    jobs.push_back({item.id, EntityKind::item, build_item_prompt(item, templates, options, seed),
                    item_fallback_text(item)});
  }
  return jobs;
}

std::vector<ProfileJob> user_jobs(const std::vector<UserHistory>& users,
                                  const std::map<std::string, std::string>& item_profiles,
                                  const PromptTemplates& templates, const PromptOptions& options, std::uint64_t seed) {
  std::vector<ProfileJob> jobs;
  jobs.reserve(users.size());
  for (const auto& user : users) {
    jobs.push_back({user.id, EntityKind::user, build_user_prompt(user, item_profiles, templates, options, seed),
                    user_fallback_text(user, options.max_items)});
  }
  return jobs;
}

ProfileBatch generate_profiles(const std::vector<ProfileJob>& jobs, const ClientConfig& cfg, Transport& transport,
                               ServiceCache* cache) {
  ProfileBatch out;
  out.profiles.resize(jobs.size());
  out.report.entries.resize(jobs.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const auto& job = jobs[i];
    auto& entry = out.report.entries[i];
    entry.id = job.id;
    entry.kind = job.kind;
    const auto fp = prompt_fingerprint(cfg.chat_model, job.prompt);
    if (auto hit = cache ? cache->find_profile(fp) : std::nullopt) {
      // Identical prompts share a cache entry; the identity is the job's.
      hit->id = job.id;
      hit->kind = job.kind;
      out.profiles[i] = std::move(*hit);
      entry.status = EntityStatus::cached;
    } else {
      pending.push_back(i);
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    while (!abort) {
      const auto k = next++;
      if (k >= pending.size()) return;
      const auto i = pending[k];
      const auto& job = jobs[i];
      auto& entry = out.report.entries[i];
      try {
        auto outcome = generate_profile(job.prompt, job.kind, job.id, cfg, transport);
        entry.retries = outcome.retries;
        if (outcome.profile) {
          if (cache) cache->store_profile(*outcome.profile);
          out.profiles[i] = std::move(*outcome.profile);
          entry.status = EntityStatus::succeeded;
        } else {
          out.profiles[i] = Profile{job.id, job.kind, job.fallback, "fallback: " + outcome.error, "fallback",
                                    prompt_fingerprint(cfg.chat_model, job.prompt)};
          entry.status = EntityStatus::failed;
          entry.error = outcome.error;
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        abort = true;
      }
    }
  };
  const auto threads = std::min(std::max<std::size_t>(cfg.concurrency, 1), pending.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) std::rethrow_exception(first_error);
  return out;
}

SemanticStore embed_profiles(const std::vector<Profile>& profiles, const IdMap& users, const IdMap& items,
                             const ClientConfig& cfg, Transport& transport, ServiceCache* cache, EmbedStats* stats) {
  if (cfg.embed_batch_size == 0) throw DataError("embedding batch size must be positive");
  std::map<std::pair<EntityKind, std::string>, const Profile*> by_entity;
  for (const auto& p : profiles) by_entity[{p.kind, p.id}] = &p;

  struct Target {
    EntityKind kind;
    std::string id;
    std::string text;
  };
  std::vector<Target> targets;
  for (const auto* map : {&users, &items}) {
    const auto kind = map == &users ? EntityKind::user : EntityKind::item;
    for (const auto& id : map->raws()) {
      const auto it = by_entity.find({kind, id});
      if (it == by_entity.end()) throw DataError("no profile for " + std::string(to_string(kind)) + " '" + id + "'");
      targets.push_back({kind, id, it->second->profile});
    }
  }

  EmbedStats local;
  std::vector<std::vector<double>> vectors(targets.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto key = ServiceCache::embedding_key(cfg.embedding_model, targets[i].text);
    if (auto hit = cache ? cache->find_embedding(key) : std::nullopt) {
      vectors[i] = std::move(*hit);
      ++local.cached;
    } else {
      pending.push_back(i);
    }
  }
  for (std::size_t start = 0; start < pending.size(); start += cfg.embed_batch_size) {
    const auto end = std::min(pending.size(), start + cfg.embed_batch_size);
    std::vector<std::string> texts;
    for (auto k = start; k < end; ++k) texts.push_back(targets[pending[k]].text);
    auto batch = request_embeddings(texts, cfg, transport);
    ++local.requests;
    for (auto k = start; k < end; ++k) {
      const auto i = pending[k];
      vectors[i] = std::move(batch[k - start]);
      if (cache) cache->store_embedding(ServiceCache::embedding_key(cfg.embedding_model, targets[i].text), vectors[i]);
    }
  }

  const auto dim = targets.empty() ? std::size_t{0} : vectors.front().size();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (vectors[i].size() != dim) {
      throw ServiceError("embedding dimension drift: expected " + std::to_string(dim) + ", got " +
                         std::to_string(vectors[i].size()) + " for " + std::string(to_string(targets[i].kind)) +
                         " '" + targets[i].id + "'");
    }
  }

  SemanticStore store;
  store.user_ids = users;
  store.item_ids = items;
  const auto d = static_cast<Eigen::Index>(dim);
  store.users.resize(static_cast<Eigen::Index>(users.size()), d);
  store.items.resize(static_cast<Eigen::Index>(items.size()), d);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const bool is_user = i < users.size();
    auto row = is_user ? store.users.row(static_cast<Eigen::Index>(i))
                       : store.items.row(static_cast<Eigen::Index>(i - users.size()));
    for (Eigen::Index c = 0; c < d; ++c) {
      row(c) = static_cast<double>(static_cast<float>(vectors[i][static_cast<std::size_t>(c)]));
    }
  }
  store.provenance.model = cfg.embedding_model;
  if (stats) *stats = local;
  return store;
}

}  // namespace semalign
