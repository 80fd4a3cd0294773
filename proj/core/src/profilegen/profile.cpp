#include "semalign/profilegen/profile.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/hashing.hpp"

namespace semalign {

std::string_view to_string(EntityKind kind) { return kind == EntityKind::user ? "user" : "item"; }

EntityKind kind_from_string(std::string_view name) {
  if (name == "user") return EntityKind::user;
  if (name == "item") return EntityKind::item;
  throw DataError("unknown entity kind '" + std::string(name) + "' (expected user or item)");
}

std::string prompt_fingerprint(std::string_view model, const PromptPair& prompt) {
  std::string key;
  key.reserve(model.size() + prompt.system.size() + prompt.user.size() + 2);
  key.append(model).append(1, '\n').append(prompt.system).append(1, '\n').append(prompt.user);
  return sha256_hex(key);
}

std::optional<ProfileReply> parse_profile_reply(std::string_view content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::parse_error&) {
    return std::nullopt;
  }
  if (!j.is_object() || j.size() != 2) return std::nullopt;
  const auto r = j.find("reasoning");
  const auto p = j.find("profile");
  if (r == j.end() || p == j.end() || !r->is_string() || !p->is_string()) return std::nullopt;
  ProfileReply out{r->get<std::string>(), p->get<std::string>()};
  if (out.reasoning.empty() || out.profile.empty()) return std::nullopt;
  return out;
}

void write_profiles_jsonl(std::ostream& out, const std::vector<Profile>& profiles) {
  for (const auto& p : profiles) {
    const nlohmann::ordered_json j{{"id", p.id},         {"kind", to_string(p.kind)}, {"profile", p.profile},
                                   {"reasoning", p.reasoning}, {"model", p.model},        {"fp", p.fingerprint}};
    out << j.dump() << '\n';
  }
}

void write_profiles_jsonl(const std::filesystem::path& path, const std::vector<Profile>& profiles) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_profiles_jsonl(out, profiles);
}

std::vector<Profile> parse_profiles_jsonl(std::istream& in) {
  std::vector<Profile> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Profile p;
      p.id = j.at("id").get<std::string>();
      p.kind = kind_from_string(j.at("kind").get<std::string>());
      p.profile = j.at("profile").get<std::string>();
      p.reasoning = j.at("reasoning").get<std::string>();
      p.model = j.at("model").get<std::string>();
      p.fingerprint = j.at("fp").get<std::string>();
      if (p.id.empty() || p.profile.empty() || p.reasoning.empty()) {
        throw DataError("id, profile and reasoning must be non-empty");
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(n) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Profile> read_profiles_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return parse_profiles_jsonl(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace semalign
