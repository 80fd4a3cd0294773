#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "semalign/profilegen/prompts.hpp"

namespace semalign {

enum class EntityKind { user, item };

std::string_view to_string(EntityKind kind);
EntityKind kind_from_string(std::string_view name);

/// A generated (or fallback) natural-language profile.
struct Profile {
  std::string id;
  EntityKind kind = EntityKind::item;
  std::string profile;    // non-empty
  std::string reasoning;  // non-empty
  std::string model;
  std::string fingerprint;

  bool operator==(const Profile&) const = default;
};

/// Hash of everything that determines a generation request.
std::string prompt_fingerprint(std::string_view model, const PromptPair& prompt);

/// Strict reply parsing: a JSON object with exactly the non-empty string
/// fields "reasoning" and "profile". Anything else yields nullopt.
struct ProfileReply {
  std::string reasoning;
  std::string profile;
};
std::optional<ProfileReply> parse_profile_reply(std::string_view content);

/// One object per line: {"id","kind","profile","reasoning","model","fp"}.
void write_profiles_jsonl(std::ostream& out, const std::vector<Profile>& profiles);
void write_profiles_jsonl(const std::filesystem::path& path, const std::vector<Profile>& profiles);
std::vector<Profile> parse_profiles_jsonl(std::istream& in);
std::vector<Profile> read_profiles_jsonl(const std::filesystem::path& path);

}  // namespace semalign
