#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace semalign {

struct Review {
  std::string user;
  std::string text;
};

/// Raw text attached to an item.
struct ItemText {
  std::string id;
  std::string title;  // non-empty
  std::optional<std::string> description;
  std::vector<std::pair<std::string, std::string>> attributes;
  std::vector<Review> reviews;
};

/// One interacted item as seen from a user.
struct UserItem {
  std::string item_id;
  std::string title;
  std::optional<std::string> review;  // this user's review of the item
};

struct UserHistory {
  std::string id;
  std::vector<UserItem> items;
};

/// One object per line: {"id": str, "title": str, "description": str?,
/// "attributes": {str: str}?, "reviews": [{"user": str, "text": str}]?}.
/// Attribute order follows the file.
std::vector<ItemText> parse_item_texts(std::istream& in);
std::vector<ItemText> read_item_texts(const std::filesystem::path& path);

struct PromptPair {
  std::string system;
  std::string user;
};

/// System prompt templates. `{{item_noun}}` is substituted on use.
struct PromptTemplates {
  std::string version;
  std::string item_system;
  std::string user_system;

  /// Reads `item_system.<version>.txt` and `user_system.<version>.txt`.
  static PromptTemplates load(const std::filesystem::path& dir, std::string_view version = "v1");
};

struct PromptOptions {
  std::size_t max_reviews = 10;
  std::size_t max_items = 10;
  std::size_t char_budget = 6000;  // code points in the user prompt
  std::string item_noun = "item";
};

/// Description present: title and description only. Otherwise title,
/// attributes and at most `max_reviews` reviews sampled per (item id, seed).
PromptPair build_item_prompt(const ItemText& item, const PromptTemplates& templates, const PromptOptions& options,
                             std::uint64_t seed);

/// One block per sampled item: title, the item's generated profile, and the
/// user's review when present. Every sampled item must already have a profile.
PromptPair build_user_prompt(const UserHistory& user, const std::map<std::string, std::string>& item_profiles,
                             const PromptTemplates& templates, const PromptOptions& options, std::uint64_t seed);

std::size_t utf8_length(std::string_view text);

/// Longest prefix of at most `max_code_points` code points.
std::string_view utf8_prefix(std::string_view text, std::size_t max_code_points);

/// Largest per-block cap c such that the blocks truncated to c fit in
/// `available` code points. Returns nullopt when no truncation is needed.
std::optional<std::size_t> water_fill_cap(const std::vector<std::size_t>& lengths, std::size_t available);

}  // namespace semalign
