#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace semalign {

/// Bidirectional raw-id <-> dense-index table. Indices are assigned in
/// first-interned order.
class IdMap {
 public:
  IdMap() = default;
  explicit IdMap(std::vector<std::string> raws);

  std::uint32_t intern(std::string_view raw);
  std::optional<std::uint32_t> find(std::string_view raw) const;
  const std::string& raw(std::uint32_t index) const { return raws_.at(index); }
  const std::vector<std::string>& raws() const { return raws_; }
  std::size_t size() const { return raws_.size(); }
  bool empty() const { return raws_.empty(); }

  friend bool operator==(const IdMap& a, const IdMap& b) { return a.raws_ == b.raws_; }

 private:
  std::vector<std::string> raws_;
  std::unordered_map<std::string, std::uint32_t> index_;
};

struct Interaction {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::optional<double> rating;
  std::optional<std::int64_t> timestamp;
  // Injected noise edge; never persisted.
  bool synthetic = false;
};

struct InteractionSet {
  IdMap users;
  IdMap items;
  std::vector<Interaction> edges;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }

  /// Sorted item indices per user.
  std::vector<std::vector<std::uint32_t>> items_by_user() const;
  /// Same id maps, no edges.
  InteractionSet empty_like() const;
};

enum class InteractionFormat { tsv, jsonl };

InteractionFormat format_from_path(const std::filesystem::path& path);

/// Parses interactions, drops ratings below `min_rating` (when ratings are
/// present) and collapses duplicate pairs keeping the latest timestamp.
InteractionSet parse_interactions(std::istream& in, InteractionFormat format,
                                  std::optional<double> min_rating = std::nullopt);
InteractionSet load_interactions(const std::filesystem::path& path, InteractionFormat format,
                                 std::optional<double> min_rating = std::nullopt);

/// Writes `user<TAB>item[<TAB>rating[<TAB>timestamp]]` lines using raw ids.
void write_interactions_tsv(std::ostream& out, const InteractionSet& set);
void write_interactions_tsv(const std::filesystem::path& path, const InteractionSet& set);

/// Iteratively removes users and items with fewer than k interactions.
InteractionSet kcore_filter(const InteractionSet& set, int k);

}  // namespace semalign
