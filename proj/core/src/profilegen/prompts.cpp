#include "semalign/profilegen/prompts.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/random.hpp"

namespace semalign {
namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open prompt template " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string substitute(std::string text, std::string_view key, std::string_view value) {
  const std::string token = "{{" + std::string(key) + "}}";
  for (auto pos = text.find(token); pos != std::string::npos; pos = text.find(token, pos + value.size())) {
    text.replace(pos, token.size(), value);
  }
  return text;
}

// A prompt body made of fixed labels and truncatable free-text blocks.
class Layout {
 public:
  void fixed(std::string_view text) { add(text, false); }
  void block(std::string_view text) { add(text, true); }

  std::string render(std::size_t budget) const {
    std::size_t overhead = 0;
    std::vector<std::size_t> lengths;
    for (const auto& p : parts_) {
      if (p.truncatable) {
        lengths.push_back(utf8_length(p.text));
      } else {
        overhead += utf8_length(p.text);
      }
    }
    if (overhead > budget) {
      throw DataError("prompt scaffolding alone exceeds the character budget of " + std::to_string(budget));
    }
    const auto cap = water_fill_cap(lengths, budget - overhead);
    std::string out;
    for (const auto& p : parts_) {
      out += p.truncatable && cap ? utf8_prefix(p.text, *cap) : std::string_view(p.text);
    }
    return out;
  }

 private:
  void add(std::string_view text, bool truncatable) {
    auto& part = parts_.emplace_back();
    part.text.assign(text);
    part.truncatable = truncatable;
  }

  struct Part {
    std::string text;
    bool truncatable = false;
  };
  std::vector<Part> parts_;
};

// k of n indices, uniformly without replacement, returned in ascending order.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed, std::string_view entity,
                                        std::string_view purpose) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= n) return idx;
  auto rng = make_rng(derive_seed(seed, entity), purpose);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<ItemText> parse_item_texts(std::istream& in) {
  std::vector<ItemText> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::ordered_json::parse(line);
      ItemText item;
      item.id = j.at("id").get<std::string>();
      item.title = j.at("title").get<std::string>();
      if (item.id.empty() || item.title.empty()) throw DataError("id and title must be non-empty");
      if (const auto d = j.find("description"); d != j.end() && !d->is_null()) {
        item.description = d->get<std::string>();
      }
      if (const auto a = j.find("attributes"); a != j.end() && !a->is_null()) {
        for (const auto& [key, value] : a->items()) {
          item.attributes.emplace_back(key, value.is_string() ? value.get<std::string>() : value.dump());
        }
      }
      if (const auto r = j.find("reviews"); r != j.end() && !r->is_null()) {
        for (const auto& review : *r) {
          item.reviews.push_back({review.value("user", std::string()), review.at("text").get<std::string>()});
        }
      }
      out.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("line " + std::to_string(n) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ItemText> read_item_texts(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return parse_item_texts(in);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir, std::string_view version) {
  PromptTemplates t;
  t.version = std::string(version);
  t.item_system = read_text(dir / ("item_system." + t.version + ".txt"));
  t.user_system = read_text(dir / ("user_system." + t.version + ".txt"));
  return t;
}

std::size_t utf8_length(std::string_view text) {
  return static_cast<std::size_t>(
      std::count_if(text.begin(), text.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

std::string_view utf8_prefix(std::string_view text, std::size_t max_code_points) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if ((static_cast<unsigned char>(text[i]) & 0xC0) != 0x80) {
      if (seen == max_code_points) return text.substr(0, i);
      ++seen;
    }
  }
  return text;
}

std::optional<std::size_t> water_fill_cap(const std::vector<std::size_t>& lengths, std::size_t available) {
  const auto total = std::accumulate(lengths.begin(), lengths.end(), std::size_t{0});
  if (total <= available) return std::nullopt;
  auto sorted = lengths;
  std::sort(sorted.begin(), sorted.end());
  std::size_t remaining = available;
  std::size_t open = sorted.size();
  for (const auto len : sorted) {
    if (len * open > remaining) break;
    remaining -= len;
    --open;
  }
  // open > 0 here because total > available.
  return remaining / open;
}

PromptPair build_item_prompt(const ItemText& item, const PromptTemplates& templates, const PromptOptions& options,
                             std::uint64_t seed) {
  if (item.title.empty()) throw DataError("item '" + item.id + "' has an empty title");
  Layout body;
  body.fixed("Title: ");
  body.block(item.title);
  body.fixed("\n");
  if (item.description) {
    body.fixed("Description: ");
    body.block(*item.description);
    body.fixed("\n");
  } else {
    if (item.attributes.empty() && item.reviews.empty()) {
      throw DataError("item '" + item.id + "' has no description, attributes or reviews to summarize");
    }
    if (!item.attributes.empty()) {
      body.fixed("Attributes:\n");
      for (const auto& [key, value] : item.attributes) {
        body.fixed("- " + key + ": ");
        body.block(value);
        body.fixed("\n");
      }
    }
    if (!item.reviews.empty()) {
      body.fixed("Reviews:\n");
      const auto picked = sample_indices(item.reviews.size(), options.max_reviews, seed, item.id, "review-sample");
      for (const auto i : picked) {
        body.fixed("- ");
        body.block(item.reviews[i].text);
        body.fixed("\n");
      }
    }
  }
  return {substitute(templates.item_system, "item_noun", options.item_noun), body.render(options.char_budget)};
}

PromptPair build_user_prompt(const UserHistory& user, const std::map<std::string, std::string>& item_profiles,
                             const PromptTemplates& templates, const PromptOptions& options, std::uint64_t seed) {
  if (user.items.empty()) throw DataError("user '" + user.id + "' has no interactions");
  const auto picked = sample_indices(user.items.size(), options.max_items, seed, user.id, "item-sample");
  Layout body;
  std::size_t n = 0;
  for (const auto i : picked) {
    const auto& entry = user.items[i];
    const auto profile = item_profiles.find(entry.item_id);
    if (profile == item_profiles.end()) {
      throw DataError("user '" + user.id + "': item '" + entry.item_id +
                      "' has no profile yet; item profiles must be generated before user profiles");
    }
    if (n > 0) body.fixed("\n");
    body.fixed("[" + std::to_string(++n) + "]\nTitle: ");
    body.block(entry.title);
    body.fixed("\nProfile: ");
    body.block(profile->second);
    body.fixed("\n");
    if (entry.review) {
      body.fixed("Review: ");
      body.block(*entry.review);
      body.fixed("\n");
    }
  }
  return {substitute(templates.user_system, "item_noun", options.item_noun), body.render(options.char_budget)};
}

}  // namespace semalign
