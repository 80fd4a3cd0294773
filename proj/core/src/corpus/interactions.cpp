#include "semalign/corpus/interactions.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <utility>

#include "json.hpp"
#include "semalign/common/errors.hpp"

namespace semalign {

IdMap::IdMap(std::vector<std::string> raws) {
  for (auto& r : raws) {
    if (find(r)) throw DataError("duplicate id in id map: " + r);
    intern(r);
  }
}

std::uint32_t IdMap::intern(std::string_view raw) {
  auto it = index_.find(std::string(raw));
  if (it != index_.end()) return it->second;
  const auto idx = static_cast<std::uint32_t>(raws_.size());
  raws_.emplace_back(raw);
  index_.emplace(raws_.back(), idx);
  return idx;
}

std::optional<std::uint32_t> IdMap::find(std::string_view raw) const {
  auto it = index_.find(std::string(raw));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::vector<std::uint32_t>> InteractionSet::items_by_user() const {
  std::vector<std::vector<std::uint32_t>> out(num_users());
  for (const auto& e : edges) out[e.user].push_back(e.item);
  for (auto& v : out) std::sort(v.begin(), v.end());
  return out;
}

InteractionSet InteractionSet::empty_like() const {
  InteractionSet out;
  out.users = users;
  out.items = items;
  return out;
}

InteractionFormat format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".jsonl" || ext == ".json") return InteractionFormat::jsonl;
  return InteractionFormat::tsv;
}

namespace {

struct RawRecord {
  std::string user;
  std::string item;
  std::optional<double> rating;
  std::optional<std::int64_t> timestamp;
};

[[noreturn]] void fail_line(std::size_t line_no, const std::string& what) {
  throw DataError("line " + std::to_string(line_no) + ": " + what);
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    cols.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cols;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{} || ptr != end) return std::nullopt;
  return value;
}

RawRecord parse_tsv_line(std::string_view line, std::size_t line_no) {
  auto cols = split_tabs(line);
  if (cols.size() < 2 || cols.size() > 4) {
    fail_line(line_no, "expected 2-4 tab-separated columns, got " + std::to_string(cols.size()));
  }
  RawRecord r{std::string(cols[0]), std::string(cols[1]), std::nullopt, std::nullopt};
  if (r.user.empty() || r.item.empty()) fail_line(line_no, "empty user or item id");
  // An empty rating column means "no rating" so timestamps survive without one.
  if (cols.size() >= 3 && !cols[2].empty()) {
    r.rating = parse_number<double>(cols[2]);
    if (!r.rating) fail_line(line_no, "rating is not a number: '" + std::string(cols[2]) + "'");
  }
  if (cols.size() == 4) {
    r.timestamp = parse_number<std::int64_t>(cols[3]);
    if (!r.timestamp) fail_line(line_no, "timestamp is not an integer: '" + std::string(cols[3]) + "'");
  }
  return r;
}

RawRecord parse_jsonl_line(std::string_view line, std::size_t line_no) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    fail_line(line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail_line(line_no, "expected a JSON object");
  RawRecord r;
  auto user = j.find("user");
  auto item = j.find("item");
  if (user == j.end() || !user->is_string() || item == j.end() || !item->is_string()) {
    fail_line(line_no, "\"user\" and \"item\" must be strings");
  }
  r.user = user->get<std::string>();
  r.item = item->get<std::string>();
  if (r.user.empty() || r.item.empty()) fail_line(line_no, "empty user or item id");
  if (auto it = j.find("rating"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) fail_line(line_no, "\"rating\" must be a number");
    r.rating = it->get<double>();
  }
  if (auto it = j.find("ts"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) fail_line(line_no, "\"ts\" must be an integer");
    r.timestamp = it->get<std::int64_t>();
  }
  return r;
}

std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

bool is_blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return c == ' ' || c == '\t'; });
}

}  // namespace

InteractionSet parse_interactions(std::istream& in, InteractionFormat format, std::optional<double> min_rating) {
  std::vector<RawRecord> records;
  std::unordered_map<std::string, std::size_t> seen;  // "user\0item" -> record slot
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim_cr(line);
    if (is_blank(view)) continue;
    RawRecord r = format == InteractionFormat::tsv ? parse_tsv_line(view, line_no) : parse_jsonl_line(view, line_no);
    std::string key = r.user;
    key.push_back('\0');
    key += r.item;
    auto [it, inserted] = seen.emplace(std::move(key), records.size());
    if (inserted) {
      records.push_back(std::move(r));
      continue;
    }
    auto& kept = records[it->second];
    if (r.timestamp && (!kept.timestamp || *r.timestamp > *kept.timestamp)) {
      kept.rating = r.rating;
      kept.timestamp = r.timestamp;
    }
  }

  InteractionSet out;
  for (auto& r : records) {
    if (min_rating && r.rating && *r.rating < *min_rating) continue;
    Interaction e;
    e.user = out.users.intern(r.user);
    e.item = out.items.intern(r.item);
    e.rating = r.rating;
    e.timestamp = r.timestamp;
    out.edges.push_back(e);
  }
  if (out.edges.empty()) throw DataError("no interactions left after filtering");
  return out;
}

InteractionSet load_interactions(const std::filesystem::path& path, InteractionFormat format,
                                 std::optional<double> min_rating) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open interactions file " + path.string());
  try {
    return parse_interactions(in, format, min_rating);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_interactions_tsv(std::ostream& out, const InteractionSet& set) {
  for (const auto& e : set.edges) {
    if (e.synthetic) continue;
    out << set.users.raw(e.user) << '\t' << set.items.raw(e.item);
    if (e.rating || e.timestamp) {
      out << '\t';
      if (e.rating) {
        char buf[32];
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, *e.rating);
        out.write(buf, p - buf);
      }
    }
    if (e.timestamp) out << '\t' << *e.timestamp;
    out << '\n';
  }
}

void write_interactions_tsv(const std::filesystem::path& path, const InteractionSet& set) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_interactions_tsv(out, set);
}

InteractionSet kcore_filter(const InteractionSet& set, int k) {
  if (k < 1) throw DataError("k-core requires k >= 1");
  std::vector<bool> alive(set.edges.size(), true);
  std::vector<std::size_t> udeg(set.num_users(), 0), ideg(set.num_items(), 0);
  for (const auto& e : set.edges) {
    ++udeg[e.user];
    ++ideg[e.item];
  }
  const auto kk = static_cast<std::size_t>(k);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < set.edges.size(); ++i) {
      if (!alive[i]) continue;
      const auto& e = set.edges[i];
      if (udeg[e.user] < kk || ideg[e.item] < kk) {
        alive[i] = false;
        --udeg[e.user];
        --ideg[e.item];
        changed = true;
      }
    }
  }

  // Surviving entities keep their relative first-seen order.
  std::vector<std::int64_t> unew(set.num_users(), -1), inew(set.num_items(), -1);
  InteractionSet out;
  for (std::uint32_t u = 0; u < set.num_users(); ++u) {
    if (udeg[u] > 0) unew[u] = out.users.intern(set.users.raw(u));
  }
  for (std::uint32_t v = 0; v < set.num_items(); ++v) {
    if (ideg[v] > 0) inew[v] = out.items.intern(set.items.raw(v));
  }
  for (std::size_t i = 0; i < set.edges.size(); ++i) {
    if (!alive[i]) continue;
    Interaction e = set.edges[i];
    e.user = static_cast<std::uint32_t>(unew[e.user]);
    e.item = static_cast<std::uint32_t>(inew[e.item]);
    out.edges.push_back(e);
  }
  if (out.edges.empty()) throw DataError("k-core filtering with k=" + std::to_string(k) + " removed every interaction");
  return out;
}

}  // namespace semalign
