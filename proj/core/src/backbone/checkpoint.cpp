#include "semalign/backbone/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "semalign/common/errors.hpp"

namespace semalign {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw DataError("checkpoint truncated in header");
  return v;
}

}  // namespace

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".ids.json");
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const EmbeddingTable& table, const IdMap& users,
                     const IdMap& items) {
  if (users.size() != table.num_users || items.size() != table.num_items) {
    throw DataError("checkpoint id maps do not match the embedding table");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write("RLMC", 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(table.dim()));
  put_u32(out, static_cast<std::uint32_t>(table.num_users));
  put_u32(out, static_cast<std::uint32_t>(table.num_items));
  std::vector<float> row(table.dim());
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) row[c] = static_cast<float>(table.values(r, c));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path.string());

  std::ofstream side(checkpoint_sidecar(path));
  if (!side) throw DataError("cannot write checkpoint sidecar for " + path.string());
  side << nlohmann::json{{"users", users.raws()}, {"items", items.raws()}}.dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (!in || std::memcmp(magic.data(), "RLMC", 4) != 0) throw DataError(path.string() + ": bad checkpoint magic");
  const auto version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto dim = get_u32(in);
  const auto nu = get_u32(in);
  const auto ni = get_u32(in);
  if (dim == 0) throw DataError(path.string() + ": zero embedding dimension");

  Checkpoint ck;
  ck.table.num_users = nu;
  ck.table.num_items = ni;
  ck.table.values.resize(static_cast<Eigen::Index>(nu) + ni + 1, dim);
  std::vector<float> row(dim);
  for (Eigen::Index r = 0; r < ck.table.values.rows(); ++r) {
    in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw DataError(path.string() + ": checkpoint truncated in table");
    for (Eigen::Index c = 0; c < ck.table.values.cols(); ++c) ck.table.values(r, c) = row[c];
  }

  std::ifstream side(checkpoint_sidecar(path));
  if (!side) throw DataError("missing checkpoint sidecar " + checkpoint_sidecar(path).string());
  nlohmann::json ids;
  try {
    ids = nlohmann::json::parse(side);
    ck.users = IdMap(ids.at("users").get<std::vector<std::string>>());
    ck.items = IdMap(ids.at("items").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(checkpoint_sidecar(path).string() + ": " + e.what());
  }
  if (ck.users.size() != nu || ck.items.size() != ni) {
    throw DataError(path.string() + ": sidecar id maps disagree with the table header");
  }
  return ck;
}

}  // namespace semalign
