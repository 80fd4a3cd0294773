#include <gtest/gtest.h>

#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "semalign/common/errors.hpp"
#include "semalign/common/hashing.hpp"
#include "semalign/common/random.hpp"

namespace semalign {
namespace {

TEST(Hashing, MatchesPublishedSha256Vectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hashing, FileHashEqualsContentHash) {
  testing::TempDir dir("hash");
  {
    std::ofstream out(dir / "f.txt", std::ios::binary);
    out << "abc";
  }
  EXPECT_EQ(sha256_file(dir / "f.txt"), sha256_hex("abc"));
  EXPECT_THROW(sha256_file(dir / "missing"), DataError);
}

TEST(Random, DerivedStreamsAreStableAndDistinct) {
  EXPECT_EQ(derive_seed(7, "split"), derive_seed(7, "split"));
  std::set<std::uint64_t> seen;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    for (const char* tag : {"split", "noise", "init", "mask", "batch"}) seen.insert(derive_seed(seed, tag));
  }
  EXPECT_EQ(seen.size(), 250U);
}

TEST(Errors, CategoriesShareOneBase) {
  EXPECT_THROW(throw DataError("x"), Error);
  EXPECT_THROW(throw ServiceError("x"), Error);
  EXPECT_THROW(throw DivergenceError("x"), Error);
}

}  // namespace
}  // namespace semalign
