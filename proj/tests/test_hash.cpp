#include <gtest/gtest.h>

#include "nggirt/hash.hpp"
#include "test_support.hpp"

namespace nggirt {
namespace {

TEST(Hash, Sha1KnownVectors) {
  EXPECT_EQ(sha1_hex(""), "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  EXPECT_EQ(sha1_hex("abc"), "a9993e364706816aba3e25717850c26c9cd0d89d");
}

TEST(Hash, GitBlobHashMatchesGit) {
  testing::TempDir dir("hash");
  testing::spit(dir / "f.txt", "hello\n");
  // git hash-object of "hello\n"
  EXPECT_EQ(git_blob_sha1(dir / "f.txt"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

}  // namespace
}  // namespace nggirt
