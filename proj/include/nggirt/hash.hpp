#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace nggirt {

/// Lowercase hex SHA-1 of a byte string.
std::string sha1_hex(std::string_view bytes);

/// Hash git assigns to a file's contents ("blob <size>\0" + bytes), so the
/// manifest can be checked with `git hash-object`.
std::string git_blob_sha1(const std::filesystem::path& path);

}  // namespace nggirt
