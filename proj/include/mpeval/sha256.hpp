#pragma once

#include <string>
#include <string_view>

namespace mpeval {

/// SHA-256 digest of `data`, returned as a 64-char lowercase hex string.
/// Content-addressed storage (cassette keys, dataset digests) relies on this
/// being stable across processes and platforms.
std::string sha256_hex(std::string_view data);

}  // namespace mpeval
