#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace tap {

// 64-bit FNV-1a. Used for content hashes of manifests, reports, headers and
// parameter sets; not a cryptographic hash.
class Fnv1a {
 public:
  void update(const void* data, std::size_t len);
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update(std::span<const double> values);
  std::uint64_t digest() const { return h_; }
  std::string hex() const;

 private:
  std::uint64_t h_ = 14695981039346656037ull;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string to_hex(std::uint64_t value);
std::string hash_file(const std::string& path);

}  // namespace tap
