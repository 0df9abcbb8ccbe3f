#include "tap/core/hash.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>

#include "tap/core/errors.hpp"

namespace tap {

void Fnv1a::update(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h_ ^= p[i];
    h_ *= 1099511628211ull;
  }
}

void Fnv1a::update(std::span<const double> values) {
  update(values.data(), values.size_bytes());
}

std::string Fnv1a::hex() const { return to_hex(h_); }

std::uint64_t fnv1a(std::string_view bytes) {
  Fnv1a h;
  h.update(bytes);
  return h.digest();
}

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for hashing: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return to_hex(fnv1a(bytes));
}

}  // namespace tap
