#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace osmid {

// FNV-1a, stable across runs and platforms with the same endianness.
// Used for parameter freeze contracts and dataset digests.
class Digest {
 public:
  Digest& update(const void* bytes, size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ull;
    }
    return *this;
  }
  Digest& update(const std::string& s) { return update(s.data(), s.size()); }
  Digest& update(const std::vector<double>& v) {
    return update(v.data(), v.size() * sizeof(double));
  }
  Digest& update(uint64_t v) { return update(&v, sizeof(v)); }
  Digest& update(int v) { return update(&v, sizeof(v)); }
  Digest& update(double v) { return update(&v, sizeof(v)); }

  uint64_t value() const { return h_; }
  std::string hex() const {
    static const char* k = "0123456789abcdef";
    std::string s(16, '0');
    uint64_t v = h_;
    for (int i = 15; i >= 0; --i) {
      s[static_cast<size_t>(i)] = k[v & 0xf];
      v >>= 4;
    }
    return s;
  }

 private:
  uint64_t h_ = 0xcbf29ce484222325ull;
};

}  // namespace osmid
