#pragma once
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

namespace pdx {

// FNV-1a 64-bit, used for dataset fingerprints and artifact manifests.
class Fnv64 {
 public:
  Fnv64& update(const void* data, size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 1099511628211ull;
    }
    return *this;
  }
  template <typename T>
  Fnv64& update_pod(const T& v) {
    return update(&v, sizeof(T));
  }
  template <typename T>
  Fnv64& update_vec(const std::vector<T>& v) {
    update_pod<uint64_t>(v.size());
    return update(v.data(), v.size() * sizeof(T));
  }
  Fnv64& update_str(const std::string& s) {
    update_pod<uint64_t>(s.size());
    return update(s.data(), s.size());
  }
  uint64_t digest() const { return h_; }

 private:
  uint64_t h_ = 0xcbf29ce484222325ull;
};

inline uint64_t fnv64(const void* data, size_t n) { return Fnv64().update(data, n).digest(); }

inline std::string hex64(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace pdx
