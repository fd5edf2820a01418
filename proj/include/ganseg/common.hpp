#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

namespace ganseg {

namespace fs = std::filesystem;

/// Configuration problem (bad value, unresolvable path). CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Failure inside a pipeline stage. CLI maps this to exit code 3.
struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// FNV-1a over raw bytes; used for config/checkpoint provenance hashes.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 14695981039346656037ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) { return fnv1a(s.data(), s.size()); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

/// Derives an independent RNG stream from a global seed and a stream id, so
/// per-image work can run in any order and still reproduce.
inline std::uint64_t derive_seed(std::uint64_t global_seed, const std::string& stream_id) {
  return fnv1a(stream_id.data(), stream_id.size(), global_seed ^ 0x9e3779b97f4a7c15ull);
}

/// Seeds torch and optionally forces single-threaded execution so repeated
/// runs produce bit-identical results.
inline void set_determinism(std::uint64_t seed, bool deterministic) {
  torch::manual_seed(seed);
  if (deterministic) {
    torch::set_num_threads(1);
  }
}

}  // namespace ganseg
