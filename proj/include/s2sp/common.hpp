#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace s2sp {

// Error taxonomy. Everything thrown by the library derives from Error so
// callers (CLI, bindings) can catch one type.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape/dimension mismatches. Message always carries the offending shapes.
struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// NaN/Inf where finite values are required.
struct NumericError : Error {
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

// Caller violated a documented precondition.
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// Weight transplantation failures (dim or vocab mismatch).
struct TransferError : Error {
  explicit TransferError(const std::string& msg) : Error(msg) {}
};

// Divergence or other unrecoverable state inside a training loop.
struct TrainingError : Error {
  explicit TrainingError(const std::string& msg) : Error(msg) {}
};

// File format / serialization problems.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

// splitmix64 (Steele, Lea, Flood / Vigna). One 64-bit word of state, so the
// whole generator round-trips through checkpoints as a single integer.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // Uniform integer in [0, n). n must be positive.
  uint64_t below(uint64_t n) { return next_u64() % n; }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

  // Independent deterministic stream for a named sub-task.
  Rng fork(const std::string& tag) const;

 private:
  uint64_t state_;
};

// FNV-1a, used for config hashes, corpus file hashes and checkpoint digests.
inline uint64_t fnv1a64(const void* bytes, size_t len, uint64_t h = 0xCBF29CE484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ull;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s, uint64_t h = 0xCBF29CE484222325ull) {
  return fnv1a64(s.data(), s.size(), h);
}

// Keeps string literals away from the (void*, len) overload.
inline uint64_t fnv1a64(const char* s, uint64_t h = 0xCBF29CE484222325ull) {
  return fnv1a64(std::string(s), h);
}

inline Rng Rng::fork(const std::string& tag) const {
  return Rng(state_ ^ fnv1a64(tag));
}

std::string hex64(uint64_t v);

// Reads a UTF-8 text file into lines (strips trailing '\r'). Throws IoError.
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);

// Whitespace tokenization; the only pre-tokenization the repo does.
std::vector<std::string> split_ws(const std::string& s);
std::string join_ws(const std::vector<std::string>& tokens);

// Library version, embedded in reports.
const char* version_string();

}  // namespace s2sp
