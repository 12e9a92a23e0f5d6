#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace hicl {

using json = nlohmann::json;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a 64-bit. Used for cache keys and content-change detection, not security.
inline constexpr uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr uint64_t kFnvPrime = 1099511628211ULL;

inline uint64_t fnv1a64(std::string_view s, uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string to_hex(uint64_t v);

std::string trim(std::string_view s);
std::string lowercase(std::string_view s);

// Deterministic RNG. mt19937_64 supplies the bits; the derived draws
// (bounded ints, uniforms, gaussians, shuffles) are implemented here so the
// stream does not depend on the standard library's distribution internals.
class DetRng {
 public:
  explicit DetRng(uint64_t seed) : eng_(seed) {}

  uint64_t next_u64() { return eng_(); }

  // Uniform integer in [0, n), rejection-sampled to avoid modulo bias.
  uint64_t uniform(uint64_t n);

  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform(i)]);
    }
  }

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

uint64_t file_content_hash(const std::filesystem::path& path);

// Calls fn(line_number, line) for every non-empty line; line numbers are 1-based.
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(int, const std::string&)>& fn);

// Little-endian encoding helpers for the binary cache/checkpoint formats.
void append_u32_le(std::string& out, uint32_t v);
void append_f64_le(std::string& out, double v);
uint32_t read_u32_le(std::string_view buf, size_t& pos);
double read_f64_le(std::string_view buf, size_t& pos);
std::string read_sized_string(std::string_view buf, size_t& pos);
void append_sized_string(std::string& out, std::string_view s);

}  // namespace hicl
