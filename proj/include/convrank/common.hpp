#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace convrank {

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

// Exit-code mapping used by the CLI: ConfigError -> 1, DataError -> 2,
// NumericError -> 3.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : DataError {
  ParseError(std::uint64_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_number(line) {}
  std::uint64_t line_number;
};

struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Stable hashing. FNV-1a, fixed parameters; used for split assignment and
// vocabulary fingerprints, so the values are part of the file contract.
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t fnv1a64_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xff;
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(s);
}

// Deterministic RNG. All randomness in the pipeline flows from an explicit
// seed (possibly mixed with a stable per-post or per-pool counter) through
// this generator, never from std:: distributions, so outputs are
// bit-reproducible across builds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() { return splitmix64(state_); }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw NumericError("Rng::below(0)");
    std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double real() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * real(); }

 private:
  std::uint64_t state_;
};

// ---------------------------------------------------------------------------
// Binary file container. Every binary artifact starts with the magic "CVRK",
// a u16 format version, and a u16 payload kind. Little-endian throughout.
// ---------------------------------------------------------------------------

inline constexpr char kMagic[4] = {'C', 'V', 'R', 'K'};
inline constexpr std::uint16_t kFormatVersion = 1;

enum class FileKind : std::uint16_t {
  trees = 1,
  examples = 2,
  vocabulary = 3,
  checkpoint = 4,
  user_vector = 5,
};

class BinWriter {
 public:
  explicit BinWriter(std::ostream& out) : out_(out) {}

  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), std::streamsize(n));
    if (!out_) throw DataError("write failed");
  }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void i64(std::int64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void str(std::string_view s) {
    u32(std::uint32_t(s.size()));
    bytes(s.data(), s.size());
  }
  void header(FileKind kind) {
    bytes(kMagic, 4);
    u16(kFormatVersion);
    u16(std::uint16_t(kind));
  }

 private:
  std::ostream& out_;
};

class BinReader {
 public:
  explicit BinReader(std::istream& in) : in_(in) {}

  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in_.gcount()) != n) throw DataError("unexpected end of file");
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint16_t u16() { std::uint16_t v; bytes(&v, 2); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, 4); return v; }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, 8); return v; }
  std::int64_t i64() { std::int64_t v; bytes(&v, 8); return v; }
  float f32() { float v; bytes(&v, 4); return v; }
  std::string str() {
    std::uint32_t n = u32();
    std::string s(n, '\0');
    if (n) bytes(s.data(), n);
    return s;
  }
  void expect_header(FileKind kind) {
    char magic[4];
    bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("bad magic, not a CVRK file");
    std::uint16_t version = u16();
    if (version != kFormatVersion)
      throw DataError("unsupported format version " + std::to_string(version));
    std::uint16_t k = u16();
    if (k != std::uint16_t(kind))
      throw DataError("wrong file kind " + std::to_string(k));
  }
  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

 private:
  std::istream& in_;
};

}  // namespace convrank
