#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mscmt {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; all value mappings (uniform, gaussian,
// shuffle) are spelled out here instead of using std:: distributions, whose
// algorithms are implementation-defined and differ across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n), unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
    std::uint64_t rem = (~std::uint64_t{0} % n + 1) % n;  // 2^64 mod n
    std::uint64_t limit = ~std::uint64_t{0} - rem;        // last accepted value
    std::uint64_t x = next_u64();
    while (x > limit) x = next_u64();
    return x % n;
  }

  int uniform_int(int n) { return static_cast<int>(uniform_index(static_cast<std::uint64_t>(n))); }

  // Standard normal via Box-Muller, one spare cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Fisher-Yates; std::shuffle's draw pattern is unspecified, this one is not.
  template <typename RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      std::uint64_t j = uniform_index(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_ << ' ' << (has_spare_ ? 1 : 0) << ' ' << double_bits(spare_);
    return os.str();
  }

  void deserialize(const std::string& text) {
    std::istringstream is(text);
    int spare_flag = 0;
    std::uint64_t bits = 0;
    if (!(is >> eng_ >> spare_flag >> bits))
      throw std::runtime_error("Rng::deserialize: malformed state string");
    has_spare_ = spare_flag != 0;
    spare_ = bits_to_double(bits);
  }

 private:
  static std::uint64_t double_bits(double v) {
    std::uint64_t b;
    std::memcpy(&b, &v, sizeof b);
    return b;
  }
  static double bits_to_double(std::uint64_t b) {
    double v;
    std::memcpy(&v, &b, sizeof v);
    return v;
  }

  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace mscmt
