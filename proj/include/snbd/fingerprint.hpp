#pragma once

#include <bit>
#include <complex>
#include <cstdint>
#include <span>
#include <string_view>

namespace snbd {

// FNV-1a, 64 bit. Stable across platforms; used for run fingerprints and
// config hashes in manifests.
class Fnv1a {
 public:
  Fnv1a& bytes(std::span<const unsigned char> data) {
    for (unsigned char c : data) {
      state_ ^= c;
      state_ *= 0x100000001b3ull;
    }
    return *this;
  }
  Fnv1a& text(std::string_view s) {
    return bytes({reinterpret_cast<const unsigned char*>(s.data()), s.size()}).u64(s.size());
  }
  Fnv1a& u64(std::uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
    return bytes(buf);
  }
  Fnv1a& f64(double v) { return u64(std::bit_cast<std::uint64_t>(v)); }
  Fnv1a& c128(std::complex<double> z) { return f64(z.real()).f64(z.imag()); }

  std::uint64_t value() const noexcept { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

}  // namespace snbd
