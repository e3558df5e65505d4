#include "gamlab/random.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <stdexcept>

namespace gamlab {

std::vector<std::uint32_t> bootstrap_counts(Rng& rng, std::size_t rows, std::size_t draws) {
  std::vector<std::uint32_t> counts(rows, 0);
  if (rows == 0) return counts;
  for (std::size_t i = 0; i < draws; ++i) ++counts[rng.index(rows)];
  return counts;
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

}  // namespace gamlab
