#include "gamlab/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <string_view>

namespace gamlab {

std::size_t configured_threads(std::size_t fallback) {
  const char* env = std::getenv("GAMLAB_THREADS");
  if (env == nullptr) return std::max<std::size_t>(fallback, 1);
  std::string_view text(env);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value == 0) return std::max<std::size_t>(fallback, 1);
  return value;
}

}  // namespace gamlab
