#include "trapnet/parallel.hpp"

#include <cstdlib>
#include <string>

namespace trapnet {

std::size_t default_thread_count() {
  if (const char* env = std::getenv("TRAPNET_THREADS"); env != nullptr && *env != '\0') {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      // Unparseable values fall back to the hardware count.
    }
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

}  // namespace trapnet
