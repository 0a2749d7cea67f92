#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#include "ssdas/kernels.hpp"

namespace ssdas::kernels {

const Backend* avx2_backend_table();  // defined in kernels_avx2.cpp

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const Backend* lookup(const char* name) {
  if (std::strcmp(name, "scalar") == 0) return &scalar_backend();
  if (std::strcmp(name, "avx2") == 0) return avx2_backend();
  return nullptr;
}

const Backend* g_forced = nullptr;

}  // namespace

const Backend* avx2_backend() {
  static const Backend* b = cpu_has_avx2() ? avx2_backend_table() : nullptr;
  return b;
}

const Backend& active_backend() {
  if (g_forced) return *g_forced;
  static const Backend* chosen = [] {
    if (const char* env = std::getenv("SSDAS_KERNEL")) {
      const Backend* b = lookup(env);
      if (!b)
        throw std::invalid_argument(std::string("SSDAS_KERNEL: unknown or unavailable backend '") +
                                    env + "'");
      return b;
    }
    if (const Backend* b = avx2_backend()) return b;
    return &scalar_backend();
  }();
  return *chosen;
}

void force_backend(const char* name) {
  const Backend* b = lookup(name);
  if (!b)
    throw std::invalid_argument(std::string("unknown or unavailable kernel backend '") + name + "'");
  g_forced = b;
}

std::vector<const Backend*> available_backends() {
  std::vector<const Backend*> v{&scalar_backend()};
  if (const Backend* b = avx2_backend()) v.push_back(b);
  return v;
}

}  // namespace ssdas::kernels
