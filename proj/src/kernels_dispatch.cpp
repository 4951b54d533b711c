#include "mer/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mer::kernels {

bool avx2_compiled() {
#ifdef MER_HAVE_AVX2_TU
  return true;
#else
  return false;
#endif
}

bool avx2_supported() {
#ifdef MER_HAVE_AVX2_TU
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

#ifndef MER_HAVE_AVX2_TU
const Ops& avx2_ops() {
  throw std::runtime_error("AVX2 kernels are not compiled into this build");
}
#endif

namespace {

struct Selection {
  const Ops* ops;
  std::string_view name;
};

Selection select() {
  if (const char* env = std::getenv("MER_KERNEL_BACKEND")) {
    const std::string v(env);
    if (v == "scalar") return {&scalar_ops(), "scalar"};
    if (v == "avx2") {
      if (!avx2_supported())
        throw std::runtime_error(
            "MER_KERNEL_BACKEND=avx2 requested but AVX2 is unavailable");
      return {&avx2_ops(), "avx2"};
    }
    throw std::runtime_error("unknown MER_KERNEL_BACKEND value: " + v);
  }
  if (avx2_supported()) return {&avx2_ops(), "avx2"};
  return {&scalar_ops(), "scalar"};
}

const Selection& selection() {
  static const Selection s = select();
  return s;
}

}  // namespace

const Ops& active() { return *selection().ops; }

std::string_view backend_name() { return selection().name; }

}  // namespace mer::kernels
