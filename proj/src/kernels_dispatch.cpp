#include "dsgsum/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dsgsum/common.hpp"

namespace dsgsum::kernels {

const Ops* avx2_ops_impl();  // kernels_avx2.cpp; null when not compiled in

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

struct Dispatch {
  const Ops* ops;
  const char* name;
};

Dispatch select() {
  const Ops* avx2 = avx2_ops_impl();
  const bool avx2_usable = avx2 != nullptr && cpu_has_avx2();
  const char* env = std::getenv("DSGSUM_KERNEL");
  std::string want = env != nullptr ? env : "";
  if (want == "scalar") return {&scalar_ops(), "scalar"};
  if (want == "avx2") {
    if (!avx2_usable) throw std::runtime_error("DSGSUM_KERNEL=avx2 but AVX2 is unavailable");
    return {avx2, "avx2"};
  }
  if (avx2_usable) return {avx2, "avx2"};
  return {&scalar_ops(), "scalar"};
}

Dispatch& dispatch() {
  static Dispatch d = select();
  return d;
}

}  // namespace

const Ops& ops() { return *dispatch().ops; }

const char* backend_name() { return dispatch().name; }

const Ops* avx2_ops_if_available() {
  const Ops* avx2 = avx2_ops_impl();
  return (avx2 != nullptr && cpu_has_avx2()) ? avx2 : nullptr;
}

void force_backend(const std::string& name) {
  if (name == "scalar") {
    dispatch() = {&scalar_ops(), "scalar"};
  } else if (name == "avx2") {
    const Ops* avx2 = avx2_ops_if_available();
    DSG_CHECK(avx2 != nullptr, "AVX2 backend unavailable on this machine");
    dispatch() = {avx2, "avx2"};
  } else {
    DSG_CHECK(false, "unknown kernel backend '" << name << "'");
  }
}

}  // namespace dsgsum::kernels
