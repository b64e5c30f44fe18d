#include <cstdlib>
#include <string>

#include "eccd/simd/kernels.hpp"

namespace eccd::simd {

namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(ECCD_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(ECCD_HAVE_NEON)
      return true;  // mandatory on AArch64
#else
      return false;
#endif
  }
  return false;
}

KernelTable select_default() {
  if (const char* env = std::getenv("ECCD_SIMD"); env != nullptr) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa)) {
        if (auto t = kernels_for(isa)) return *t;
      }
    }
  }
  for (Isa isa : {Isa::avx2, Isa::neon}) {
    if (auto t = kernels_for(isa)) return *t;
  }
  return detail::scalar_table();
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

std::optional<KernelTable> kernels_for(Isa isa) {
  if (!cpu_supports(isa)) return std::nullopt;
  switch (isa) {
    case Isa::scalar:
      return detail::scalar_table();
    case Isa::avx2:
#if defined(ECCD_HAVE_AVX2)
      return detail::avx2_table();
#else
      break;
#endif
    case Isa::neon:
#if defined(ECCD_HAVE_NEON)
      return detail::neon_table();
#else
      break;
#endif
  }
  return std::nullopt;
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon})
    if (kernels_for(isa)) out.push_back(isa);
  return out;
}

const KernelTable& kernels() {
  static const KernelTable table = select_default();
  return table;
}

}  // namespace eccd::simd
