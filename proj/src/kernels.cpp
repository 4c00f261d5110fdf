#include "cgr/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <stdexcept>

namespace cgr::kern {

namespace {

void s_gemm_nn(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      const double* brow = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void s_gemm_nt(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = b + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] = accumulate ? crow[j] + acc : acc;
    }
  }
}

void s_gemm_tn(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double apv = arow[p];
      double* crow = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += apv * brow[j];
    }
  }
}

void s_add(double* out, const double* a, const double* b, int n) {
  for (int i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
void s_sub(double* out, const double* a, const double* b, int n) {
  for (int i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
void s_mul(double* out, const double* a, const double* b, int n) {
  for (int i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
void s_scale(double* out, const double* x, double alpha, int n) {
  for (int i = 0; i < n; ++i) out[i] = x[i] * alpha;
}
void s_axpy(double* y, double alpha, const double* x, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}
double s_dot(const double* a, const double* b, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
double s_sum(const double* x, int n) {
  double acc = 0.0;
  for (int i = 0; i < n; ++i) acc += x[i];
  return acc;
}
double s_max(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

constexpr Backend kScalar = {
    "scalar",  s_gemm_nn, s_gemm_nt, s_gemm_tn, s_add, s_sub,
    s_mul,     s_scale,   s_axpy,    s_dot,     s_sum, s_max,
};

std::atomic<const Backend*> g_active{nullptr};

bool simd_runtime_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#elif defined(__aarch64__)
  return true;  // NEON is mandatory on aarch64
#else
  return false;
#endif
}

}  // namespace

namespace detail {
const Backend* simd_table();
}

const Backend& scalar_backend() { return kScalar; }

const Backend* simd_backend() {
  static const Backend* const b = [] {
    const Backend* t = detail::simd_table();
    return (t != nullptr && simd_runtime_supported()) ? t : nullptr;
  }();
  return b;
}

const Backend& active() {
  const Backend* b = g_active.load(std::memory_order_acquire);
  if (b == nullptr) {
    b = simd_backend();
    if (b == nullptr) b = &kScalar;
    g_active.store(b, std::memory_order_release);
  }
  return *b;
}

void set_active(const std::string& name) {
  if (name == "scalar") {
    g_active.store(&kScalar, std::memory_order_release);
    return;
  }
  if (name == "auto") {
    const Backend* b = simd_backend();
    g_active.store(b != nullptr ? b : &kScalar, std::memory_order_release);
    return;
  }
  const Backend* simd = simd_backend();
  if (simd != nullptr && name == simd->name) {
    g_active.store(simd, std::memory_order_release);
    return;
  }
  throw std::invalid_argument("unknown kernel backend: " + name);
}

}  // namespace cgr::kern
