// SIMD kernel variants. This translation unit is compiled with the target
// feature flags (-mavx2 -mfma on x86-64); callers must gate on
// kern::detail::simd_runtime_supported() before executing anything from the
// table, which is why CPU detection lives in kernels.cpp instead.
#include "cgr/kernels.hpp"

#include <algorithm>
#include <cstddef>

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#define CGR_SIMD_AVX2 1
#elif defined(__aarch64__)
#include <arm_neon.h>
#define CGR_SIMD_NEON 1
#endif

namespace cgr::kern {
namespace detail {
const Backend* simd_table();
}

#if defined(CGR_SIMD_AVX2)

namespace {

void v_gemm_nn(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      const __m256d va = _mm256_set1_pd(aip);
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d vc = _mm256_loadu_pd(crow + j);
        vc = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), vc);
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

double v_dot(const double* a, const double* b, int n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  int i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double acc = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void v_gemm_nt(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double v = v_dot(arow, b + static_cast<std::size_t>(j) * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

void v_gemm_tn(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double apv = arow[p];
      if (apv == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(p) * n;
      const __m256d va = _mm256_set1_pd(apv);
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        __m256d vc = _mm256_loadu_pd(crow + j);
        vc = _mm256_fmadd_pd(va, _mm256_loadu_pd(brow + j), vc);
        _mm256_storeu_pd(crow + j, vc);
      }
      for (; j < n; ++j) crow[j] += apv * brow[j];
    }
  }
}

void v_add(double* out, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(double* out, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(double* out, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_scale(double* out, const double* x, double alpha, int n) {
  const __m256d va = _mm256_set1_pd(alpha);
  int i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), va));
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

void v_axpy(double* y, double alpha, const double* x, int n) {
  const __m256d va = _mm256_set1_pd(alpha);
  int i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double v_sum(const double* x, int n) {
  __m256d acc = _mm256_setzero_pd();
  int i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double s = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) s += x[i];
  return s;
}

double v_max(const double* x, int n) {
  double m = x[0];
  int i = 0;
  if (n >= 4) {
    __m256d vm = _mm256_loadu_pd(x);
    for (i = 4; i + 4 <= n; i += 4)
      vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, vm);
    m = std::max(std::max(lanes[0], lanes[1]), std::max(lanes[2], lanes[3]));
  }
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

constexpr Backend kAvx2 = {
    "avx2",  v_gemm_nn, v_gemm_nt, v_gemm_tn, v_add, v_sub,
    v_mul,   v_scale,   v_axpy,    v_dot,     v_sum, v_max,
};

}  // namespace

const Backend* detail::simd_table() { return &kAvx2; }

#elif defined(CGR_SIMD_NEON)

namespace {

double v_dot(const double* a, const double* b, int n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int i = 0;
  for (; i + 2 <= n; i += 2)
    acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void v_gemm_nn(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    double* crow = c + static_cast<std::size_t>(i) * n;
    if (!accumulate) std::fill(crow, crow + n, 0.0);
    for (int p = 0; p < k; ++p) {
      const double aip = a[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + static_cast<std::size_t>(p) * n;
      const float64x2_t va = vdupq_n_f64(aip);
      int j = 0;
      for (; j + 2 <= n; j += 2)
        vst1q_f64(crow + j, vfmaq_f64(vld1q_f64(crow + j), va, vld1q_f64(brow + j)));
      for (; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void v_gemm_nt(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double v = v_dot(arow, b + static_cast<std::size_t>(j) * k, k);
      crow[j] = accumulate ? crow[j] + v : v;
    }
  }
}

void v_gemm_tn(double* c, const double* a, const double* b, int m, int k,
               int n, bool accumulate) {
  if (!accumulate) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* brow = b + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double apv = arow[p];
      if (apv == 0.0) continue;
      double* crow = c + static_cast<std::size_t>(p) * n;
      const float64x2_t va = vdupq_n_f64(apv);
      int j = 0;
      for (; j + 2 <= n; j += 2)
        vst1q_f64(crow + j, vfmaq_f64(vld1q_f64(crow + j), va, vld1q_f64(brow + j)));
      for (; j < n; ++j) crow[j] += apv * brow[j];
    }
  }
}

void v_add(double* out, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] + b[i];
}

void v_sub(double* out, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] - b[i];
}

void v_mul(double* out, const double* a, const double* b, int n) {
  int i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) out[i] = a[i] * b[i];
}

void v_scale(double* out, const double* x, double alpha, int n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  int i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), va));
  for (; i < n; ++i) out[i] = x[i] * alpha;
}

void v_axpy(double* y, double alpha, const double* x, int n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  int i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double v_sum(const double* x, int n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  int i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double v_max(const double* x, int n) {
  double m = x[0];
  int i = 0;
  if (n >= 2) {
    float64x2_t vm = vld1q_f64(x);
    for (i = 2; i + 2 <= n; i += 2) vm = vmaxq_f64(vm, vld1q_f64(x + i));
    m = vmaxvq_f64(vm);
  }
  for (; i < n; ++i) m = std::max(m, x[i]);
  return m;
}

constexpr Backend kNeon = {
    "neon",  v_gemm_nn, v_gemm_nt, v_gemm_tn, v_add, v_sub,
    v_mul,   v_scale,   v_axpy,    v_dot,     v_sum, v_max,
};

}  // namespace

const Backend* detail::simd_table() { return &kNeon; }

#else

const Backend* detail::simd_table() { return nullptr; }

#endif

}  // namespace cgr::kern
