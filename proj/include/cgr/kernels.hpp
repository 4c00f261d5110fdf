#pragma once

#include <string>

// Dense double-precision inner loops behind the tensor ops. Every kernel has
// a scalar reference implementation; SIMD variants (AVX2/FMA on x86-64, NEON
// on aarch64) are selected at runtime and must agree with the reference to
// tight tolerance (see tests/test_kernels.cpp).
namespace cgr::kern {

struct Backend {
  const char* name;

  // c[m,n] = a[m,k] * b[k,n]            (+= when accumulate)
  void (*gemm_nn)(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate);
  // c[m,n] = a[m,k] * b[n,k]^T
  void (*gemm_nt)(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate);
  // c[k,n] = a[m,k]^T * b[m,n]
  void (*gemm_tn)(double* c, const double* a, const double* b, int m, int k,
                  int n, bool accumulate);

  void (*add)(double* out, const double* a, const double* b, int n);
  void (*sub)(double* out, const double* a, const double* b, int n);
  void (*mul)(double* out, const double* a, const double* b, int n);
  void (*scale)(double* out, const double* x, double alpha, int n);
  void (*axpy)(double* y, double alpha, const double* x, int n);  // y += a*x
  double (*dot)(const double* a, const double* b, int n);
  double (*sum)(const double* x, int n);
  double (*max)(const double* x, int n);  // n >= 1
};

const Backend& scalar_backend();

// Best SIMD backend the running CPU supports, or nullptr.
const Backend* simd_backend();

// Active backend: SIMD when available unless overridden. `set_active` accepts
// "auto", "scalar" or the SIMD backend's name; unknown names throw.
const Backend& active();
void set_active(const std::string& name);

}  // namespace cgr::kern
