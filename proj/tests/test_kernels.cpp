#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cgr/kernels.hpp"
#include "cgr/rng.hpp"

using cgr::Rng;
namespace kern = cgr::kern;

namespace {

std::vector<double> random_vec(Rng& rng, int n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b,
                 double tol = 1e-12) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1.0});
    CHECK(std::abs(a[i] - b[i]) / denom <= tol);
  }
}

}  // namespace

TEST_CASE("scalar gemm_nn matches hand results") {
  const auto& K = kern::scalar_backend();
  // identity * M = M
  std::vector<double> id = {1, 0, 0, 1};
  std::vector<double> m = {3, -1, 2, 5};
  std::vector<double> c(4);
  K.gemm_nn(c.data(), id.data(), m.data(), 2, 2, 2, false);
  check_close(c, m, 0.0);

  // [[1,2],[3,4]] x [[1],[1]] = [[3],[7]]
  std::vector<double> a = {1, 2, 3, 4};
  std::vector<double> b = {1, 1};
  std::vector<double> r(2);
  K.gemm_nn(r.data(), a.data(), b.data(), 2, 2, 1, false);
  CHECK(r[0] == doctest::Approx(3.0));
  CHECK(r[1] == doctest::Approx(7.0));

  // zero * M = zero
  std::vector<double> z(4, 0.0), zc(4, 7.0);
  K.gemm_nn(zc.data(), z.data(), m.data(), 2, 2, 2, false);
  for (double v : zc) CHECK(v == 0.0);
}

TEST_CASE("gemm variants agree with gemm_nn on explicit transposes") {
  Rng rng(7);
  const auto& K = kern::scalar_backend();
  const int m = 5, k = 4, n = 3;
  auto a = random_vec(rng, m * k);
  auto b = random_vec(rng, k * n);

  std::vector<double> c_ref(m * n);
  K.gemm_nn(c_ref.data(), a.data(), b.data(), m, k, n, false);

  // nt: feed b transposed
  std::vector<double> bt(n * k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < n; ++j) bt[j * k + i] = b[i * n + j];
  std::vector<double> c_nt(m * n);
  K.gemm_nt(c_nt.data(), a.data(), bt.data(), m, k, n, false);
  check_close(c_nt, c_ref);

  // tn: feed a transposed
  std::vector<double> at(k * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < k; ++j) at[j * m + i] = a[i * k + j];
  std::vector<double> c_tn(m * n);
  K.gemm_tn(c_tn.data(), at.data(), b.data(), k, m, n, false);
  check_close(c_tn, c_ref);
}

TEST_CASE("SIMD backend matches scalar reference") {
  const kern::Backend* simd = kern::simd_backend();
  if (simd == nullptr) {
    MESSAGE("no SIMD backend on this CPU; skipping equivalence checks");
    return;
  }
  const auto& S = kern::scalar_backend();
  Rng rng(11);

  for (int trial = 0; trial < 20; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(1, 17));
    const int k = static_cast<int>(rng.uniform_int(1, 19));
    const int n = static_cast<int>(rng.uniform_int(1, 23));
    auto a = random_vec(rng, m * k);
    auto b = random_vec(rng, k * n);
    auto bt = random_vec(rng, n * k);
    auto c0 = random_vec(rng, m * n);

    for (bool acc : {false, true}) {
      std::vector<double> cs = c0, cv = c0;
      S.gemm_nn(cs.data(), a.data(), b.data(), m, k, n, acc);
      simd->gemm_nn(cv.data(), a.data(), b.data(), m, k, n, acc);
      check_close(cs, cv);

      cs = c0;
      cv = c0;
      S.gemm_nt(cs.data(), a.data(), bt.data(), m, k, n, acc);
      simd->gemm_nt(cv.data(), a.data(), bt.data(), m, k, n, acc);
      check_close(cs, cv);

      auto bb = random_vec(rng, m * n);
      std::vector<double> ds(static_cast<std::size_t>(k) * n, 0.5);
      std::vector<double> dv = ds;
      S.gemm_tn(ds.data(), a.data(), bb.data(), m, k, n, acc);
      simd->gemm_tn(dv.data(), a.data(), bb.data(), m, k, n, acc);
      check_close(ds, dv);
    }

    const int len = static_cast<int>(rng.uniform_int(1, 70));
    auto x = random_vec(rng, len);
    auto y = random_vec(rng, len);
    std::vector<double> os(len), ov(len);

    S.add(os.data(), x.data(), y.data(), len);
    simd->add(ov.data(), x.data(), y.data(), len);
    check_close(os, ov, 0.0);

    S.sub(os.data(), x.data(), y.data(), len);
    simd->sub(ov.data(), x.data(), y.data(), len);
    check_close(os, ov, 0.0);

    S.mul(os.data(), x.data(), y.data(), len);
    simd->mul(ov.data(), x.data(), y.data(), len);
    check_close(os, ov, 0.0);

    S.scale(os.data(), x.data(), 1.7, len);
    simd->scale(ov.data(), x.data(), 1.7, len);
    check_close(os, ov, 0.0);

    os = y;
    ov = y;
    S.axpy(os.data(), -0.3, x.data(), len);
    simd->axpy(ov.data(), -0.3, x.data(), len);
    check_close(os, ov);

    CHECK(std::abs(S.dot(x.data(), y.data(), len) - simd->dot(x.data(), y.data(), len)) <= 1e-12);
    CHECK(std::abs(S.sum(x.data(), len) - simd->sum(x.data(), len)) <= 1e-12);
    CHECK(S.max(x.data(), len) == simd->max(x.data(), len));
  }
}

TEST_CASE("backend selection") {
  kern::set_active("scalar");
  CHECK(std::string(kern::active().name) == "scalar");
  kern::set_active("auto");
  if (kern::simd_backend() != nullptr) {
    CHECK(std::string(kern::active().name) == std::string(kern::simd_backend()->name));
  } else {
    CHECK(std::string(kern::active().name) == "scalar");
  }
  CHECK_THROWS_AS(kern::set_active("gpu"), std::invalid_argument);
  kern::set_active("auto");
}
