#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "cgr/gradcheck.hpp"
#include "cgr/ops.hpp"
#include "cgr/rng.hpp"
#include "cgr/tensor.hpp"

using namespace cgr;

namespace {

Tensor random_tensor(Rng& rng, std::vector<int> shape, bool req = true,
                     double lo = -2.0, double hi = 2.0) {
  std::size_t n = 1;
  for (int e : shape) n *= static_cast<std::size_t>(e);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v), req);
}

}  // namespace

TEST_CASE("matmul hand cases") {
  Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor m = Tensor::from({2, 2}, {3.5, -1, 2, 0.25});
  Tensor r = matmul(id, m);
  for (int i = 0; i < 4; ++i) CHECK(r.data()[i] == m.data()[i]);

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {1, 1});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(1, 0) == 7.0);

  Tensor z = Tensor::zeros({2, 2});
  Tensor zr = matmul(z, m);
  for (int i = 0; i < 4; ++i) CHECK(zr.data()[i] == 0.0);

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                  std::invalid_argument);
}

TEST_CASE("softmax slices") {
  Tensor u = Tensor::from({3}, {0, 0, 0});
  Tensor su = softmax(u, 0);
  for (int i = 0; i < 3; ++i) CHECK(su.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor l = Tensor::from({3}, {std::log(1.0), std::log(2.0), std::log(3.0)});
  Tensor sl = softmax(l, 0);
  CHECK(sl.at(0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(sl.at(1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(sl.at(2) == doctest::Approx(3.0 / 6).epsilon(1e-12));

  Tensor one = Tensor::from({1}, {42.0});
  CHECK(softmax(one, 0).at(0) == 1.0);

  // property: slices sum to 1 within 1e-9 for inputs in [-50, 50], both axes
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = random_tensor(rng, {static_cast<int>(rng.uniform_int(1, 6)),
                                   static_cast<int>(rng.uniform_int(1, 6))},
                             false, -50.0, 50.0);
    for (int axis : {0, 1}) {
      Tensor s = softmax(x, axis);
      const int slices = axis == 1 ? s.rows() : s.cols();
      for (int i = 0; i < slices; ++i) {
        double acc = 0.0;
        const int len = axis == 1 ? s.cols() : s.rows();
        for (int j = 0; j < len; ++j) acc += axis == 1 ? s.at(i, j) : s.at(j, i);
        CHECK(std::abs(acc - 1.0) <= 1e-9);
        for (int j = 0; j < len; ++j)
          CHECK((axis == 1 ? s.at(i, j) : s.at(j, i)) >= 0.0);
      }
    }
  }
}

TEST_CASE("scaled_dot_attention hand cases") {
  // single key: every output row equals the single v row
  Tensor q = Tensor::from({3, 2}, {1, 2, -1, 0, 4, 4});
  Tensor k1 = Tensor::from({1, 2}, {0.3, -0.7});
  Tensor v1 = Tensor::from({1, 2}, {5, -3});
  Tensor o = scaled_dot_attention(q, k1, v1);
  for (int i = 0; i < 3; ++i) {
    CHECK(o.at(i, 0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(o.at(i, 1) == doctest::Approx(-3.0).epsilon(1e-12));
  }

  // saturated attention picks the argmax key: softmax at +-1e4/sqrt(2)
  Tensor big = Tensor::from({2, 2}, {100, 0, 0, 100});
  Tensor sat = scaled_dot_attention(big, big, big);
  CHECK(sat.at(0, 0) == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(sat.at(0, 1) == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(sat.at(1, 1) == doctest::Approx(100.0).epsilon(1e-9));

  // zero queries: uniform attention averages v rows
  Tensor zq = Tensor::zeros({2, 3});
  Tensor k = Tensor::from({2, 3}, {1, 0, 0, 0, 1, 0});
  Tensor v = Tensor::from({2, 2}, {2, 4, 6, 8});
  Tensor zo = scaled_dot_attention(zq, k, v);
  CHECK(zo.at(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(zo.at(0, 1) == doctest::Approx(6.0).epsilon(1e-12));

  CHECK_THROWS_AS(scaled_dot_attention(Tensor::zeros({2, 3}), Tensor::zeros({2, 4}),
                                       Tensor::zeros({2, 4})),
                  std::invalid_argument);
}

TEST_CASE("attention is permutation-equivariant in query rows") {
  Rng rng(5);
  Tensor q = random_tensor(rng, {5, 3}, false);
  Tensor k = random_tensor(rng, {4, 3}, false);
  Tensor v = random_tensor(rng, {4, 2}, false);
  Tensor base = scaled_dot_attention(q, k, v);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  Tensor qp = gather_rows(q, perm);
  Tensor pout = scaled_dot_attention(qp, k, v);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 2; ++j) CHECK(pout.at(i, j) == base.at(perm[i], j));
}

TEST_CASE("gather_rows") {
  Tensor x = Tensor::from({3, 2}, {0, 1, 10, 11, 20, 21});
  Tensor all = gather_rows(x, {0, 1, 2});
  for (int i = 0; i < 6; ++i) CHECK(all.data()[i] == x.data()[i]);

  Tensor swapped = gather_rows(x, {2, 0});
  CHECK(swapped.at(0, 0) == 20.0);
  CHECK(swapped.at(1, 0) == 0.0);

  CHECK_THROWS_AS(gather_rows(x, {3}), std::invalid_argument);

  // duplicate index: backward adds both gradient rows into the source row
  Tensor xr = Tensor::from({3, 2}, {0, 1, 10, 11, 20, 21}, true);
  auto f = [&]() { return sum_all(gather_rows(xr, {1, 1})); };
  auto report = grad_check(f, {{"x", xr}});
  CHECK(report.pass);
  CHECK(report.max_rel_err <= 1e-7);
  // gradient mass conservation
  xr.zero_grad();
  backward(f());
  CHECK(xr.grad_at(1, 0) == 2.0);
  CHECK(xr.grad_at(1, 1) == 2.0);
  CHECK(xr.grad_at(0, 0) == 0.0);
}

TEST_CASE("topk_indices") {
  Tensor s = Tensor::from({3}, {0.1, 0.9, 0.5});
  CHECK(topk_indices(s, 2) == std::vector<int>{1, 2});
  CHECK(topk_indices(s, 3) == std::vector<int>{1, 2, 0});

  Tensor ties = Tensor::from({4}, {7, 7, 7, 7});
  CHECK(topk_indices(ties, 2) == std::vector<int>{0, 1});

  CHECK_THROWS_AS(topk_indices(s, 4), std::invalid_argument);
  CHECK_THROWS_AS(topk_indices(s, 0), std::invalid_argument);
}

TEST_CASE("rowmax values and tie gradient") {
  Tensor id3 = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor m1 = rowmax(id3);
  for (int i = 0; i < 3; ++i) CHECK(m1.at(i) == 1.0);

  Tensor x = Tensor::from({2, 2}, {1, 5, 7, 2});
  Tensor m2 = rowmax(x);
  CHECK(m2.at(0) == 5.0);
  CHECK(m2.at(1) == 7.0);

  Tensor tie = Tensor::from({1, 2}, {3, 3}, true);
  Tensor mt = rowmax(tie);
  CHECK(mt.at(0) == 3.0);
  backward(sum_all(mt));
  CHECK(tie.grad_at(0, 0) == 1.0);  // first index wins the tie
  CHECK(tie.grad_at(0, 1) == 0.0);
}

TEST_CASE("concat_rows and split round trip") {
  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor b = Tensor::from({1, 2}, {3, 4});
  Tensor c = concat_rows(a, b);
  CHECK(c.rows() == 2);
  CHECK(c.at(0, 1) == 2.0);
  CHECK(c.at(1, 0) == 3.0);

  Tensor empty = Tensor::zeros({0, 2});
  Tensor ce = concat_rows(a, empty);
  CHECK(ce.rows() == 1);
  CHECK(ce.at(0, 0) == 1.0);

  // split after concat round-trips
  Tensor back_a = gather_rows(c, {0});
  Tensor back_b = gather_rows(c, {1});
  CHECK(back_a.at(0, 0) == a.at(0, 0));
  CHECK(back_b.at(0, 1) == b.at(0, 1));

  CHECK_THROWS_AS(concat_rows(a, Tensor::zeros({1, 3})), std::invalid_argument);
}

TEST_CASE("backward basics") {
  // y = x (leaf): gradient 1
  Tensor x0 = Tensor::scalar(3.0, true);
  backward(x0);
  CHECK(x0.grad_at(0) == 1.0);

  // y = sum(x*x) at x=[1,2]: grad [2,4]
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = sum_all(mul(x, x));
  backward(y);
  CHECK(x.grad_at(0) == 2.0);
  CHECK(x.grad_at(1) == 4.0);

  // unreachable tensor keeps no gradient
  Tensor unused = Tensor::from({2}, {5, 5}, true);
  CHECK_FALSE(unused.has_grad());

  CHECK_THROWS_AS(backward(Tensor::zeros({2}, true)), std::invalid_argument);
}

TEST_CASE("grad_check on a quadratic form is tight") {
  Rng rng(17);
  Tensor x = random_tensor(rng, {4}, true);
  Tensor a = random_tensor(rng, {4}, false);
  auto f = [&]() {
    Tensor ax = mul(a, x);
    return sum_all(mul(ax, x));
  };
  auto report = grad_check(f, {{"x", x}});
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-7);
}

TEST_CASE("grad_check flags a constant function and non-finite values") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  auto constant = [&]() { return sum_all(mul(x, Tensor::zeros({3}))); };
  auto report = grad_check(constant, {{"x", x}});
  CHECK(report.pass);
  CHECK(report.max_rel_err == 0.0);

  auto bad = [&]() { return scale(div(Tensor::scalar(1.0), sum_all(scale(x, 0.0))), 1.0); };
  auto bad_report = grad_check(bad, {{"x", x}});
  CHECK_FALSE(bad_report.pass);
  CHECK_FALSE(bad_report.all_finite);
}

TEST_CASE("grad_check across every differentiable op at random points") {
  Rng rng(23);
  const double tol = 1e-4;
  for (int trial = 0; trial < 10; ++trial) {
    const int m = static_cast<int>(rng.uniform_int(1, 4));
    const int k = static_cast<int>(rng.uniform_int(1, 4));
    const int n = static_cast<int>(rng.uniform_int(1, 4));
    Tensor a = random_tensor(rng, {m, k});
    Tensor b = random_tensor(rng, {m, k});
    Tensor w = random_tensor(rng, {k, n});
    Tensor pos = random_tensor(rng, {m, k}, true, 0.5, 2.0);
    Tensor far = random_tensor(rng, {m, k}, true, 0.2, 2.0);  // away from relu/abs kinks
    Tensor v = random_tensor(rng, {1, k});
    Tensor gmm = random_tensor(rng, {1, k}, true, 0.5, 1.5);
    Tensor bta = random_tensor(rng, {1, k});
    std::vector<std::pair<std::string, Tensor>> pts = {
        {"a", a}, {"b", b}, {"w", w}, {"pos", pos}, {"far", far},
        {"v", v}, {"gamma", gmm}, {"beta", bta}};

    auto run = [&](const char* name, std::function<Tensor()> f) {
      auto rep = grad_check(f, pts, 1e-5, tol);
      INFO(name, " worst=", rep.worst, " rel=", rep.max_rel_err);
      CHECK(rep.pass);
    };

    run("add", [&] { return sum_all(mul(add(a, b), b)); });
    run("sub", [&] { return sum_all(mul(sub(a, b), a)); });
    run("mul", [&] { return sum_all(mul(mul(a, b), a)); });
    run("div", [&] { return sum_all(div(a, pos)); });
    run("min", [&] { return sum_all(mul(minimum(a, b), b)); });
    run("max", [&] { return sum_all(mul(maximum(a, b), a)); });
    run("scale", [&] { return sum_all(scale(a, -1.7)); });
    run("add_scalar", [&] { return sum_all(mul(add_scalar(a, 0.3), a)); });
    run("relu", [&] { return sum_all(mul(relu(far), b)); });
    run("sigmoid", [&] { return sum_all(mul(sigmoid(a), b)); });
    run("softplus", [&] { return sum_all(mul(softplus(a), b)); });
    run("abs", [&] { return sum_all(mul(abs_val(far), b)); });
    run("pow", [&] { return sum_all(pow_scalar(pos, 1.7)); });
    run("matmul", [&] { return sum_all(mul(matmul(a, w), matmul(b, w))); });
    run("transpose", [&] { return sum_all(mul(transpose(a), transpose(b))); });
    run("softmax_rows", [&] { return sum_all(mul(softmax(a, 1), b)); });
    run("softmax_cols", [&] { return sum_all(mul(softmax(a, 0), b)); });
    run("attention", [&] {
      return sum_all(scaled_dot_attention(a, b, mul(b, b)));
    });
    run("gather", [&] { return sum_all(mul(gather_rows(a, {0, 0}), gather_rows(b, {0, 0}))); });
    run("rowmax", [&] { return sum_all(rowmax(far)); });
    run("concat_rows", [&] { return sum_all(mul(concat_rows(a, b), concat_rows(b, a))); });
    run("concat_cols", [&] { return sum_all(mul(concat_cols(a, b), concat_cols(b, a))); });
    run("slice_cols", [&] { return sum_all(slice_cols(mul(a, b), 0, k)); });
    run("mean_all", [&] { return mean_all(mul(a, a)); });
    run("mean_rows", [&] { return sum_all(mul(mean_rows(a), mean_rows(b))); });
    run("add_rowvec", [&] { return sum_all(mul(add_rowvec(a, v), b)); });
    run("mul_rowvec", [&] { return sum_all(mul(mul_rowvec(a, v), b)); });
    run("scale_rows", [&] {
      std::vector<double> f(m, 0.0);
      for (int i = 0; i < m; ++i) f[i] = 0.5 + i;
      return sum_all(mul(scale_rows(a, f), b));
    });
    run("layer_norm", [&] {
      return sum_all(mul(layer_norm_rows(a, gmm, bta), b));
    });
  }
}

TEST_CASE("gather_rows conserves gradient mass") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = static_cast<int>(rng.uniform_int(2, 6));
    const int d = static_cast<int>(rng.uniform_int(1, 4));
    const int k = static_cast<int>(rng.uniform_int(1, 8));
    Tensor x = random_tensor(rng, {n, d});
    std::vector<int> idx(k);
    for (auto& i : idx) i = static_cast<int>(rng.uniform_int(0, n - 1));
    Tensor w = random_tensor(rng, {k, d}, false);
    Tensor y = sum_all(mul(gather_rows(x, idx), w));
    x.zero_grad();
    backward(y);
    double incoming = 0.0, scattered = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) incoming += w.data()[i];
    for (std::size_t i = 0; i < x.size(); ++i) scattered += x.grad()[i];
    CHECK(scattered == doctest::Approx(incoming).epsilon(1e-12));
  }
}

TEST_CASE("stop_grad blocks the path") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  Tensor y = sum_all(mul(stop_grad(x), x));
  backward(y);
  // d/dx (c * x) = c = values of x
  CHECK(x.grad_at(0) == 1.0);
  CHECK(x.grad_at(1) == 2.0);
}

TEST_CASE("topk routing stays margin-safe under grad_check") {
  // selection fixed by a wide margin: perturbation of 1e-5 cannot flip it
  Tensor x = Tensor::from({4, 2}, {10, 10, 0.1, 0.1, 5, 5, 0.2, 0.2}, true);
  auto f = [&]() {
    Tensor scores = rowmax(x);
    auto idx = topk_indices(scores, 2);
    return sum_all(mul(gather_rows(x, idx), gather_rows(x, idx)));
  };
  auto rep = grad_check(f, {{"x", x}});
  CHECK(rep.pass);
}
