#include "cgr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "cgr/kernels.hpp"

namespace cgr {

namespace {

using detail::accumulate_grad;
using detail::shape_str;

bool track(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void require_rank2(const Tensor& t, const char* op) {
  require(t.rank() == 2, std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                      shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor make_out(std::vector<int> shape, bool req) {
  return Tensor::zeros(std::move(shape), req);
}

void attach(Tensor& out, std::vector<Tensor> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->parents = std::move(parents);
  n->out_shape = out.shape();
  n->out_values = out.values_ptr();
  n->out_grad = out.grad_slot();
  n->backward = std::move(bw);
  out.set_node(std::move(n));
}

// shared skeleton for binary elementwise ops whose partials depend only on
// the inputs
template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, Bwd partials) {
  require_same_shape(a, b, name);
  const std::size_t n = a.size();
  Tensor out = make_out(a.shape(), track(a) || track(b));
  fwd(out.data(), a.data(), b.data(), n);
  if (out.requires_grad()) {
    attach(out, {a, b}, [partials](Node& nd) {
      const Tensor& pa = nd.parents[0];
      const Tensor& pb = nd.parents[1];
      const double* g = nd.out_grad->g.data();
      const std::size_t m = nd.out_grad->g.size();
      std::vector<double> da(m), db(m);
      partials(da.data(), db.data(), pa.data(), pb.data(), g, m);
      accumulate_grad(pa, da.data(), m);
      accumulate_grad(pb, db.data(), m);
    });
  }
  return out;
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Bwd bwd) {
  const std::size_t n = x.size();
  Tensor out = make_out(x.shape(), track(x));
  fwd(out.data(), x.data(), n);
  if (out.requires_grad()) {
    attach(out, {x}, [bwd](Node& nd) {
      const Tensor& px = nd.parents[0];
      const double* g = nd.out_grad->g.data();
      const std::size_t m = nd.out_grad->g.size();
      std::vector<double> dx(m);
      bwd(dx.data(), px.data(), nd.out_values->data(), g, m);
      accumulate_grad(px, dx.data(), m);
    });
  }
  return out;
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const std::size_t n = a.size();
  Tensor out = make_out(a.shape(), track(a) || track(b));
  kern::active().add(out.data(), a.data(), b.data(), static_cast<int>(n));
  if (out.requires_grad()) {
    attach(out, {a, b}, [](Node& nd) {
      const double* g = nd.out_grad->g.data();
      const std::size_t m = nd.out_grad->g.size();
      accumulate_grad(nd.parents[0], g, m);
      accumulate_grad(nd.parents[1], g, m);
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const std::size_t n = a.size();
  Tensor out = make_out(a.shape(), track(a) || track(b));
  kern::active().sub(out.data(), a.data(), b.data(), static_cast<int>(n));
  if (out.requires_grad()) {
    attach(out, {a, b}, [](Node& nd) {
      const double* g = nd.out_grad->g.data();
      const std::size_t m = nd.out_grad->g.size();
      accumulate_grad(nd.parents[0], g, m);
      std::vector<double> db(m);
      kern::active().scale(db.data(), g, -1.0, static_cast<int>(m));
      accumulate_grad(nd.parents[1], db.data(), m);
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul",
      [](double* o, const double* x, const double* y, std::size_t n) {
        kern::active().mul(o, x, y, static_cast<int>(n));
      },
      [](double* da, double* db, const double* x, const double* y,
         const double* g, std::size_t n) {
        kern::active().mul(da, g, y, static_cast<int>(n));
        kern::active().mul(db, g, x, static_cast<int>(n));
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "div",
      [](double* o, const double* x, const double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = x[i] / y[i];
      },
      [](double* da, double* db, const double* x, const double* y,
         const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          da[i] = g[i] / y[i];
          db[i] = -g[i] * x[i] / (y[i] * y[i]);
        }
      });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "minimum",
      [](double* o, const double* x, const double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = x[i] <= y[i] ? x[i] : y[i];
      },
      [](double* da, double* db, const double* x, const double* y,
         const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          const bool first = x[i] <= y[i];
          da[i] = first ? g[i] : 0.0;
          db[i] = first ? 0.0 : g[i];
        }
      });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "maximum",
      [](double* o, const double* x, const double* y, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = x[i] >= y[i] ? x[i] : y[i];
      },
      [](double* da, double* db, const double* x, const double* y,
         const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
          const bool first = x[i] >= y[i];
          da[i] = first ? g[i] : 0.0;
          db[i] = first ? 0.0 : g[i];
        }
      });
}

Tensor scale(const Tensor& x, double c) {
  const std::size_t n = x.size();
  Tensor out = make_out(x.shape(), track(x));
  kern::active().scale(out.data(), x.data(), c, static_cast<int>(n));
  if (out.requires_grad()) {
    attach(out, {x}, [c](Node& nd) {
      const std::size_t m = nd.out_grad->g.size();
      std::vector<double> dx(m);
      kern::active().scale(dx.data(), nd.out_grad->g.data(), c, static_cast<int>(m));
      accumulate_grad(nd.parents[0], dx.data(), m);
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_elementwise(
      x,
      [c](double* o, const double* v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = v[i] + c;
      },
      [](double* dx, const double*, const double*, const double* g, std::size_t n) {
        std::copy(g, g + n, dx);
      });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double* o, const double* v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = v[i] > 0.0 ? v[i] : 0.0;
      },
      [](double* dx, const double* v, const double*, const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) dx[i] = v[i] > 0.0 ? g[i] : 0.0;
      });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double* o, const double* v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = stable_sigmoid(v[i]);
      },
      [](double* dx, const double*, const double* y, const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) dx[i] = g[i] * y[i] * (1.0 - y[i]);
      });
}

Tensor softplus(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double* o, const double* v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
          o[i] = std::max(v[i], 0.0) + std::log1p(std::exp(-std::abs(v[i])));
      },
      [](double* dx, const double* v, const double*, const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) dx[i] = g[i] * stable_sigmoid(v[i]);
      });
}

Tensor abs_val(const Tensor& x) {
  return unary_elementwise(
      x,
      [](double* o, const double* v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = std::abs(v[i]);
      },
      [](double* dx, const double* v, const double*, const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
          dx[i] = v[i] > 0.0 ? g[i] : (v[i] < 0.0 ? -g[i] : 0.0);
      });
}

Tensor pow_scalar(const Tensor& x, double p) {
  return unary_elementwise(
      x,
      [p](double* o, const double* v, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) o[i] = std::pow(v[i], p);
      },
      [p](double* dx, const double* v, const double*, const double* g, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i)
          dx[i] = v[i] == 0.0 ? 0.0 : g[i] * p * std::pow(v[i], p - 1.0);
      });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  require(a.cols() == b.rows(), "matmul: inner extents differ, " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make_out({m, n}, track(a) || track(b));
  kern::active().gemm_nn(out.data(), a.data(), b.data(), m, k, n, false);
  if (out.requires_grad()) {
    attach(out, {a, b}, [m, k, n](Node& nd) {
      const Tensor& pa = nd.parents[0];
      const Tensor& pb = nd.parents[1];
      const double* g = nd.out_grad->g.data();
      if (pa.requires_grad()) {
        std::vector<double> da(static_cast<std::size_t>(m) * k);
        kern::active().gemm_nt(da.data(), g, pb.data(), m, n, k, false);
        accumulate_grad(pa, da.data(), da.size());
      }
      if (pb.requires_grad()) {
        std::vector<double> db(static_cast<std::size_t>(k) * n);
        kern::active().gemm_tn(db.data(), pa.data(), g, m, k, n, false);
        accumulate_grad(pb, db.data(), db.size());
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  require_rank2(x, "transpose");
  const int m = x.rows(), n = x.cols();
  Tensor out = make_out({n, m}, track(x));
  const double* src = x.data();
  double* dst = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) dst[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
  if (out.requires_grad()) {
    attach(out, {x}, [m, n](Node& nd) {
      const double* g = nd.out_grad->g.data();
      std::vector<double> dx(static_cast<std::size_t>(m) * n);
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i)
          dx[static_cast<std::size_t>(i) * n + j] = g[static_cast<std::size_t>(j) * m + i];
      accumulate_grad(nd.parents[0], dx.data(), dx.size());
    });
  }
  return out;
}

namespace {

// softmax over contiguous rows of length `len`, `count` of them
void softmax_rows_forward(double* out, const double* in, int count, int len) {
  const auto& K = kern::active();
  for (int r = 0; r < count; ++r) {
    const double* x = in + static_cast<std::size_t>(r) * len;
    double* y = out + static_cast<std::size_t>(r) * len;
    const double m = K.max(x, len);
    for (int j = 0; j < len; ++j) y[j] = std::exp(x[j] - m);
    const double s = K.sum(y, len);
    K.scale(y, y, 1.0 / s, len);
  }
}

void softmax_rows_backward(double* dx, const double* y, const double* g,
                           int count, int len) {
  const auto& K = kern::active();
  for (int r = 0; r < count; ++r) {
    const std::size_t off = static_cast<std::size_t>(r) * len;
    const double dot = K.dot(g + off, y + off, len);
    for (int j = 0; j < len; ++j) dx[off + j] = y[off + j] * (g[off + j] - dot);
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  require(x.rank() == 1 || x.rank() == 2,
          "softmax: expected vector or matrix, got " + shape_str(x.shape()));
  require(axis >= 0 && axis < x.rank(), "softmax: axis " + std::to_string(axis) +
                                            " out of range for " + shape_str(x.shape()));
  Tensor out = make_out(x.shape(), track(x));
  const bool rows = (x.rank() == 1) || axis == 1;
  const int count = x.rank() == 1 ? 1 : (rows ? x.rows() : x.cols());
  const int len = x.rank() == 1 ? x.rows() : (rows ? x.cols() : x.rows());

  if (rows) {
    softmax_rows_forward(out.data(), x.data(), count, len);
  } else {
    // column slices: gather with stride, normalize, scatter back
    const int n = x.cols();
    std::vector<double> buf(len), res(len);
    for (int c = 0; c < count; ++c) {
      for (int i = 0; i < len; ++i) buf[i] = x.data()[static_cast<std::size_t>(i) * n + c];
      softmax_rows_forward(res.data(), buf.data(), 1, len);
      for (int i = 0; i < len; ++i) out.data()[static_cast<std::size_t>(i) * n + c] = res[i];
    }
  }
  if (out.requires_grad()) {
    attach(out, {x}, [rows, count, len](Node& nd) {
      const double* y = nd.out_values->data();
      const double* g = nd.out_grad->g.data();
      const std::size_t total = nd.out_grad->g.size();
      std::vector<double> dx(total);
      if (rows) {
        softmax_rows_backward(dx.data(), y, g, count, len);
      } else {
        const int n = count;  // column count == row stride
        std::vector<double> ybuf(len), gbuf(len), dbuf(len);
        for (int c = 0; c < count; ++c) {
          for (int i = 0; i < len; ++i) {
            ybuf[i] = y[static_cast<std::size_t>(i) * n + c];
            gbuf[i] = g[static_cast<std::size_t>(i) * n + c];
          }
          softmax_rows_backward(dbuf.data(), ybuf.data(), gbuf.data(), 1, len);
          for (int i = 0; i < len; ++i) dx[static_cast<std::size_t>(i) * n + c] = dbuf[i];
        }
      }
      accumulate_grad(nd.parents[0], dx.data(), total);
    });
  }
  return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  require_rank2(q, "scaled_dot_attention");
  require_rank2(k, "scaled_dot_attention");
  require_rank2(v, "scaled_dot_attention");
  require(q.cols() == k.cols(), "scaled_dot_attention: q/k feature extents differ, " +
                                    shape_str(q.shape()) + " vs " + shape_str(k.shape()));
  require(k.rows() == v.rows(), "scaled_dot_attention: k/v row counts differ, " +
                                    shape_str(k.shape()) + " vs " + shape_str(v.shape()));
  Tensor logits = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  return matmul(softmax(logits, 1), v);
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  require_rank2(x, "gather_rows");
  const int n = x.rows(), d = x.cols();
  for (int i : idx)
    require(i >= 0 && i < n, "gather_rows: index " + std::to_string(i) +
                                 " out of range for " + shape_str(x.shape()));
  Tensor out = make_out({static_cast<int>(idx.size()), d}, track(x));
  for (std::size_t j = 0; j < idx.size(); ++j)
    std::copy_n(x.data() + static_cast<std::size_t>(idx[j]) * d, d, out.data() + j * d);
  if (out.requires_grad()) {
    attach(out, {x}, [idx, n, d](Node& nd) {
      const double* g = nd.out_grad->g.data();
      std::vector<double> dx(static_cast<std::size_t>(n) * d, 0.0);
      for (std::size_t j = 0; j < idx.size(); ++j)
        kern::active().axpy(dx.data() + static_cast<std::size_t>(idx[j]) * d, 1.0,
                            g + j * d, d);
      accumulate_grad(nd.parents[0], dx.data(), dx.size());
    });
  }
  return out;
}

std::vector<int> topk_indices(const Tensor& scores, int k) {
  require(scores.rank() == 1 || (scores.rank() == 2 && scores.cols() == 1),
          "topk_indices: expected a vector, got " + shape_str(scores.shape()));
  const int n = scores.rows();
  require(k >= 1 && k <= n, "topk_indices: k=" + std::to_string(k) +
                                " outside [1, " + std::to_string(n) + "]");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const double* s = scores.data();
  // stable sort keeps ascending index order within tied scores
  std::stable_sort(order.begin(), order.end(),
                   [s](int a, int b) { return s[a] > s[b]; });
  order.resize(k);
  return order;
}

Tensor rowmax(const Tensor& x) {
  require_rank2(x, "rowmax");
  require(x.cols() >= 1, "rowmax: empty rows in " + shape_str(x.shape()));
  const int n = x.rows(), m = x.cols();
  Tensor out = make_out({n}, track(x));
  std::vector<int> argmax(n);
  for (int i = 0; i < n; ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * m;
    int best = 0;
    for (int j = 1; j < m; ++j)
      if (row[j] > row[best]) best = j;
    argmax[i] = best;
    out.data()[i] = row[best];
  }
  if (out.requires_grad()) {
    attach(out, {x}, [argmax, n, m](Node& nd) {
      const double* g = nd.out_grad->g.data();
      std::vector<double> dx(static_cast<std::size_t>(n) * m, 0.0);
      for (int i = 0; i < n; ++i) dx[static_cast<std::size_t>(i) * m + argmax[i]] = g[i];
      accumulate_grad(nd.parents[0], dx.data(), dx.size());
    });
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_rows");
  require_rank2(b, "concat_rows");
  require(a.cols() == b.cols(), "concat_rows: feature extents differ, " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int ma = a.rows(), mb = b.rows(), d = a.cols();
  Tensor out = make_out({ma + mb, d}, track(a) || track(b));
  std::copy_n(a.data(), a.size(), out.data());
  std::copy_n(b.data(), b.size(), out.data() + a.size());
  if (out.requires_grad()) {
    attach(out, {a, b}, [ma, mb, d](Node& nd) {
      const double* g = nd.out_grad->g.data();
      accumulate_grad(nd.parents[0], g, static_cast<std::size_t>(ma) * d);
      accumulate_grad(nd.parents[1], g + static_cast<std::size_t>(ma) * d,
                      static_cast<std::size_t>(mb) * d);
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_rank2(a, "concat_cols");
  require_rank2(b, "concat_cols");
  require(a.rows() == b.rows(), "concat_cols: row counts differ, " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor out = make_out({m, ca + cb}, track(a) || track(b));
  for (int i = 0; i < m; ++i) {
    std::copy_n(a.data() + static_cast<std::size_t>(i) * ca, ca,
                out.data() + static_cast<std::size_t>(i) * (ca + cb));
    std::copy_n(b.data() + static_cast<std::size_t>(i) * cb, cb,
                out.data() + static_cast<std::size_t>(i) * (ca + cb) + ca);
  }
  if (out.requires_grad()) {
    attach(out, {a, b}, [m, ca, cb](Node& nd) {
      const double* g = nd.out_grad->g.data();
      std::vector<double> da(static_cast<std::size_t>(m) * ca);
      std::vector<double> db(static_cast<std::size_t>(m) * cb);
      for (int i = 0; i < m; ++i) {
        std::copy_n(g + static_cast<std::size_t>(i) * (ca + cb), ca,
                    da.data() + static_cast<std::size_t>(i) * ca);
        std::copy_n(g + static_cast<std::size_t>(i) * (ca + cb) + ca, cb,
                    db.data() + static_cast<std::size_t>(i) * cb);
      }
      accumulate_grad(nd.parents[0], da.data(), da.size());
      accumulate_grad(nd.parents[1], db.data(), db.size());
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, int start, int len) {
  require_rank2(x, "slice_cols");
  require(start >= 0 && len > 0 && start + len <= x.cols(),
          "slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + len) +
              ") outside " + shape_str(x.shape()));
  const int m = x.rows(), n = x.cols();
  Tensor out = make_out({m, len}, track(x));
  for (int i = 0; i < m; ++i)
    std::copy_n(x.data() + static_cast<std::size_t>(i) * n + start, len,
                out.data() + static_cast<std::size_t>(i) * len);
  if (out.requires_grad()) {
    attach(out, {x}, [m, n, start, len](Node& nd) {
      const double* g = nd.out_grad->g.data();
      std::vector<double> dx(static_cast<std::size_t>(m) * n, 0.0);
      for (int i = 0; i < m; ++i)
        std::copy_n(g + static_cast<std::size_t>(i) * len, len,
                    dx.data() + static_cast<std::size_t>(i) * n + start);
      accumulate_grad(nd.parents[0], dx.data(), dx.size());
    });
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out = make_out({1}, track(x));
  out.data()[0] = kern::active().sum(x.data(), static_cast<int>(x.size()));
  if (out.requires_grad()) {
    attach(out, {x}, [](Node& nd) {
      const double g = nd.out_grad->g[0];
      std::vector<double> dx(nd.parents[0].size(), g);
      accumulate_grad(nd.parents[0], dx.data(), dx.size());
    });
  }
  return out;
}

Tensor mean_all(const Tensor& x) {
  require(x.size() > 0, "mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean_rows(const Tensor& x) {
  require_rank2(x, "mean_rows");
  require(x.rows() >= 1, "mean_rows: no rows in " + shape_str(x.shape()));
  const int n = x.rows(), d = x.cols();
  Tensor out = make_out({1, d}, track(x));
  for (int i = 0; i < n; ++i)
    kern::active().axpy(out.data(), 1.0 / n, x.data() + static_cast<std::size_t>(i) * d, d);
  if (out.requires_grad()) {
    attach(out, {x}, [n, d](Node& nd) {
      const double* g = nd.out_grad->g.data();
      std::vector<double> dx(static_cast<std::size_t>(n) * d);
      for (int i = 0; i < n; ++i)
        kern::active().scale(dx.data() + static_cast<std::size_t>(i) * d, g, 1.0 / n, d);
      accumulate_grad(nd.parents[0], dx.data(), dx.size());
    });
  }
  return out;
}

namespace {

void require_rowvec(const Tensor& x, const Tensor& v, const char* op) {
  require_rank2(x, op);
  require((v.rank() == 1 && v.rows() == x.cols()) ||
              (v.rank() == 2 && v.rows() == 1 && v.cols() == x.cols()),
          std::string(op) + ": row vector " + shape_str(v.shape()) +
              " incompatible with " + shape_str(x.shape()));
}

}  // namespace

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require_rowvec(x, v, "add_rowvec");
  const int m = x.rows(), d = x.cols();
  Tensor out = make_out(x.shape(), track(x) || track(v));
  for (int i = 0; i < m; ++i)
    kern::active().add(out.data() + static_cast<std::size_t>(i) * d,
                       x.data() + static_cast<std::size_t>(i) * d, v.data(), d);
  if (out.requires_grad()) {
    attach(out, {x, v}, [m, d](Node& nd) {
      const double* g = nd.out_grad->g.data();
      accumulate_grad(nd.parents[0], g, static_cast<std::size_t>(m) * d);
      if (nd.parents[1].requires_grad()) {
        std::vector<double> dv(d, 0.0);
        for (int i = 0; i < m; ++i)
          kern::active().axpy(dv.data(), 1.0, g + static_cast<std::size_t>(i) * d, d);
        accumulate_grad(nd.parents[1], dv.data(), dv.size());
      }
    });
  }
  return out;
}

Tensor mul_rowvec(const Tensor& x, const Tensor& v) {
  require_rowvec(x, v, "mul_rowvec");
  const int m = x.rows(), d = x.cols();
  Tensor out = make_out(x.shape(), track(x) || track(v));
  for (int i = 0; i < m; ++i)
    kern::active().mul(out.data() + static_cast<std::size_t>(i) * d,
                       x.data() + static_cast<std::size_t>(i) * d, v.data(), d);
  if (out.requires_grad()) {
    attach(out, {x, v}, [m, d](Node& nd) {
      const Tensor& px = nd.parents[0];
      const Tensor& pv = nd.parents[1];
      const double* g = nd.out_grad->g.data();
      if (px.requires_grad()) {
        std::vector<double> dx(static_cast<std::size_t>(m) * d);
        for (int i = 0; i < m; ++i)
          kern::active().mul(dx.data() + static_cast<std::size_t>(i) * d,
                             g + static_cast<std::size_t>(i) * d, pv.data(), d);
        accumulate_grad(px, dx.data(), dx.size());
      }
      if (pv.requires_grad()) {
        std::vector<double> dv(d, 0.0), tmp(d);
        for (int i = 0; i < m; ++i) {
          kern::active().mul(tmp.data(), g + static_cast<std::size_t>(i) * d,
                             px.data() + static_cast<std::size_t>(i) * d, d);
          kern::active().add(dv.data(), dv.data(), tmp.data(), d);
        }
        accumulate_grad(pv, dv.data(), dv.size());
      }
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const std::vector<double>& factors) {
  require_rank2(x, "scale_rows");
  require(static_cast<int>(factors.size()) == x.rows(),
          "scale_rows: " + std::to_string(factors.size()) + " factors for " +
              shape_str(x.shape()));
  const int m = x.rows(), d = x.cols();
  Tensor out = make_out(x.shape(), track(x));
  for (int i = 0; i < m; ++i)
    kern::active().scale(out.data() + static_cast<std::size_t>(i) * d,
                         x.data() + static_cast<std::size_t>(i) * d, factors[i], d);
  if (out.requires_grad()) {
    attach(out, {x}, [factors, m, d](Node& nd) {
      const double* g = nd.out_grad->g.data();
      std::vector<double> dx(static_cast<std::size_t>(m) * d);
      for (int i = 0; i < m; ++i)
        kern::active().scale(dx.data() + static_cast<std::size_t>(i) * d,
                             g + static_cast<std::size_t>(i) * d, factors[i], d);
      accumulate_grad(nd.parents[0], dx.data(), dx.size());
    });
  }
  return out;
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
  require_rank2(x, "layer_norm_rows");
  require_rowvec(x, gamma, "layer_norm_rows");
  require_rowvec(x, beta, "layer_norm_rows");
  const int m = x.rows(), d = x.cols();
  Tensor out = make_out(x.shape(), track(x) || track(gamma) || track(beta));
  std::vector<double> xhat(static_cast<std::size_t>(m) * d);
  std::vector<double> inv_sigma(m);
  for (int i = 0; i < m; ++i) {
    const double* row = x.data() + static_cast<std::size_t>(i) * d;
    const double mu = kern::active().sum(row, d) / d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    double* h = xhat.data() + static_cast<std::size_t>(i) * d;
    double* y = out.data() + static_cast<std::size_t>(i) * d;
    for (int j = 0; j < d; ++j) {
      h[j] = (row[j] - mu) * inv;
      y[j] = h[j] * gamma.data()[j] + beta.data()[j];
    }
  }
  if (out.requires_grad()) {
    attach(out, {x, gamma, beta},
           [m, d, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Node& nd) {
             const Tensor& px = nd.parents[0];
             const Tensor& pg = nd.parents[1];
             const Tensor& pb = nd.parents[2];
             const double* g = nd.out_grad->g.data();
             if (px.requires_grad()) {
               std::vector<double> dx(static_cast<std::size_t>(m) * d);
               for (int i = 0; i < m; ++i) {
                 const std::size_t off = static_cast<std::size_t>(i) * d;
                 double mean_gh = 0.0, mean_ghh = 0.0;
                 for (int j = 0; j < d; ++j) {
                   const double gh = g[off + j] * pg.data()[j];
                   mean_gh += gh;
                   mean_ghh += gh * xhat[off + j];
                 }
                 mean_gh /= d;
                 mean_ghh /= d;
                 for (int j = 0; j < d; ++j) {
                   const double gh = g[off + j] * pg.data()[j];
                   dx[off + j] = inv_sigma[i] * (gh - mean_gh - xhat[off + j] * mean_ghh);
                 }
               }
               accumulate_grad(px, dx.data(), dx.size());
             }
             if (pg.requires_grad()) {
               std::vector<double> dg(d, 0.0);
               for (int i = 0; i < m; ++i)
                 for (int j = 0; j < d; ++j)
                   dg[j] += g[static_cast<std::size_t>(i) * d + j] *
                            xhat[static_cast<std::size_t>(i) * d + j];
               accumulate_grad(pg, dg.data(), dg.size());
             }
             if (pb.requires_grad()) {
               std::vector<double> db(d, 0.0);
               for (int i = 0; i < m; ++i)
                 kern::active().axpy(db.data(), 1.0, g + static_cast<std::size_t>(i) * d, d);
               accumulate_grad(pb, db.data(), db.size());
             }
           });
  }
  return out;
}

Tensor stop_grad(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<double>(x.data(), x.data() + x.size()));
}

}  // namespace cgr
