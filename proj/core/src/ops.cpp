#include "pipa/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "pipa/exec.hpp"

namespace pipa {

namespace {

using detail::Node;

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
}

bool wants(const Tensor& t) { return t.requires_grad(); }

std::vector<double>& grad_of(const Tensor& t) { return t.node()->grad; }

}  // namespace

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> v(a.values());
  const double* bp = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] += bp[i];
  return detail::make_op_node(a.shape(), std::move(v), {a, b}, [a, b](Node& self) {
    if (wants(a)) {
      auto& ga = grad_of(a);
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (wants(b)) {
      auto& gb = grad_of(b);
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i];
    }
  });
}

Tensor add(const Tensor& a, double b) {
  std::vector<double> v(a.values());
  for (double& x : v) x += b;
  return detail::make_op_node(a.shape(), std::move(v), {a}, [a](Node& self) {
    auto& ga = grad_of(a);
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> v(a.values());
  const double* bp = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= bp[i];
  return detail::make_op_node(a.shape(), std::move(v), {a, b}, [a, b](Node& self) {
    if (wants(a)) {
      auto& ga = grad_of(a);
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
    }
    if (wants(b)) {
      auto& gb = grad_of(b);
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, double b) { return add(a, -b); }

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> v(a.values());
  const double* bp = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= bp[i];
  return detail::make_op_node(a.shape(), std::move(v), {a, b}, [a, b](Node& self) {
    const double* av = a.data();
    const double* bv = b.data();
    if (wants(a)) {
      auto& ga = grad_of(a);
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * bv[i];
    }
    if (wants(b)) {
      auto& gb = grad_of(b);
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * av[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  check_same_shape("div", a, b);
  std::vector<double> v(a.values());
  const double* bp = b.data();
  for (size_t i = 0; i < v.size(); ++i) {
    require(bp[i] != 0.0, "div: zero divisor at flat index " + std::to_string(i));
    v[i] /= bp[i];
  }
  return detail::make_op_node(a.shape(), std::move(v), {a, b}, [a, b](Node& self) {
    const double* av = a.data();
    const double* bv = b.data();
    if (wants(a)) {
      auto& ga = grad_of(a);
      for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] / bv[i];
    }
    if (wants(b)) {
      auto& gb = grad_of(b);
      for (size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

Tensor div(const Tensor& a, double b) {
  require(b != 0.0, "div: zero scalar divisor");
  return scale(a, 1.0 / b);
}

Tensor exp(const Tensor& a) {
  std::vector<double> v(a.values());
  for (double& x : v) x = std::exp(x);
  return detail::make_op_node(a.shape(), std::move(v), {a}, [a](Node& self) {
    auto& ga = grad_of(a);
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * self.value[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> v(a.values());
  for (size_t i = 0; i < v.size(); ++i) {
    require(v[i] > 0.0, "log: nonpositive input " + std::to_string(v[i]) + " at flat index " + std::to_string(i));
    v[i] = std::log(v[i]);
  }
  return detail::make_op_node(a.shape(), std::move(v), {a}, [a](Node& self) {
    const double* av = a.data();
    auto& ga = grad_of(a);
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] / av[i];
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> v(a.values());
  for (double& x : v) x = x > 0.0 ? x : 0.0;
  return detail::make_op_node(a.shape(), std::move(v), {a}, [a](Node& self) {
    const double* av = a.data();
    auto& ga = grad_of(a);
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (av[i] > 0.0) ga[i] += self.grad[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> v(a.values());
  for (double& x : v) x *= s;
  return detail::make_op_node(a.shape(), std::move(v), {a}, [a, s](Node& self) {
    auto& ga = grad_of(a);
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * s;
  });
}

// ---- matmul ----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: inputs must be rank 2, got " +
                                              shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: inner extent mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> v(static_cast<size_t>(m) * n, 0.0);
  detail::gemm_nn(m, k, n, a.data(), b.data(), v.data());
  return detail::make_op_node({m, n}, std::move(v), {a, b}, [a, b, m, k, n](Node& self) {
    if (wants(a)) detail::gemm_nt(m, n, k, self.grad.data(), b.data(), grad_of(a).data());
    if (wants(b)) detail::gemm_tn(k, m, n, a.data(), self.grad.data(), grad_of(b).data());
  });
}

// ---- conv2d ----------------------------------------------------------------

namespace {

void im2col(const double* x, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
            double* col) {
  // col layout: [(c*k*k) x (oh*ow)]
  const int ospatial = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        double* dst = col + static_cast<size_t>((ch * k + ki) * k + kj) * ospatial;
        const double* src = x + static_cast<size_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) {
            std::fill_n(dst + static_cast<size_t>(oy) * ow, ow, 0.0);
            continue;
          }
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            dst[static_cast<size_t>(oy) * ow + ox] = (ix < 0 || ix >= w) ? 0.0 : src[static_cast<size_t>(iy) * w + ix];
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, int c, int h, int w, int k, int stride, int pad, int oh, int ow,
                double* x) {
  const int ospatial = oh * ow;
  for (int ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const double* src = col + static_cast<size_t>((ch * k + ki) * k + kj) * ospatial;
        double* dst = x + static_cast<size_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix < 0 || ix >= w) continue;
            dst[static_cast<size_t>(iy) * w + ix] += src[static_cast<size_t>(oy) * ow + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int pad) {
  require(x.rank() == 4, "conv2d: input must be B x C x H x W, got " + shape_str(x.shape()));
  require(w.rank() == 4, "conv2d: weight must be F x C x k x k, got " + shape_str(w.shape()));
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int f = w.dim(0), wc = w.dim(1), k = w.dim(2), k2 = w.dim(3);
  require(wc == c, "conv2d: channel mismatch, input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  require(k == k2 && (k == 1 || k == 3), "conv2d: kernel must be 1x1 or 3x3, got " + shape_str(w.shape()));
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2, got " + std::to_string(stride));
  require(pad >= 0, "conv2d: negative padding");
  const int hn = h + 2 * pad - k;
  const int wn = wd + 2 * pad - k;
  require(hn >= 0 && wn >= 0, "conv2d: kernel larger than padded input");
  require(hn % stride == 0 && wn % stride == 0,
          "conv2d: non-integral output extent for input " + shape_str(x.shape()) + ", k=" + std::to_string(k) +
              ", stride=" + std::to_string(stride) + ", pad=" + std::to_string(pad));
  const int oh = hn / stride + 1;
  const int ow = wn / stride + 1;
  const int ckk = c * k * k;
  const int ospatial = oh * ow;

  std::vector<double> out(static_cast<size_t>(b) * f * ospatial, 0.0);
  std::vector<double> col(static_cast<size_t>(ckk) * ospatial);
  for (int bi = 0; bi < b; ++bi) {
    im2col(x.data() + static_cast<size_t>(bi) * c * h * wd, c, h, wd, k, stride, pad, oh, ow, col.data());
    detail::gemm_nn(f, ckk, ospatial, w.data(), col.data(), out.data() + static_cast<size_t>(bi) * f * ospatial);
  }

  auto backprop = [x, w, b, c, h, wd, f, k, stride, pad, oh, ow, ckk, ospatial](Node& self) {
    std::vector<double> col(static_cast<size_t>(ckk) * ospatial);
    std::vector<double> dcol;
    for (int bi = 0; bi < b; ++bi) {
      const double* dy = self.grad.data() + static_cast<size_t>(bi) * f * ospatial;
      if (wants(w)) {
        im2col(x.data() + static_cast<size_t>(bi) * c * h * wd, c, h, wd, k, stride, pad, oh, ow, col.data());
        detail::gemm_nt(f, ospatial, ckk, dy, col.data(), grad_of(w).data());
      }
      if (wants(x)) {
        dcol.assign(static_cast<size_t>(ckk) * ospatial, 0.0);
        detail::gemm_tn(ckk, f, ospatial, w.data(), dy, dcol.data());
        col2im_add(dcol.data(), c, h, wd, k, stride, pad, oh, ow,
                   grad_of(x).data() + static_cast<size_t>(bi) * c * h * wd);
      }
    }
  };
  return detail::make_op_node({b, f, oh, ow}, std::move(out), {x, w}, std::move(backprop));
}

Tensor bias_add_channels(const Tensor& x, const Tensor& b) {
  require(x.rank() == 4, "bias_add_channels: input must be rank 4, got " + shape_str(x.shape()));
  require(b.rank() == 1 && b.dim(0) == x.dim(1),
          "bias_add_channels: bias " + shape_str(b.shape()) + " does not match channels of " + shape_str(x.shape()));
  const int n = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  std::vector<double> v(x.values());
  for (int bi = 0; bi < n; ++bi) {
    for (int ch = 0; ch < c; ++ch) {
      double* p = v.data() + (static_cast<size_t>(bi) * c + ch) * spatial;
      const double bv = b.data()[ch];
      for (int i = 0; i < spatial; ++i) p[i] += bv;
    }
  }
  return detail::make_op_node(x.shape(), std::move(v), {x, b}, [x, b, n, c, spatial](Node& self) {
    if (wants(x)) {
      auto& gx = grad_of(x);
      for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
    if (wants(b)) {
      auto& gb = grad_of(b);
      for (int bi = 0; bi < n; ++bi) {
        for (int ch = 0; ch < c; ++ch) {
          const double* p = self.grad.data() + (static_cast<size_t>(bi) * c + ch) * spatial;
          double acc = 0.0;
          for (int i = 0; i < spatial; ++i) acc += p[i];
          gb[ch] += acc;
        }
      }
    }
  });
}

Tensor bias_add_cols(const Tensor& x, const Tensor& b) {
  require(x.rank() == 2, "bias_add_cols: input must be rank 2, got " + shape_str(x.shape()));
  require(b.rank() == 1 && b.dim(0) == x.dim(1),
          "bias_add_cols: bias " + shape_str(b.shape()) + " does not match columns of " + shape_str(x.shape()));
  const int n = x.dim(0), m = x.dim(1);
  std::vector<double> v(x.values());
  for (int i = 0; i < n; ++i) {
    double* p = v.data() + static_cast<size_t>(i) * m;
    for (int j = 0; j < m; ++j) p[j] += b.data()[j];
  }
  return detail::make_op_node(x.shape(), std::move(v), {x, b}, [x, b, n, m](Node& self) {
    if (wants(x)) {
      auto& gx = grad_of(x);
      for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
    }
    if (wants(b)) {
      auto& gb = grad_of(b);
      for (int i = 0; i < n; ++i) {
        const double* p = self.grad.data() + static_cast<size_t>(i) * m;
        for (int j = 0; j < m; ++j) gb[j] += p[j];
      }
    }
  });
}

// ---- softmax cross-entropy ---------------------------------------------------

void softmax_rows(const double* logits, int n, int c, double* probs) {
  for (int i = 0; i < n; ++i) {
    const double* row = logits + static_cast<size_t>(i) * c;
    double* out = probs + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < c; ++j) {
      out[j] = std::exp(row[j] - mx);
      denom += out[j];
    }
    for (int j = 0; j < c; ++j) out[j] /= denom;
  }
}

Tensor softmax_ce(const Tensor& logits, const std::vector<int>& targets, int ignore_index,
                  const std::vector<std::uint8_t>* mask) {
  require(logits.rank() == 2, "softmax_ce: logits must be N x C, got " + shape_str(logits.shape()));
  const int n = logits.dim(0), c = logits.dim(1);
  require(static_cast<int>(targets.size()) == n,
          "softmax_ce: " + std::to_string(targets.size()) + " targets for " + std::to_string(n) + " rows");
  if (mask) {
    require(static_cast<int>(mask->size()) == n, "softmax_ce: mask length mismatch");
  }
  std::vector<std::uint8_t> alive(static_cast<size_t>(n), 0);
  int n_alive = 0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[static_cast<size_t>(i)];
    if (t == ignore_index) continue;
    require(t >= 0 && t < c, "softmax_ce: target " + std::to_string(t) + " out of range [0," +
                                 std::to_string(c) + ") at row " + std::to_string(i));
    if (mask && !(*mask)[static_cast<size_t>(i)]) continue;
    alive[static_cast<size_t>(i)] = 1;
    ++n_alive;
  }

  double loss = 0.0;
  if (n_alive > 0) {
    for (int i = 0; i < n; ++i) {
      if (!alive[static_cast<size_t>(i)]) continue;
      const double* row = logits.data() + static_cast<size_t>(i) * c;
      double mx = row[0];
      for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
      double denom = 0.0;
      for (int j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
      loss += mx + std::log(denom) - row[targets[static_cast<size_t>(i)]];
    }
    loss /= n_alive;
  }

  auto backprop = [logits, targets, alive = std::move(alive), n, c, n_alive](Node& self) {
    if (n_alive == 0) return;
    const double g0 = self.grad[0] / n_alive;
    auto& gl = grad_of(logits);
    std::vector<double> p(static_cast<size_t>(c));
    for (int i = 0; i < n; ++i) {
      if (!alive[static_cast<size_t>(i)]) continue;
      const double* row = logits.data() + static_cast<size_t>(i) * c;
      softmax_rows(row, 1, c, p.data());
      double* grow = gl.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) grow[j] += g0 * p[static_cast<size_t>(j)];
      grow[targets[static_cast<size_t>(i)]] -= g0;
    }
  };
  return detail::make_op_node({1}, {loss}, {logits}, std::move(backprop));
}

// ---- reductions and views ---------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  return detail::make_op_node({1}, {acc}, {a}, [a](Node& self) {
    auto& ga = grad_of(a);
    const double g = self.grad[0];
    for (double& x : ga) x += g;
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  double acc = 0.0;
  for (double x : a.values()) acc += x;
  acc /= n;
  return detail::make_op_node({1}, {acc}, {a}, [a, n](Node& self) {
    auto& ga = grad_of(a);
    const double g = self.grad[0] / n;
    for (double& x : ga) x += g;
  });
}

Tensor max(const Tensor& a) {
  size_t arg = 0;
  double best = a.values()[0];
  for (size_t i = 1; i < a.values().size(); ++i) {
    if (a.values()[i] > best) {
      best = a.values()[i];
      arg = i;
    }
  }
  return detail::make_op_node({1}, {best}, {a}, [a, arg](Node& self) {
    grad_of(a)[arg] += self.grad[0];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(shape_numel(shape) == a.numel(), "reshape: element count mismatch, " + shape_str(a.shape()) +
                                               " -> " + shape_str(shape));
  std::vector<double> v(a.values());
  return detail::make_op_node(std::move(shape), std::move(v), {a}, [a](Node& self) {
    auto& ga = grad_of(a);
    for (size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor transpose2d(const Tensor& a) {
  require(a.rank() == 2, "transpose2d: input must be rank 2, got " + shape_str(a.shape()));
  const int n = a.dim(0), m = a.dim(1);
  std::vector<double> v(static_cast<size_t>(n) * m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) v[static_cast<size_t>(j) * n + i] = a.data()[static_cast<size_t>(i) * m + j];
  return detail::make_op_node({m, n}, std::move(v), {a}, [a, n, m](Node& self) {
    auto& ga = grad_of(a);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga[static_cast<size_t>(i) * m + j] += self.grad[static_cast<size_t>(j) * n + i];
  });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& rows) {
  require(a.rank() == 2, "gather_rows: input must be rank 2, got " + shape_str(a.shape()));
  const int n = a.dim(0), d = a.dim(1);
  for (int r : rows) {
    require(r >= 0 && r < n, "gather_rows: index " + std::to_string(r) + " out of range [0," + std::to_string(n) + ")");
  }
  const int k = static_cast<int>(rows.size());
  require(k > 0, "gather_rows: empty index list");
  std::vector<double> v(static_cast<size_t>(k) * d);
  for (int i = 0; i < k; ++i) {
    const double* src = a.data() + static_cast<size_t>(rows[static_cast<size_t>(i)]) * d;
    std::copy_n(src, d, v.data() + static_cast<size_t>(i) * d);
  }
  return detail::make_op_node({k, d}, std::move(v), {a}, [a, rows, d](Node& self) {
    auto& ga = grad_of(a);
    for (size_t i = 0; i < rows.size(); ++i) {
      const double* g = self.grad.data() + i * d;
      double* dst = ga.data() + static_cast<size_t>(rows[i]) * d;
      for (int j = 0; j < d; ++j) dst[j] += g[j];
    }
  });
}

namespace {

struct BilinearTap {
  int lo, hi;
  double frac;
};

BilinearTap bilinear_tap(int out_i, int in_n, double scale) {
  // align-corners-false source coordinate
  double src = (out_i + 0.5) * scale - 0.5;
  if (src < 0) src = 0;
  if (src > in_n - 1) src = in_n - 1;
  const int lo = static_cast<int>(std::floor(src));
  const int hi = std::min(lo + 1, in_n - 1);
  return {lo, hi, src - lo};
}

}  // namespace

Tensor bilinear_resize(const Tensor& x, int out_h, int out_w) {
  require(x.rank() == 4, "bilinear_resize: input must be rank 4, got " + shape_str(x.shape()));
  require(out_h > 0 && out_w > 0, "bilinear_resize: output extents must be positive");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  std::vector<BilinearTap> ty(static_cast<size_t>(out_h)), tx(static_cast<size_t>(out_w));
  for (int i = 0; i < out_h; ++i) ty[static_cast<size_t>(i)] = bilinear_tap(i, h, sy);
  for (int j = 0; j < out_w; ++j) tx[static_cast<size_t>(j)] = bilinear_tap(j, w, sx);

  std::vector<double> v(static_cast<size_t>(b) * c * out_h * out_w);
  for (int bi = 0; bi < b; ++bi) {
    for (int ch = 0; ch < c; ++ch) {
      const double* src = x.data() + (static_cast<size_t>(bi) * c + ch) * h * w;
      double* dst = v.data() + (static_cast<size_t>(bi) * c + ch) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& yt = ty[static_cast<size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox) {
          const auto& xt = tx[static_cast<size_t>(ox)];
          const double tl = src[static_cast<size_t>(yt.lo) * w + xt.lo];
          const double tr = src[static_cast<size_t>(yt.lo) * w + xt.hi];
          const double bl = src[static_cast<size_t>(yt.hi) * w + xt.lo];
          const double br = src[static_cast<size_t>(yt.hi) * w + xt.hi];
          // lerp form keeps constants exactly constant
          const double top = tl + xt.frac * (tr - tl);
          const double bot = bl + xt.frac * (br - bl);
          dst[static_cast<size_t>(oy) * out_w + ox] = top + yt.frac * (bot - top);
        }
      }
    }
  }

  auto backprop = [x, b, c, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](Node& self) {
    auto& gx = grad_of(x);
    for (int bi = 0; bi < b; ++bi) {
      for (int ch = 0; ch < c; ++ch) {
        double* dst = gx.data() + (static_cast<size_t>(bi) * c + ch) * h * w;
        const double* g = self.grad.data() + (static_cast<size_t>(bi) * c + ch) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
          const auto& yt = ty[static_cast<size_t>(oy)];
          for (int ox = 0; ox < out_w; ++ox) {
            const auto& xt = tx[static_cast<size_t>(ox)];
            const double gv = g[static_cast<size_t>(oy) * out_w + ox];
            dst[static_cast<size_t>(yt.lo) * w + xt.lo] += gv * (1 - yt.frac) * (1 - xt.frac);
            dst[static_cast<size_t>(yt.lo) * w + xt.hi] += gv * (1 - yt.frac) * xt.frac;
            dst[static_cast<size_t>(yt.hi) * w + xt.lo] += gv * yt.frac * (1 - xt.frac);
            dst[static_cast<size_t>(yt.hi) * w + xt.hi] += gv * yt.frac * xt.frac;
          }
        }
      }
    }
  };
  return detail::make_op_node({b, c, out_h, out_w}, std::move(v), {x}, std::move(backprop));
}

Tensor nchw_to_rows(const Tensor& x) {
  require(x.rank() == 4, "nchw_to_rows: input must be rank 4, got " + shape_str(x.shape()));
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int spatial = h * w;
  std::vector<double> v(static_cast<size_t>(b) * spatial * c);
  for (int bi = 0; bi < b; ++bi) {
    for (int ch = 0; ch < c; ++ch) {
      const double* src = x.data() + (static_cast<size_t>(bi) * c + ch) * spatial;
      for (int s = 0; s < spatial; ++s) {
        v[(static_cast<size_t>(bi) * spatial + s) * c + ch] = src[s];
      }
    }
  }
  return detail::make_op_node({b * spatial, c}, std::move(v), {x}, [x, b, c, spatial](Node& self) {
    auto& gx = grad_of(x);
    for (int bi = 0; bi < b; ++bi) {
      for (int ch = 0; ch < c; ++ch) {
        double* dst = gx.data() + (static_cast<size_t>(bi) * c + ch) * spatial;
        for (int s = 0; s < spatial; ++s) {
          dst[s] += self.grad[(static_cast<size_t>(bi) * spatial + s) * c + ch];
        }
      }
    }
  });
}

Tensor rows_to_nchw(const Tensor& x, int b, int c, int h, int w) {
  require(x.rank() == 2, "rows_to_nchw: input must be rank 2, got " + shape_str(x.shape()));
  const int spatial = h * w;
  require(x.dim(0) == b * spatial && x.dim(1) == c,
          "rows_to_nchw: input " + shape_str(x.shape()) + " does not match target " +
              shape_str({b, c, h, w}));
  std::vector<double> v(static_cast<size_t>(b) * c * spatial);
  for (int bi = 0; bi < b; ++bi) {
    for (int ch = 0; ch < c; ++ch) {
      double* dst = v.data() + (static_cast<size_t>(bi) * c + ch) * spatial;
      for (int s = 0; s < spatial; ++s) {
        dst[s] = x.data()[(static_cast<size_t>(bi) * spatial + s) * c + ch];
      }
    }
  }
  return detail::make_op_node({b, c, h, w}, std::move(v), {x}, [x, b, c, spatial](Node& self) {
    auto& gx = grad_of(x);
    for (int bi = 0; bi < b; ++bi) {
      for (int ch = 0; ch < c; ++ch) {
        const double* g = self.grad.data() + (static_cast<size_t>(bi) * c + ch) * spatial;
        for (int s = 0; s < spatial; ++s) {
          gx[(static_cast<size_t>(bi) * spatial + s) * c + ch] += g[s];
        }
      }
    }
  });
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require(x.rank() == 2, "l2_normalize_rows: input must be rank 2, got " + shape_str(x.shape()));
  require(eps > 0.0, "l2_normalize_rows: eps must be positive");
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> v(static_cast<size_t>(n) * d);
  for (int i = 0; i < n; ++i) {
    const double* src = x.data() + static_cast<size_t>(i) * d;
    double q = eps;
    for (int j = 0; j < d; ++j) q += src[j] * src[j];
    const double inv = 1.0 / std::sqrt(q);
    double* dst = v.data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) dst[j] = src[j] * inv;
  }
  return detail::make_op_node(x.shape(), std::move(v), {x}, [x, n, d, eps](Node& self) {
    auto& gx = grad_of(x);
    for (int i = 0; i < n; ++i) {
      const double* src = x.data() + static_cast<size_t>(i) * d;
      const double* g = self.grad.data() + static_cast<size_t>(i) * d;
      double q = eps, dot = 0.0;
      for (int j = 0; j < d; ++j) {
        q += src[j] * src[j];
        dot += src[j] * g[j];
      }
      const double inv = 1.0 / std::sqrt(q);
      const double inv3 = inv * inv * inv;
      double* dst = gx.data() + static_cast<size_t>(i) * d;
      for (int j = 0; j < d; ++j) dst[j] += g[j] * inv - src[j] * dot * inv3;
    }
  });
}

double exp_cos_sim(const std::vector<double>& a, const std::vector<double>& b, double tau) {
  if (a.size() != b.size()) throw std::invalid_argument("exp_cos_sim: dimension mismatch");
  if (tau <= 0.0) throw std::invalid_argument("exp_cos_sim: tau must be positive");
  double dot = 0.0;
  for (size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  return std::exp(dot / tau);
}

}  // namespace pipa
