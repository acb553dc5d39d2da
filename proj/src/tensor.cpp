#include "dsgsum/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dsgsum/kernels.hpp"

namespace dsgsum {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    DSG_CHECK(d >= 0, "negative dimension in shape");
    n *= d;
  }
  return n;
}

thread_local Tape* g_current_tape = nullptr;

// returns 0: same shape, 1: row vector [1,n], 2: col vector [m,1]
int broadcast_kind(const Tensor& a, const Tensor& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return 0;
  if (b.rows() == 1 && b.cols() == a.cols()) return 1;
  if (b.cols() == 1 && b.rows() == a.rows()) return 2;
  DSG_CHECK(false, "incompatible shapes for elementwise op: [" << a.rows() << "," << a.cols()
                     << "] vs [" << b.rows() << "," << b.cols() << "]");
  return -1;
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
  auto impl = std::make_shared<TensorImpl>();
  int64_t n = shape_numel(shape);
  impl->shape = std::move(shape);
  impl->value.assign(static_cast<size_t>(n), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t = zeros(std::move(shape));
  kernels::ops().fill(t.data(), v, t.values().size());
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  auto impl = std::make_shared<TensorImpl>();
  int64_t n = shape_numel(shape);
  DSG_CHECK(static_cast<size_t>(n) == values.size(),
            "value count " << values.size() << " does not match shape numel " << n);
  impl->shape = std::move(shape);
  impl->value = std::move(values);
  return Tensor(std::move(impl));
}

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor Tensor::normal(Shape shape, double stddev, Rng& rng) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.values()) v = stddev * rng.normal();
  return t;
}

Tensor Tensor::xavier(Shape shape, Rng& rng) {
  DSG_CHECK(shape.size() == 2, "xavier init expects a matrix shape");
  double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
  return uniform(std::move(shape), -limit, limit, rng);
}

double Tensor::item() const {
  DSG_CHECK(numel() == 1, "item() on non-scalar tensor");
  return impl_->value[0];
}

double* Tensor::grad_data() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->value.size(), 0.0);
  return impl_->grad.data();
}

const std::vector<double>& Tensor::grad() {
  grad_data();
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tape::Tape(uint64_t seed) : seed_(seed), prev_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

void Tape::backward(const Tensor& loss) {
  DSG_CHECK(loss.defined() && loss.numel() == 1, "backward requires a scalar loss");
  Tensor seed = loss;
  seed.grad_data()[0] += 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  ops_.clear();
}

namespace {

// run f during backward only if the output actually received gradient
template <typename F>
void record(Tensor& out, std::initializer_list<Tensor> inputs, F&& fn) {
  Tape* tape = Tape::current();
  if (tape == nullptr) return;
  bool any = false;
  for (const Tensor& in : inputs)
    if (in.requires_grad()) any = true;
  if (!any) return;
  out.set_requires_grad(true);
  Tensor out_copy = out;
  tape->push([out_copy, fn = std::forward<F>(fn)]() mutable {
    if (!out_copy.has_grad()) return;
    fn(out_copy.impl()->grad.data());
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const int64_t m = a.rows(), k = a.cols(), n = b.cols();
  DSG_CHECK(b.rows() == k, "matmul shape mismatch: [" << m << "," << k << "] x [" << b.rows()
                              << "," << b.cols() << "]");
  Tensor out = Tensor::zeros({m, n});
  kernels::ops().matmul_nn(a.data(), b.data(), out.data(), m, k, n);
  record(out, {a, b}, [a, b, m, k, n](const double* g) mutable {
    Tensor at = a, bt = b;
    if (at.requires_grad())
      kernels::ops().matmul_nt(g, bt.data(), at.grad_data(), m, n, k);
    if (bt.requires_grad())
      kernels::ops().matmul_tn(at.data(), g, bt.grad_data(), k, m, n);
  });
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const int64_t m = a.rows(), k = a.cols(), n = b.rows();
  DSG_CHECK(b.cols() == k, "matmul_nt shape mismatch: [" << m << "," << k << "] x [" << b.rows()
                              << "," << b.cols() << "]^T");
  Tensor out = Tensor::zeros({m, n});
  kernels::ops().matmul_nt(a.data(), b.data(), out.data(), m, k, n);
  record(out, {a, b}, [a, b, m, k, n](const double* g) mutable {
    Tensor at = a, bt = b;
    if (at.requires_grad())
      kernels::ops().matmul_nn(g, bt.data(), at.grad_data(), m, n, k);
    if (bt.requires_grad())
      kernels::ops().matmul_tn(g, at.data(), bt.grad_data(), n, m, k);
  });
  return out;
}

namespace {

enum class EwKind { Add, Sub, Mul };

Tensor elementwise(const Tensor& a, const Tensor& b, EwKind kind) {
  const int bc = broadcast_kind(a, b);
  const int64_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  auto apply = [&](const double* brow, int64_t i) {
    switch (kind) {
      case EwKind::Add: kernels::ops().add(pa + i * n, brow, po + i * n, n); break;
      case EwKind::Sub: kernels::ops().sub(pa + i * n, brow, po + i * n, n); break;
      case EwKind::Mul: kernels::ops().mul(pa + i * n, brow, po + i * n, n); break;
    }
  };
  if (bc == 0) {
    switch (kind) {
      case EwKind::Add: kernels::ops().add(pa, pb, po, m * n); break;
      case EwKind::Sub: kernels::ops().sub(pa, pb, po, m * n); break;
      case EwKind::Mul: kernels::ops().mul(pa, pb, po, m * n); break;
    }
  } else if (bc == 1) {
    for (int64_t i = 0; i < m; ++i) apply(pb, i);
  } else {
    for (int64_t i = 0; i < m; ++i) {
      const double bv = pb[i];
      for (int64_t j = 0; j < n; ++j) {
        const double av = pa[i * n + j];
        po[i * n + j] = kind == EwKind::Add ? av + bv : (kind == EwKind::Sub ? av - bv : av * bv);
      }
    }
  }
  record(out, {a, b}, [a, b, bc, m, n, kind](const double* g) mutable {
    Tensor at = a, bt = b;
    if (at.requires_grad()) {
      double* ga = at.grad_data();
      if (kind == EwKind::Mul) {
        const double* pb2 = bt.data();
        if (bc == 0) {
          for (int64_t i = 0; i < m * n; ++i) ga[i] += g[i] * pb2[i];
        } else if (bc == 1) {
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * pb2[j];
        } else {
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * pb2[i];
        }
      } else {
        kernels::ops().axpy(1.0, g, ga, m * n);
      }
    }
    if (bt.requires_grad()) {
      double* gb = bt.grad_data();
      const double sgn = kind == EwKind::Sub ? -1.0 : 1.0;
      const double* pa2 = at.data();
      if (bc == 0) {
        if (kind == EwKind::Mul) {
          for (int64_t i = 0; i < m * n; ++i) gb[i] += g[i] * pa2[i];
        } else {
          kernels::ops().axpy(sgn, g, gb, m * n);
        }
      } else if (bc == 1) {
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            gb[j] += (kind == EwKind::Mul ? g[i * n + j] * pa2[i * n + j] : sgn * g[i * n + j]);
      } else {
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j)
            gb[i] += (kind == EwKind::Mul ? g[i * n + j] * pa2[i * n + j] : sgn * g[i * n + j]);
      }
    }
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Add); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(a, b, EwKind::Mul); }

Tensor scale(const Tensor& a, double s) {
  Tensor out = Tensor::zeros({a.rows(), a.cols()});
  kernels::ops().scale(a.data(), s, out.data(), a.numel());
  record(out, {a}, [a, s](const double* g) mutable {
    Tensor at = a;
    kernels::ops().axpy(s, g, at.grad_data(), at.numel());
  });
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  DSG_CHECK(!parts.empty(), "concat_rows of nothing");
  const int64_t n = parts[0].cols();
  int64_t m = 0;
  for (const Tensor& p : parts) {
    DSG_CHECK(p.cols() == n, "concat_rows column mismatch");
    m += p.rows();
  }
  Tensor out = Tensor::zeros({m, n});
  int64_t row = 0;
  for (const Tensor& p : parts) {
    std::copy(p.data(), p.data() + p.numel(), out.data() + row * n);
    row += p.rows();
  }
  Tape* tape = Tape::current();
  bool any = false;
  for (const Tensor& p : parts)
    if (p.requires_grad()) any = true;
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    Tensor out_copy = out;
    std::vector<Tensor> ps = parts;
    tape->push([out_copy, ps, n]() mutable {
      if (!out_copy.has_grad()) return;
      const double* g = out_copy.impl()->grad.data();
      int64_t row = 0;
      for (Tensor& p : ps) {
        if (p.requires_grad())
          kernels::ops().axpy(1.0, g + row * n, p.grad_data(), p.numel());
        row += p.rows();
      }
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  DSG_CHECK(!parts.empty(), "concat_cols of nothing");
  const int64_t m = parts[0].rows();
  int64_t n = 0;
  for (const Tensor& p : parts) {
    DSG_CHECK(p.rows() == m, "concat_cols row mismatch");
    n += p.cols();
  }
  Tensor out = Tensor::zeros({m, n});
  int64_t col = 0;
  for (const Tensor& p : parts) {
    const int64_t pc = p.cols();
    for (int64_t i = 0; i < m; ++i)
      std::copy(p.data() + i * pc, p.data() + (i + 1) * pc, out.data() + i * n + col);
    col += pc;
  }
  Tape* tape = Tape::current();
  bool any = false;
  for (const Tensor& p : parts)
    if (p.requires_grad()) any = true;
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    Tensor out_copy = out;
    std::vector<Tensor> ps = parts;
    tape->push([out_copy, ps, m, n]() mutable {
      if (!out_copy.has_grad()) return;
      const double* g = out_copy.impl()->grad.data();
      int64_t col = 0;
      for (Tensor& p : ps) {
        const int64_t pc = p.cols();
        if (p.requires_grad()) {
          double* gp = p.grad_data();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < pc; ++j) gp[i * pc + j] += g[i * n + col + j];
        }
        col += pc;
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, int64_t lo, int64_t hi) {
  DSG_CHECK(0 <= lo && lo < hi && hi <= x.rows(), "slice_rows range [" << lo << "," << hi
                                                       << ") out of " << x.rows());
  const int64_t n = x.cols(), w = hi - lo;
  Tensor out = Tensor::zeros({w, n});
  std::copy(x.data() + lo * n, x.data() + hi * n, out.data());
  record(out, {x}, [x, lo, n, w](const double* g) mutable {
    Tensor xt = x;
    kernels::ops().axpy(1.0, g, xt.grad_data() + lo * n, w * n);
  });
  return out;
}

Tensor slice_cols(const Tensor& x, int64_t lo, int64_t hi) {
  DSG_CHECK(0 <= lo && lo < hi && hi <= x.cols(), "slice_cols range [" << lo << "," << hi
                                                       << ") out of " << x.cols());
  const int64_t m = x.rows(), n = x.cols(), w = hi - lo;
  Tensor out = Tensor::zeros({m, w});
  for (int64_t i = 0; i < m; ++i)
    std::copy(x.data() + i * n + lo, x.data() + i * n + hi, out.data() + i * w);
  record(out, {x}, [x, lo, m, n, w](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) gx[i * n + lo + j] += g[i * w + j];
  });
  return out;
}

Tensor transpose(const Tensor& x) {
  const int64_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.data()[j * m + i] = x.data()[i * n + j];
  record(out, {x}, [x, m, n](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
  });
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  const int64_t rows = table.rows(), n = table.cols();
  Tensor out = Tensor::zeros({static_cast<int64_t>(ids.size()), n});
  for (size_t r = 0; r < ids.size(); ++r) {
    DSG_CHECK(ids[r] >= 0 && ids[r] < rows,
              "gather index " << ids[r] << " out of table range [0," << rows << ")");
    std::copy(table.data() + ids[r] * n, table.data() + (ids[r] + 1) * n, out.data() + r * n);
  }
  record(out, {table}, [table, ids, n](const double* g) mutable {
    Tensor tt = table;
    double* gt = tt.grad_data();
    for (size_t r = 0; r < ids.size(); ++r)
      kernels::ops().axpy(1.0, g + r * n, gt + ids[r] * n, n);
  });
  return out;
}

Tensor scatter_cols(const Tensor& x, const std::vector<int>& ids, int64_t out_cols) {
  const int64_t m = x.rows(), k = x.cols();
  DSG_CHECK(static_cast<int64_t>(ids.size()) == k, "scatter_cols id count mismatch");
  for (int id : ids) DSG_CHECK(id >= 0 && id < out_cols, "scatter index out of range");
  Tensor out = Tensor::zeros({m, out_cols});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < k; ++j) out.data()[i * out_cols + ids[j]] += x.data()[i * k + j];
  record(out, {x}, [x, ids, m, k, out_cols](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < k; ++j) gx[i * k + j] += g[i * out_cols + ids[j]];
  });
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  const int64_t m = x.rows(), n = x.cols();
  DSG_CHECK(n >= 1, "softmax over empty rows");
  Tensor out = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* xi = x.data() + i * n;
    double* yi = out.data() + i * n;
    const double mx = kernels::ops().max(xi, n);
    DSG_CHECK(mx != kNegInf, "fully masked row");
    double s = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      s += yi[j];
    }
    const double inv = 1.0 / s;
    for (int64_t j = 0; j < n; ++j) yi[j] *= inv;
  }
  record(out, {x}, [x, out, m, n](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    const double* y = out.data();
    for (int64_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
      for (int64_t j = 0; j < n; ++j)
        gx[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const int64_t m = x.rows(), n = x.cols();
  DSG_CHECK(gain.numel() == n && bias.numel() == n, "layer_norm gain/bias size mismatch");
  Tensor out = Tensor::zeros({m, n});
  std::vector<double> xhat(static_cast<size_t>(m * n));
  std::vector<double> inv_std(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    const double* xi = x.data() + i * n;
    double mu = 0.0;
    for (int64_t j = 0; j < n; ++j) mu += xi[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      const double d = xi[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    for (int64_t j = 0; j < n; ++j) {
      const double xh = (xi[j] - mu) * inv;
      xhat[i * n + j] = xh;
      out.data()[i * n + j] = xh * gain.data()[j] + bias.data()[j];
    }
  }
  record(out, {x, gain, bias},
         [x, gain, bias, xhat = std::move(xhat), inv_std = std::move(inv_std), m,
          n](const double* g) mutable {
           Tensor xt = x, gt = gain, bt = bias;
           const double dn = static_cast<double>(n);
           for (int64_t i = 0; i < m; ++i) {
             double sum1 = 0.0, sum2 = 0.0;
             for (int64_t j = 0; j < n; ++j) {
               const double dxh = g[i * n + j] * gt.data()[j];
               sum1 += dxh;
               sum2 += dxh * xhat[i * n + j];
             }
             if (xt.requires_grad()) {
               double* gx = xt.grad_data();
               for (int64_t j = 0; j < n; ++j) {
                 const double dxh = g[i * n + j] * gt.data()[j];
                 gx[i * n + j] += inv_std[i] * (dxh - sum1 / dn - xhat[i * n + j] * sum2 / dn);
               }
             }
           }
           if (gt.requires_grad()) {
             double* gg = gt.grad_data();
             for (int64_t i = 0; i < m; ++i)
               for (int64_t j = 0; j < n; ++j) gg[j] += g[i * n + j] * xhat[i * n + j];
           }
           if (bt.requires_grad()) {
             double* gb = bt.grad_data();
             for (int64_t i = 0; i < m; ++i)
               for (int64_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
           }
         });
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = Tensor::zeros({x.rows(), x.cols()});
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = std::tanh(x.data()[i]);
  record(out, {x}, [x, out](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    const double* y = out.data();
    for (int64_t i = 0; i < xt.numel(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
  });
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = Tensor::zeros({x.rows(), x.cols()});
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = 1.0 / (1.0 + std::exp(-x.data()[i]));
  record(out, {x}, [x, out](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    const double* y = out.data();
    for (int64_t i = 0; i < xt.numel(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = Tensor::zeros({x.rows(), x.cols()});
  kernels::ops().relu(x.data(), out.data(), x.numel());
  record(out, {x}, [x, out](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    const double* y = out.data();
    for (int64_t i = 0; i < xt.numel(); ++i)
      if (y[i] > 0.0) gx[i] += g[i];
  });
  return out;
}

Tensor dropout(const Tensor& x, double p) {
  Tape* tape = Tape::current();
  if (tape == nullptr || p <= 0.0) return x;
  DSG_CHECK(p < 1.0, "dropout probability must be < 1");
  const uint64_t stream = tape->next_stream();
  const uint64_t base = splitmix64(tape->seed() ^ (stream * 0x9e3779b97f4a7c15ULL + 0x5851f42d4c957f2dULL));
  const double keep_inv = 1.0 / (1.0 - p);
  std::vector<double> mask(static_cast<size_t>(x.numel()));
  for (int64_t i = 0; i < x.numel(); ++i) {
    const double u = static_cast<double>(splitmix64(base ^ static_cast<uint64_t>(i)) >> 11) * 0x1.0p-53;
    mask[i] = u < p ? 0.0 : keep_inv;
  }
  Tensor out = Tensor::zeros({x.rows(), x.cols()});
  kernels::ops().mul(x.data(), mask.data(), out.data(), x.numel());
  record(out, {x}, [x, mask = std::move(mask)](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    for (int64_t i = 0; i < xt.numel(); ++i) gx[i] += g[i] * mask[i];
  });
  return out;
}

Tensor masked_fill(const Tensor& x, const std::vector<uint8_t>& mask, double fill) {
  DSG_CHECK(static_cast<int64_t>(mask.size()) == x.numel(), "mask size mismatch");
  Tensor out = Tensor::zeros({x.rows(), x.cols()});
  for (int64_t i = 0; i < x.numel(); ++i) out.data()[i] = mask[i] ? fill : x.data()[i];
  record(out, {x}, [x, mask](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    for (int64_t i = 0; i < xt.numel(); ++i)
      if (!mask[i]) gx[i] += g[i];
  });
  return out;
}

Tensor rowmax(const Tensor& x) {
  const int64_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({m, 1});
  std::vector<int64_t> arg(static_cast<size_t>(m), 0);
  for (int64_t i = 0; i < m; ++i) {
    const double* xi = x.data() + i * n;
    int64_t a = 0;
    for (int64_t j = 1; j < n; ++j)
      if (xi[j] > xi[a]) a = j;
    arg[i] = a;
    out.data()[i] = xi[a];
  }
  record(out, {x}, [x, arg = std::move(arg), n](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    for (size_t i = 0; i < arg.size(); ++i) gx[static_cast<int64_t>(i) * n + arg[i]] += g[i];
  });
  return out;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += x.data()[i];
  Tensor out = Tensor::from({1, 1}, {s});
  record(out, {x}, [x](const double* g) mutable {
    Tensor xt = x;
    double* gx = xt.grad_data();
    for (int64_t i = 0; i < xt.numel(); ++i) gx[i] += g[0];
  });
  return out;
}

Tensor nll(const Tensor& probs, const std::vector<int>& targets,
           const std::vector<uint8_t>& valid, double label_smoothing, int exclude_id) {
  const int64_t t_len = probs.rows(), v = probs.cols();
  DSG_CHECK(static_cast<int64_t>(targets.size()) == t_len, "nll target length mismatch");
  DSG_CHECK(static_cast<int64_t>(valid.size()) == t_len, "nll mask length mismatch");
  int64_t k = 0;
  for (uint8_t f : valid)
    if (f) ++k;
  DSG_CHECK(k > 0, "zero non-pad positions");
  const double eps = label_smoothing;
  double loss = 0.0;
  for (int64_t t = 0; t < t_len; ++t) {
    if (!valid[t]) continue;
    const int y = targets[t];
    DSG_CHECK(y >= 0 && y < v, "nll target id out of range");
    const double* row = probs.data() + t * v;
    loss -= (1.0 - eps) * std::log(row[y]);
    if (eps > 0.0) {
      int64_t s_classes = v - 1 - (exclude_id >= 0 && exclude_id != y ? 1 : 0);
      DSG_CHECK(s_classes > 0, "label smoothing with no smoothing classes");
      double acc = 0.0;
      for (int64_t w = 0; w < v; ++w) {
        if (w == y || w == exclude_id) continue;
        acc += std::log(row[w]);
      }
      loss -= eps / static_cast<double>(s_classes) * acc;
    }
  }
  loss /= static_cast<double>(k);
  Tensor out = Tensor::from({1, 1}, {loss});
  record(out, {probs}, [probs, targets, valid, eps, exclude_id, k, t_len, v](const double* g) mutable {
    Tensor pt = probs;
    double* gp = pt.grad_data();
    const double gk = g[0] / static_cast<double>(k);
    for (int64_t t = 0; t < t_len; ++t) {
      if (!valid[t]) continue;
      const int y = targets[t];
      const double* row = pt.data() + t * v;
      gp[t * v + y] -= gk * (1.0 - eps) / row[y];
      if (eps > 0.0) {
        const int64_t s_classes = v - 1 - (exclude_id >= 0 && exclude_id != y ? 1 : 0);
        const double c = gk * eps / static_cast<double>(s_classes);
        for (int64_t w = 0; w < v; ++w) {
          if (w == y || w == exclude_id) continue;
          gp[t * v + w] -= c / row[w];
        }
      }
    }
  });
  return out;
}

double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& leaves, double step) {
  std::vector<Tensor> xs = leaves;
  for (Tensor& x : xs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape tape(0);
    Tensor loss = f(xs);
    DSG_CHECK(loss.numel() == 1, "grad_check requires a scalar function");
    tape.backward(loss);
  }
  analytic.reserve(xs.size());
  for (Tensor& x : xs) analytic.push_back(x.grad());

  double max_rel = 0.0;
  for (size_t li = 0; li < xs.size(); ++li) {
    Tensor& x = xs[li];
    for (int64_t i = 0; i < x.numel(); ++i) {
      const double orig = x.data()[i];
      x.data()[i] = orig + step;
      const double up = f(xs).item();
      x.data()[i] = orig - step;
      const double dn = f(xs).item();
      x.data()[i] = orig;
      const double numeric = (up - dn) / (2.0 * step);
      const double a = analytic[li][i];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace dsgsum
