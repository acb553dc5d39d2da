#include "dsgsum/kernels.hpp"

#include <cmath>

// Reference kernels. These define the semantics the AVX2 variants are tested
// against; keep the loop structure in sync with kernels_avx2.cpp.
namespace dsgsum::kernels {
namespace {

void s_add(const double* a, const double* b, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void s_sub(const double* a, const double* b, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void s_mul(const double* a, const double* b, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void s_scale(const double* a, double s, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] * s;
}

void s_axpy(double a, const double* x, double* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void s_fill(double* dst, double v, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = v;
}

void s_relu(const double* a, double* dst, size_t n) {
  for (size_t i = 0; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

double s_max(const double* a, size_t n) {
  double m = a[0];
  for (size_t i = 1; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

// ikj order: the inner update is an axpy over the C row, which vectorizes
// over n without changing per-element rounding.
void s_matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (size_t j = 0; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

void s_matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void s_matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (size_t i = 0; i < m; ++i) {
      const double api = a[p * m + i];
      if (api == 0.0) continue;
      double* crow = c + i * n;
      for (size_t j = 0; j < n; ++j) crow[j] = crow[j] + api * brow[j];
    }
  }
}

void s_adam_update(double* p, double* m, double* v, const double* g, double gscale,
                   size_t n, double lr, double b1, double b2, double eps,
                   double bc1, double bc2) {
  for (size_t i = 0; i < n; ++i) {
    const double gi = g[i] * gscale;
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * (gi * gi);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops ops = {
      s_add, s_sub, s_mul, s_scale, s_axpy, s_fill, s_relu, s_max,
      s_matmul_nn, s_matmul_nt, s_matmul_tn, s_adam_update,
  };
  return ops;
}

}  // namespace dsgsum::kernels
