#include "dsgsum/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

namespace dsgsum::kernels {
namespace {

constexpr size_t kLanes = 4;  // doubles per __m256d

void a_add(const double* a, const double* b, double* dst, size_t n) {
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void a_sub(const double* a, const double* b, double* dst, size_t n) {
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void a_mul(const double* a, const double* b, double* dst, size_t n) {
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void a_scale(const double* a, double s, double* dst, size_t n) {
  const __m256d vs = _mm256_set1_pd(s);
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), vs));
  for (; i < n; ++i) dst[i] = a[i] * s;
}

// mul + add kept separate (no fma) to match the scalar reference bitwise
void a_axpy(double a, const double* x, double* y, size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void a_fill(double* dst, double v, size_t n) {
  const __m256d vv = _mm256_set1_pd(v);
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) _mm256_storeu_pd(dst + i, vv);
  for (; i < n; ++i) dst[i] = v;
}

void a_relu(const double* a, double* dst, size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes)
    _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(a + i), zero));
  for (; i < n; ++i) dst[i] = a[i] > 0.0 ? a[i] : 0.0;
}

double a_max(const double* a, size_t n) {
  if (n < 2 * kLanes) {
    double m = a[0];
    for (size_t i = 1; i < n; ++i)
      if (a[i] > m) m = a[i];
    return m;
  }
  __m256d vm = _mm256_loadu_pd(a);
  size_t i = kLanes;
  for (; i + kLanes <= n; i += kLanes) vm = _mm256_max_pd(vm, _mm256_loadu_pd(a + i));
  alignas(32) double lanes[kLanes];
  _mm256_store_pd(lanes, vm);
  double m = lanes[0];
  for (size_t l = 1; l < kLanes; ++l)
    if (lanes[l] > m) m = lanes[l];
  for (; i < n; ++i)
    if (a[i] > m) m = a[i];
  return m;
}

void a_matmul_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      const __m256d va = _mm256_set1_pd(aip);
      size_t j = 0;
      for (; j + kLanes <= n; j += kLanes) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] = crow[j] + aip * brow[j];
    }
  }
}

// Lane-parallel dot products; accumulation order differs from the scalar
// reference, so this one is tolerance-tested rather than bit-compared.
void a_matmul_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      __m256d acc = _mm256_setzero_pd();
      size_t p = 0;
      for (; p + kLanes <= k; p += kLanes)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p)));
      alignas(32) double lanes[kLanes];
      _mm256_store_pd(lanes, acc);
      double sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
      for (; p < k; ++p) sum += arow[p] * brow[p];
      crow[j] += sum;
    }
  }
}

void a_matmul_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
  for (size_t p = 0; p < k; ++p) {
    const double* brow = b + p * n;
    for (size_t i = 0; i < m; ++i) {
      const double api = a[p * m + i];
      if (api == 0.0) continue;
      double* crow = c + i * n;
      const __m256d va = _mm256_set1_pd(api);
      size_t j = 0;
      for (; j + kLanes <= n; j += kLanes) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] = crow[j] + api * brow[j];
    }
  }
}

void a_adam_update(double* p, double* m, double* v, const double* g, double gscale,
                   size_t n, double lr, double b1, double b2, double eps,
                   double bc1, double bc2) {
  const __m256d vgs = _mm256_set1_pd(gscale);
  const __m256d vb1 = _mm256_set1_pd(b1);
  const __m256d vb2 = _mm256_set1_pd(b2);
  const __m256d v1mb1 = _mm256_set1_pd(1.0 - b1);
  const __m256d v1mb2 = _mm256_set1_pd(1.0 - b2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vbc1 = _mm256_set1_pd(bc1);
  const __m256d vbc2 = _mm256_set1_pd(bc2);
  size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d gi = _mm256_mul_pd(_mm256_loadu_pd(g + i), vgs);
    __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(v1mb1, gi));
    __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                               _mm256_mul_pd(v1mb2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d mhat = _mm256_div_pd(mi, vbc1);
    const __m256d vhat = _mm256_div_pd(vi, vbc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    const __m256d step = _mm256_mul_pd(vlr, _mm256_div_pd(mhat, denom));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    const double gi = g[i] * gscale;
    m[i] = b1 * m[i] + (1.0 - b1) * gi;
    v[i] = b2 * v[i] + (1.0 - b2) * (gi * gi);
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] = p[i] - lr * (mhat / (std::sqrt(vhat) + eps));
  }
}

}  // namespace

const Ops* avx2_ops_impl() {
  static const Ops ops = {
      a_add, a_sub, a_mul, a_scale, a_axpy, a_fill, a_relu, a_max,
      a_matmul_nn, a_matmul_nt, a_matmul_tn, a_adam_update,
  };
  return &ops;
}

}  // namespace dsgsum::kernels

#else

namespace dsgsum::kernels {
const Ops* avx2_ops_impl() { return nullptr; }
}  // namespace dsgsum::kernels

#endif  // __AVX2__
