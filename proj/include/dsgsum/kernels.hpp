#pragma once

#include <cstddef>
#include <string>

// Dense double-precision inner loops behind the tensor engine. Two
// implementations share one contract: a scalar reference and an AVX2 variant,
// selected once per process at first use. Elementwise kernels and the
// broadcast-formulated matmuls (nn, tn) keep the per-element rounding sequence
// of the scalar reference, so scalar and AVX2 agree bit for bit; matmul_nt
// accumulates in lanes and is equivalence-tested to a tolerance instead.
namespace dsgsum::kernels {

struct Ops {
  // dst[i] = a[i] op b[i]
  void (*add)(const double* a, const double* b, double* dst, size_t n);
  void (*sub)(const double* a, const double* b, double* dst, size_t n);
  void (*mul)(const double* a, const double* b, double* dst, size_t n);
  // dst[i] = a[i] * s
  void (*scale)(const double* a, double s, double* dst, size_t n);
  // y[i] += a * x[i]   (mul then add; no fma so backends agree bitwise)
  void (*axpy)(double a, const double* x, double* y, size_t n);
  void (*fill)(double* dst, double v, size_t n);
  // dst[i] = max(a[i], 0)
  void (*relu)(const double* a, double* dst, size_t n);
  double (*max)(const double* a, size_t n);

  // C[m,n] += A[m,k] * B[k,n], all row-major
  void (*matmul_nn)(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
  // C[m,n] += A[m,k] * B[n,k]^T   (lane-accumulated dot products)
  void (*matmul_nt)(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);
  // C[m,n] += A[k,m]^T * B[k,n]
  void (*matmul_tn)(const double* a, const double* b, double* c, size_t m, size_t k, size_t n);

  // Fused Adam update over one parameter buffer. g is pre-scaled by gscale.
  // m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g*g;
  // p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
  void (*adam_update)(double* p, double* m, double* v, const double* g, double gscale,
                      size_t n, double lr, double b1, double b2, double eps,
                      double bc1, double bc2);
};

// Backend selected at runtime: AVX2 when the CPU supports it, scalar
// otherwise. DSGSUM_KERNEL=scalar|avx2 forces a backend (avx2 fails if
// unsupported).
const Ops& ops();

const Ops& scalar_ops();

// Null when this build has no AVX2 translation unit or the CPU lacks AVX2.
const Ops* avx2_ops_if_available();

const char* backend_name();

// Test hook: override dispatch for the current process ("scalar", "avx2").
void force_backend(const std::string& name);

}  // namespace dsgsum::kernels
