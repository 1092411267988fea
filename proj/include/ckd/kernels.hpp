#pragma once
// Dense double-precision inner loops used by scoring, backprop and Adam.
//
// Every kernel has a scalar reference implementation and, on x86-64 builds
// with compiler support, an AVX2/FMA variant. The variant is chosen once at
// first use from the CPU feature bits; setting CKD_SIMD=scalar in the
// environment forces the reference table.

#include <cstddef>
#include <span>
#include <string_view>

namespace ckd::kernels {

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_squares)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a - b
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  // y = W x, W row-major rows x cols
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // W += alpha * u v^T, W row-major rows x cols
  void (*ger)(double alpha, const double* u, std::size_t rows, const double* v, std::size_t cols,
              double* w);
  void (*adam)(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamCoeffs& c);
};

const KernelTable& scalar();
// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2();
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double sum_squares(std::span<const double> a) {
  return active().sum_squares(a.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  active().sub(a.data(), b.data(), out.data(), a.size());
}

}  // namespace ckd::kernels
