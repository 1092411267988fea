#include "ckd/kernels.hpp"

#include <cmath>

namespace ckd::kernels {
namespace {

double dot_ref(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * b[k];
  return s;
}

double sum_squares_ref(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t k = 0; k < n; ++k) s += a[k] * a[k];
  return s;
}

void axpy_ref(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

void sub_ref(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] - b[k];
}

void gemv_ref(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_ref(w + r * cols, x, cols);
}

void ger_ref(double alpha, const double* u, std::size_t rows, const double* v, std::size_t cols,
             double* w) {
  for (std::size_t r = 0; r < rows; ++r) axpy_ref(alpha * u[r], v, w + r * cols, cols);
}

void adam_ref(double* param, const double* grad, double* m, double* v, std::size_t n,
              const AdamCoeffs& c) {
  const double one_m_b1 = 1.0 - c.beta1;
  const double one_m_b2 = 1.0 - c.beta2;
  for (std::size_t k = 0; k < n; ++k) {
    const double g = grad[k];
    m[k] = c.beta1 * m[k] + one_m_b1 * g;
    v[k] = c.beta2 * v[k] + one_m_b2 * (g * g);
    const double mhat = m[k] / c.bias1;
    const double vhat = v[k] / c.bias2;
    param[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
}

}  // namespace

const KernelTable& scalar() {
  static const KernelTable table{"scalar", dot_ref,  sum_squares_ref, axpy_ref,
                                 sub_ref,  gemv_ref, ger_ref,         adam_ref};
  return table;
}

}  // namespace ckd::kernels
