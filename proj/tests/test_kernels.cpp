#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ckd/kernels.hpp"

using ckd::kernels::AdamCoeffs;
using ckd::kernels::KernelTable;

namespace {

std::vector<double> random_vec(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = d(gen);
  return v;
}

const KernelTable* simd_or_skip() {
  const KernelTable* t = ckd::kernels::avx2();
  return t;
}

// Lengths cover empty, sub-vector tails and multiple unrolled blocks.
const std::size_t kLengths[] = {0, 1, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 64, 100, 4096};

}  // namespace

TEST(Kernels, ActiveTableIsKnown) {
  const auto& t = ckd::kernels::active();
  EXPECT_TRUE(t.name == "scalar" || t.name == "avx2");
}

TEST(Kernels, ScalarDotMatchesDefinition) {
  const double a[] = {1, 2, 3};
  const double b[] = {4, -5, 6};
  EXPECT_EQ(ckd::kernels::scalar().dot(a, b, 3), 12.0);
  EXPECT_EQ(ckd::kernels::scalar().sum_squares(a, 3), 14.0);
}

TEST(KernelEquivalence, DotAndSumSquares) {
  const KernelTable* simd = simd_or_skip();
  if (simd == nullptr) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 gen(1);
  for (std::size_t n : kLengths) {
    const auto a = random_vec(gen, n);
    const auto b = random_vec(gen, n);
    const double ref = ckd::kernels::scalar().dot(a.data(), b.data(), n);
    double scale = 0.0;
    for (std::size_t k = 0; k < n; ++k) scale += std::abs(a[k] * b[k]);
    EXPECT_NEAR(simd->dot(a.data(), b.data(), n), ref, 1e-14 * (scale + 1.0)) << "n=" << n;
    const double ss = ckd::kernels::scalar().sum_squares(a.data(), n);
    EXPECT_NEAR(simd->sum_squares(a.data(), n), ss, 1e-14 * (ss + 1.0)) << "n=" << n;
  }
}

TEST(KernelEquivalence, ElementwiseKernelsAreBitIdentical) {
  const KernelTable* simd = simd_or_skip();
  if (simd == nullptr) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 gen(2);
  for (std::size_t n : kLengths) {
    const auto x = random_vec(gen, n);
    const auto y0 = random_vec(gen, n);
    auto y_ref = y0, y_simd = y0;
    ckd::kernels::scalar().axpy(0.37, x.data(), y_ref.data(), n);
    simd->axpy(0.37, x.data(), y_simd.data(), n);
    EXPECT_EQ(y_ref, y_simd) << "axpy n=" << n;

    std::vector<double> d_ref(n), d_simd(n);
    ckd::kernels::scalar().sub(x.data(), y0.data(), d_ref.data(), n);
    simd->sub(x.data(), y0.data(), d_simd.data(), n);
    EXPECT_EQ(d_ref, d_simd) << "sub n=" << n;
  }
}

TEST(KernelEquivalence, GemvAndGer) {
  const KernelTable* simd = simd_or_skip();
  if (simd == nullptr) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 gen(3);
  for (std::size_t rows : {1u, 4u, 7u, 64u})
    for (std::size_t cols : {1u, 5u, 8u, 33u}) {
      const auto w = random_vec(gen, rows * cols);
      const auto x = random_vec(gen, cols);
      std::vector<double> y_ref(rows), y_simd(rows);
      ckd::kernels::scalar().gemv(w.data(), rows, cols, x.data(), y_ref.data());
      simd->gemv(w.data(), rows, cols, x.data(), y_simd.data());
      for (std::size_t r = 0; r < rows; ++r) EXPECT_NEAR(y_simd[r], y_ref[r], 1e-12);

      const auto u = random_vec(gen, rows);
      auto g_ref = w, g_simd = w;
      ckd::kernels::scalar().ger(-0.5, u.data(), rows, x.data(), cols, g_ref.data());
      simd->ger(-0.5, u.data(), rows, x.data(), cols, g_simd.data());
      EXPECT_EQ(g_ref, g_simd);
    }
}

TEST(KernelEquivalence, AdamIsBitIdentical) {
  const KernelTable* simd = simd_or_skip();
  if (simd == nullptr) GTEST_SKIP() << "AVX2 not available";
  std::mt19937_64 gen(4);
  for (std::size_t n : kLengths) {
    auto p_ref = random_vec(gen, n), p_simd = p_ref;
    std::vector<double> m_ref(n, 0.0), v_ref(n, 0.0), m_simd(n, 0.0), v_simd(n, 0.0);
    for (int step = 1; step <= 5; ++step) {
      const auto g = random_vec(gen, n);
      const AdamCoeffs c{1e-2, 0.9, 0.999, 1e-8, 1.0 - std::pow(0.9, step),
                         1.0 - std::pow(0.999, step)};
      ckd::kernels::scalar().adam(p_ref.data(), g.data(), m_ref.data(), v_ref.data(), n, c);
      simd->adam(p_simd.data(), g.data(), m_simd.data(), v_simd.data(), n, c);
    }
    EXPECT_EQ(p_ref, p_simd) << "n=" << n;
    EXPECT_EQ(v_ref, v_simd) << "n=" << n;
  }
}
