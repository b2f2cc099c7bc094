#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mmsada/kernels.hpp"

using namespace mmsada::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

// Plain triple loop, independent of both tables.
void reference_gemm(char op, std::size_t m, std::size_t n, std::size_t k, const std::vector<double>& a,
                    const std::vector<double>& b, std::vector<double>& c) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = op == 't' ? a[p * m + i] : a[i * k + p];
        const double bv = op == 'n' ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] += s;
    }
}

std::vector<const KernelTable*> tables() {
  std::vector<const KernelTable*> out{&scalar_kernels()};
  if (const KernelTable* t = avx2_kernels()) out.push_back(t);
  return out;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST(Kernels, ActiveTableIsOneOfTheKnownTables) {
  const KernelTable& t = active_kernels();
  EXPECT_TRUE(t.name == scalar_kernels().name || (avx2_kernels() && t.name == avx2_kernels()->name));
}

TEST(Kernels, GemmVariantsMatchReferenceOnOddShapes) {
  std::mt19937_64 rng(3);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 9, 13}, {8, 8, 8}, {33, 65, 31}, {2, 130, 5}};
  for (const KernelTable* t : tables()) {
    for (const auto& s : shapes) {
      const std::size_t m = s[0], n = s[1], k = s[2];
      const auto a = random_vec(m * k, rng);
      const auto bnn = random_vec(k * n, rng);
      const auto c0 = random_vec(m * n, rng);

      auto want = c0, got = c0;
      reference_gemm('x', m, n, k, a, bnn, want);
      t->gemm_nn(m, n, k, a.data(), bnn.data(), got.data());
      EXPECT_LT(max_abs_diff(want, got), 1e-12) << t->name << " nn " << m << "x" << n << "x" << k;

      const auto bnt = random_vec(n * k, rng);
      want = c0;
      got = c0;
      reference_gemm('n', m, n, k, a, bnt, want);
      t->gemm_nt(m, n, k, a.data(), bnt.data(), got.data());
      EXPECT_LT(max_abs_diff(want, got), 1e-12) << t->name << " nt";

      const auto atn = random_vec(k * m, rng);
      want = c0;
      got = c0;
      reference_gemm('t', m, n, k, atn, bnn, want);
      t->gemm_tn(m, n, k, atn.data(), bnn.data(), got.data());
      EXPECT_LT(max_abs_diff(want, got), 1e-12) << t->name << " tn";
    }
  }
}

TEST(Kernels, SimdMatchesScalarForDotAxpyAdam) {
  const KernelTable* simd = avx2_kernels();
  if (!simd) GTEST_SKIP() << "no SIMD table on this host";
  const KernelTable& ref = scalar_kernels();
  std::mt19937_64 rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 15u, 16u, 17u, 129u}) {
    const auto x = random_vec(n, rng), y = random_vec(n, rng);
    const double d1 = ref.dot(n, x.data(), y.data()), d2 = simd->dot(n, x.data(), y.data());
    EXPECT_NEAR(d1, d2, 1e-12 * (1.0 + std::abs(d1)));

    auto y1 = y, y2 = y;
    ref.axpy(n, 0.37, x.data(), y1.data());
    simd->axpy(n, 0.37, x.data(), y2.data());
    EXPECT_LT(max_abs_diff(y1, y2), 1e-15);

    AdamParams p{1e-2, 0.9, 0.999, 1e-8, 1e-7, 1.0 - 0.9, 1.0 - 0.999};
    auto p1 = x, p2 = x;
    std::vector<double> m1(n, 0.1), m2(n, 0.1), v1(n, 0.2), v2(n, 0.2);
    ref.adam_update(n, p, y.data(), p1.data(), m1.data(), v1.data());
    simd->adam_update(n, p, y.data(), p2.data(), m2.data(), v2.data());
    EXPECT_LT(max_abs_diff(p1, p2), 1e-14);
    EXPECT_LT(max_abs_diff(m1, m2), 1e-15);
    EXPECT_LT(max_abs_diff(v1, v2), 1e-15);
  }
}

TEST(Kernels, AdamFirstStepMovesByLearningRateAgainstGradientSign) {
  for (const KernelTable* t : tables()) {
    const double lr = 1e-3;
    std::vector<double> param{1.0, -2.0, 0.5};
    const std::vector<double> grad{0.3, -4.0, 1e-3};
    std::vector<double> m(3, 0.0), v(3, 0.0);
    AdamParams p{lr, 0.9, 0.999, 1e-8, 0.0, 1.0 - 0.9, 1.0 - 0.999};
    t->adam_update(3, p, grad.data(), param.data(), m.data(), v.data());
    // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
    EXPECT_NEAR(param[0], 1.0 - lr * 0.3 / (0.3 + 1e-8), 1e-15);
    EXPECT_NEAR(param[1], -2.0 + lr * 4.0 / (4.0 + 1e-8), 1e-15);
    EXPECT_NEAR(param[2], 0.5 - lr * 1e-3 / (1e-3 + 1e-8), 1e-15);
  }
}

TEST(Kernels, AdamZeroGradientZeroStateLeavesParameter) {
  for (const KernelTable* t : tables()) {
    std::vector<double> param{1.5, -0.25};
    const std::vector<double> grad{0.0, 0.0};
    std::vector<double> m(2, 0.0), v(2, 0.0);
    AdamParams p{1e-2, 0.9, 0.999, 1e-8, 0.0, 0.1, 0.001};
    t->adam_update(2, p, grad.data(), param.data(), m.data(), v.data());
    EXPECT_EQ(param[0], 1.5);
    EXPECT_EQ(param[1], -0.25);
  }
}
