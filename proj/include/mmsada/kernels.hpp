#pragma once

// Dense float64 inner loops used by the differentiable core and the optimizer.
//
// Every kernel has a scalar reference implementation. On x86-64 an AVX2/FMA
// variant is compiled into its own translation unit and picked at startup when
// the CPU reports both features. Set MMSADA_KERNELS=scalar to force the
// reference path (MMSADA_KERNELS=avx2 is honoured only if the CPU supports it).
//
// All matrices are row-major and all products accumulate into C.

#include <cstddef>
#include <string_view>

namespace mmsada::kernels {

struct AdamParams {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double weight_decay;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  std::string_view name;
  // C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  // C[m x n] += A[k x m]^T * B[k x n]
  void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  const double* b, double* c);
  double (*dot)(std::size_t n, const double* x, const double* y);
  // y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  // One bias-corrected Adam update with L2 weight decay folded into the gradient.
  void (*adam_update)(std::size_t n, const AdamParams& p, const double* grad,
                      double* param, double* m, double* v);
};

const KernelTable& scalar_kernels();
// nullptr when the variant was not compiled in or the CPU lacks the features.
const KernelTable* avx2_kernels();
// Table selected at first use; fixed for the lifetime of the process.
const KernelTable& active_kernels();

inline void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  active_kernels().gemm_nn(m, n, k, a, b, c);
}
inline void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  active_kernels().gemm_nt(m, n, k, a, b, c);
}
inline void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a,
                    const double* b, double* c) {
  active_kernels().gemm_tn(m, n, k, a, b, c);
}
inline double dot(std::size_t n, const double* x, const double* y) {
  return active_kernels().dot(n, x, y);
}
inline void axpy(std::size_t n, double alpha, const double* x, double* y) {
  active_kernels().axpy(n, alpha, x, y);
}
inline void adam_update(std::size_t n, const AdamParams& p, const double* grad,
                        double* param, double* m, double* v) {
  active_kernels().adam_update(n, p, grad, param, m, v);
}

namespace detail {
const KernelTable& scalar_table();
const KernelTable& avx2_table();
}  // namespace detail

}  // namespace mmsada::kernels
