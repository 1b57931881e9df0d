#pragma once

#include <cstddef>

namespace ctorecon::linalg {

/// Row-major C (m x n) = op(A) (m x k) * op(B) (k x n), overwriting C.
/// Runs single-threaded so results do not depend on the worker count.
void gemm(bool transA, bool transB, std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t lda,
          const double* b, std::size_t ldb, double* c, std::size_t ldc);

}  // namespace ctorecon::linalg
