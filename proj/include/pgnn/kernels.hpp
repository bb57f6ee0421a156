#ifndef PGNN_KERNELS_HPP
#define PGNN_KERNELS_HPP

#include "pgnn/matrix.hpp"

//! Dense matrix-product kernels.
//!
//! The functions in pgnn::kernels are OpenMP-parallel over output rows. Each
//! output row is accumulated by exactly one thread in a fixed order, so results
//! are bitwise identical for any thread count. Zero entries of the left operand
//! are skipped, which makes products with sparse-in-practice operands (features,
//! normalized adjacency) cheap without a separate sparse format.
//!
//! pgnn::kernels::reference holds straightforward serial triple loops used as
//! the test oracle and as the benchmark baseline.
namespace pgnn::kernels
{
  //! a * b
  Matrix matmul(const Matrix& a, const Matrix& b);
  //! transpose(a) * b
  Matrix matmul_tn(const Matrix& a, const Matrix& b);
  //! a * transpose(b)
  Matrix matmul_nt(const Matrix& a, const Matrix& b);
  Matrix transpose(const Matrix& a);

  namespace reference
  {
    Matrix matmul(const Matrix& a, const Matrix& b);
    Matrix matmul_tn(const Matrix& a, const Matrix& b);
    Matrix matmul_nt(const Matrix& a, const Matrix& b);
    Matrix transpose(const Matrix& a);
  }
}

#endif // PGNN_KERNELS_HPP
