#include "pgnn/kernels.hpp"

namespace pgnn::kernels::reference
{
  Matrix matmul(const Matrix& a, const Matrix& b)
  {
    if (a.cols() != b.rows())
      throw ShapeError("reference::matmul: " + to_string(a.shape()) + " * " + to_string(b.shape()));
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j)
      {
        double acc = 0.0;
        for (std::size_t p = 0; p < a.cols(); ++p)
          acc += a(i, p) * b(p, j);
        out(i, j) = acc;
      }
    return out;
  }

  Matrix transpose(const Matrix& a)
  {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < a.cols(); ++j)
        out(j, i) = a(i, j);
    return out;
  }

  Matrix matmul_tn(const Matrix& a, const Matrix& b)
  {
    if (a.rows() != b.rows())
      throw ShapeError("reference::matmul_tn: " + to_string(a.shape()) + " * " + to_string(b.shape()));
    Matrix out(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.cols(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j)
      {
        double acc = 0.0;
        for (std::size_t p = 0; p < a.rows(); ++p)
          acc += a(p, i) * b(p, j);
        out(i, j) = acc;
      }
    return out;
  }

  Matrix matmul_nt(const Matrix& a, const Matrix& b)
  {
    if (a.cols() != b.cols())
      throw ShapeError("reference::matmul_nt: " + to_string(a.shape()) + " * " + to_string(b.shape()));
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < b.rows(); ++j)
      {
        double acc = 0.0;
        for (std::size_t p = 0; p < a.cols(); ++p)
          acc += a(i, p) * b(j, p);
        out(i, j) = acc;
      }
    return out;
  }
}
