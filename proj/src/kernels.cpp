#include "pgnn/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace pgnn::kernels
{
  namespace
  {
    void require(bool ok, const char* op, Shape a, Shape b)
    {
      if (!ok)
        throw ShapeError(std::string(op) + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
    }

    constexpr std::size_t tile = 32;
  }

  Matrix matmul(const Matrix& a, const Matrix& b)
  {
    require(a.cols() == b.rows(), "matmul", a.shape(), b.shape());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix out(m, n);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.values().data();

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
    {
      double* orow = po + i * n;
      const double* arow = pa + i * k;
      for (std::size_t p = 0; p < k; ++p)
      {
        const double aip = arow[p];
        if (aip == 0.0)
          continue;
        const double* brow = pb + p * n;
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j)
          orow[j] += aip * brow[j];
      }
    }
    return out;
  }

  Matrix transpose(const Matrix& a)
  {
    const std::size_t m = a.rows(), n = a.cols();
    Matrix out(n, m);
    const double* pa = a.values().data();
    double* po = out.values().data();

#pragma omp parallel for schedule(static)
    for (std::int64_t jb = 0; jb < static_cast<std::int64_t>(n); jb += tile)
    {
      for (std::size_t ib = 0; ib < m; ib += tile)
      {
        const std::size_t jmax = std::min<std::size_t>(jb + tile, n);
        const std::size_t imax = std::min(ib + tile, m);
        for (std::size_t j = jb; j < jmax; ++j)
          for (std::size_t i = ib; i < imax; ++i)
            po[j * m + i] = pa[i * n + j];
      }
    }
    return out;
  }

  Matrix matmul_tn(const Matrix& a, const Matrix& b)
  {
    require(a.rows() == b.rows(), "matmul_tn", a.shape(), b.shape());
    return matmul(transpose(a), b);
  }

  Matrix matmul_nt(const Matrix& a, const Matrix& b)
  {
    require(a.cols() == b.cols(), "matmul_nt", a.shape(), b.shape());
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Matrix out(m, n);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    double* po = out.values().data();

#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i)
    {
      const double* arow = pa + i * k;
      for (std::size_t j = 0; j < n; ++j)
      {
        const double* brow = pb + j * k;
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p)
          acc += arow[p] * brow[p];
        po[i * n + j] = acc;
      }
    }
    return out;
  }
}
