#include "pgnn/matrix.hpp"

#include <algorithm>
#include <cmath>

namespace pgnn
{
  std::string to_string(Shape s)
  {
    return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
  }

  Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
  {
  }

  Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values))
  {
    if (data_.size() != rows * cols)
      throw ShapeError("matrix data length " + std::to_string(data_.size()) + " does not match " +
                       to_string({rows, cols}));
  }

  Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows)
  {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows)
    {
      if (row.size() != c)
        throw ShapeError("ragged row in Matrix::from_rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
  }

  Matrix Matrix::identity(std::size_t n)
  {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
      m(i, i) = 1.0;
    return m;
  }

  bool Matrix::all_finite() const noexcept
  {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  double max_abs_diff(const Matrix& a, const Matrix& b)
  {
    if (a.shape() != b.shape())
      throw ShapeError("max_abs_diff: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k)
      worst = std::max(worst, std::abs(a.values()[k] - b.values()[k]));
    return worst;
  }
}
