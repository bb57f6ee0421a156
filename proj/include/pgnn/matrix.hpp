#ifndef PGNN_MATRIX_HPP
#define PGNN_MATRIX_HPP

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pgnn
{
  //! operand shapes do not satisfy an operation's contract
  class ShapeError : public std::invalid_argument
  {
  public:
    using std::invalid_argument::invalid_argument;
  };

  //! a computation produced NaN or Inf
  class NumericError : public std::runtime_error
  {
  public:
    using std::runtime_error::runtime_error;
  };

  struct Shape
  {
    std::size_t rows = 0;
    std::size_t cols = 0;

    friend bool operator==(const Shape&, const Shape&) = default;
  };

  std::string to_string(Shape s);

  //! dense row-major matrix of doubles
  class Matrix
  {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    Shape shape() const noexcept { return {rows_, cols_}; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

    bool all_finite() const noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
  };

  //! largest absolute elementwise difference; shapes must agree
  double max_abs_diff(const Matrix& a, const Matrix& b);
}

#endif // PGNN_MATRIX_HPP
