#ifndef PGNN_TENSOR_HPP
#define PGNN_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pgnn/edge.hpp"
#include "pgnn/matrix.hpp"

//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A Tape records operations in creation order, which is a topological order
//! by construction. Tensors are small handles into a tape. Build a fresh tape
//! for every forward pass; parameters enter as leaves and their gradients are
//! read back after Tape::backward.
namespace pgnn
{
  class Tape;

  //! backward was requested twice, or on something that is not a scalar loss
  class TapeError : public std::logic_error
  {
  public:
    using std::logic_error::logic_error;
  };

  class Tensor
  {
  public:
    Tensor() = default;

    const Matrix& value() const;
    //! shared handle to the value, valid beyond the tape's lifetime
    std::shared_ptr<const Matrix> shared_value() const;
    Shape shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    bool requires_grad() const;
    bool has_grad() const;
    //! gradient after Tape::backward; throws if none was populated
    const Matrix& grad() const;
    Tape& tape() const;
    bool valid() const noexcept { return tape_ != nullptr; }

  private:
    friend class Tape;
    Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
  };

  //! Backward rule of a recorded op: given dL/d(output) and which inputs need a
  //! gradient, return one matrix per input (an empty matrix where not needed).
  using BackwardFn = std::function<std::vector<Matrix>(const Matrix& grad_out, std::span<const bool> needs)>;

  class Tape
  {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor leaf(Matrix value, bool requires_grad = false);
    Tensor leaf(std::shared_ptr<const Matrix> value, bool requires_grad = false);

    //! record an op; the output requires grad iff any input does
    Tensor record(std::string_view op, Matrix value, std::vector<Tensor> inputs, BackwardFn backward);

    //! populate gradients of every requires-grad tensor reachable from a 1x1 loss
    void backward(const Tensor& loss);
    //! drop all gradients so backward may run again
    void reset();

    std::size_t size() const noexcept { return nodes_.size(); }

    //! smallest distance to a kink seen by a piecewise op on this tape: |x| for
    //! relu, | |row| - r | for clip_rows_l2 (infinity if none)
    double kink_margin() const noexcept { return kink_margin_; }
    void note_kink_margin(double margin) noexcept { kink_margin_ = std::min(kink_margin_, margin); }

  private:
    friend class Tensor;

    struct Node
    {
      std::shared_ptr<const Matrix> value;
      bool requires_grad = false;
      std::optional<Matrix> grad;
      std::vector<std::size_t> inputs;
      BackwardFn backward;
    };

    const Node& node(const Tensor& t) const;

    std::vector<Node> nodes_;
    bool backward_done_ = false;
    double kink_margin_ = std::numeric_limits<double>::infinity();
  };

  // Recorded operations. Operands must live on the same tape.

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul_elem(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double factor);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor relu(const Tensor& a);
  Tensor sigmoid(const Tensor& a);
  Tensor tanh(const Tensor& a);
  //! sum of all entries as a 1x1 tensor
  Tensor sum(const Tensor& a);
  //! same value, no gradient flows back
  Tensor detach(const Tensor& a);

  //! mean softmax cross-entropy over the masked rows, stabilized by the row max
  Tensor masked_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const std::size_t> mask);

  //! rows whose L2 norm exceeds radius are rescaled onto the sphere of that radius
  Tensor clip_rows_l2(const Tensor& a, double radius);

  //! (k x 1) column of inner products z_u . z_v for each pair
  Tensor pair_dot(const Tensor& z, std::span<const Edge> pairs);

  //! n x n symmetric matrix with values[k] written at (u_k, v_k) and (v_k, u_k)
  Tensor scatter_pairs(const Tensor& values, std::span<const Edge> pairs, std::size_t n);
}

#endif // PGNN_TENSOR_HPP
