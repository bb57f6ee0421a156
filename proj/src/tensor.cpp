#include "pgnn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "pgnn/kernels.hpp"

namespace pgnn
{
  // ---------------------------------------------------------------- Tensor

  const Matrix& Tensor::value() const { return *tape().node(*this).value; }

  bool Tensor::requires_grad() const { return tape().node(*this).requires_grad; }

  bool Tensor::has_grad() const { return tape().node(*this).grad.has_value(); }

  const Matrix& Tensor::grad() const
  {
    const auto& n = tape().node(*this);
    if (!n.grad)
      throw TapeError("tensor has no gradient; was it reachable from the loss and requires_grad?");
    return *n.grad;
  }

  std::shared_ptr<const Matrix> Tensor::shared_value() const { return tape().node(*this).value; }

  Tape& Tensor::tape() const
  {
    if (!tape_)
      throw TapeError("use of a default-constructed Tensor");
    return *tape_;
  }

  // ------------------------------------------------------------------ Tape

  const Tape::Node& Tape::node(const Tensor& t) const
  {
    if (t.tape_ != this || t.id_ >= nodes_.size())
      throw TapeError("tensor does not belong to this tape");
    return nodes_[t.id_];
  }

  Tensor Tape::leaf(Matrix value, bool requires_grad)
  {
    return leaf(std::make_shared<const Matrix>(std::move(value)), requires_grad);
  }

  Tensor Tape::leaf(std::shared_ptr<const Matrix> value, bool requires_grad)
  {
    if (!value->all_finite())
      throw NumericError("leaf tensor contains non-finite values");
    nodes_.push_back(Node{std::move(value), requires_grad, std::nullopt, {}, {}});
    return Tensor(this, nodes_.size() - 1);
  }

  Tensor Tape::record(std::string_view op, Matrix value, std::vector<Tensor> inputs, BackwardFn backward)
  {
    if (!value.all_finite())
      throw NumericError(std::string(op) + " produced non-finite values");
    Node n;
    n.value = std::make_shared<const Matrix>(std::move(value));
    for (const auto& in : inputs)
    {
      node(in);
      n.inputs.push_back(in.id_);
      n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
    }
    if (n.requires_grad)
      n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Tensor(this, nodes_.size() - 1);
  }

  void Tape::backward(const Tensor& loss)
  {
    const Node& root = node(loss);
    if (root.value->shape() != Shape{1, 1})
      throw TapeError("backward requires a 1x1 loss, got " + to_string(root.value->shape()));
    if (backward_done_)
      throw TapeError("backward called twice without reset");
    backward_done_ = true;

    const std::size_t last = loss.id_;
    std::vector<bool> reachable(last + 1, false);
    reachable[last] = true;
    for (std::size_t id = last + 1; id-- > 0;)
      if (reachable[id])
        for (std::size_t in : nodes_[id].inputs)
          reachable[in] = true;

    if (!root.requires_grad)
      return;
    nodes_[last].grad = Matrix(1, 1, 1.0);

    for (std::size_t id = last + 1; id-- > 0;)
    {
      Node& n = nodes_[id];
      if (!reachable[id] || !n.requires_grad)
        continue;
      if (!n.grad)
        n.grad = Matrix(n.value->rows(), n.value->cols());
      if (!n.backward)
        continue;

      std::vector<bool> needs_vec(n.inputs.size());
      for (std::size_t k = 0; k < n.inputs.size(); ++k)
        needs_vec[k] = nodes_[n.inputs[k]].requires_grad;
      std::unique_ptr<bool[]> needs(new bool[needs_vec.size()]);
      std::copy(needs_vec.begin(), needs_vec.end(), needs.get());

      std::vector<Matrix> grads = n.backward(*n.grad, std::span<const bool>(needs.get(), needs_vec.size()));
      for (std::size_t k = 0; k < n.inputs.size(); ++k)
      {
        if (!needs_vec[k])
          continue;
        Node& in = nodes_[n.inputs[k]];
        Matrix& g = grads.at(k);
        if (g.shape() != in.value->shape())
          throw ShapeError("backward rule returned gradient of shape " + to_string(g.shape()) + " for input " +
                           to_string(in.value->shape()));
        if (!in.grad)
          in.grad = std::move(g);
        else
        {
          auto dst = in.grad->values();
          auto src = g.values();
          for (std::size_t e = 0; e < dst.size(); ++e)
            dst[e] += src[e];
        }
      }
    }
  }

  void Tape::reset()
  {
    for (auto& n : nodes_)
      n.grad.reset();
    backward_done_ = false;
  }

  // ------------------------------------------------------------------- ops

  namespace
  {
    Tape& common_tape(const Tensor& a, const Tensor& b)
    {
      if (&a.tape() != &b.tape())
        throw TapeError("operands live on different tapes");
      return a.tape();
    }

    void require_same_shape(const char* op, const Tensor& a, const Tensor& b)
    {
      if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    }

    template <class F>
    Matrix map(const Matrix& a, F f)
    {
      Matrix out(a.rows(), a.cols());
      auto src = a.values();
      auto dst = out.values();
      for (std::size_t k = 0; k < src.size(); ++k)
        dst[k] = f(src[k]);
      return out;
    }

    template <class F>
    Matrix zip(const Matrix& a, const Matrix& b, F f)
    {
      Matrix out(a.rows(), a.cols());
      auto x = a.values();
      auto y = b.values();
      auto dst = out.values();
      for (std::size_t k = 0; k < x.size(); ++k)
        dst[k] = f(x[k], y[k]);
      return out;
    }

    std::shared_ptr<const Matrix> shared_value(const Tensor& t) { return t.shared_value(); }
  }

  Tensor matmul(const Tensor& a, const Tensor& b)
  {
    Tape& tape = common_tape(a, b);
    if (a.cols() != b.rows())
      throw ShapeError("matmul: " + to_string(a.shape()) + " * " + to_string(b.shape()));
    auto av = shared_value(a);
    auto bv = shared_value(b);
    return tape.record("matmul", kernels::matmul(*av, *bv), {a, b},
                       [av, bv](const Matrix& g, std::span<const bool> needs) {
                         std::vector<Matrix> out(2);
                         if (needs[0])
                           out[0] = kernels::matmul_nt(g, *bv);
                         if (needs[1])
                           out[1] = kernels::matmul_tn(*av, g);
                         return out;
                       });
  }

  Tensor add(const Tensor& a, const Tensor& b)
  {
    Tape& tape = common_tape(a, b);
    require_same_shape("add", a, b);
    return tape.record("add", zip(a.value(), b.value(), std::plus<>{}), {a, b},
                       [](const Matrix& g, std::span<const bool> needs) {
                         std::vector<Matrix> out(2);
                         if (needs[0])
                           out[0] = g;
                         if (needs[1])
                           out[1] = g;
                         return out;
                       });
  }

  Tensor sub(const Tensor& a, const Tensor& b)
  {
    Tape& tape = common_tape(a, b);
    require_same_shape("sub", a, b);
    return tape.record("sub", zip(a.value(), b.value(), std::minus<>{}), {a, b},
                       [](const Matrix& g, std::span<const bool> needs) {
                         std::vector<Matrix> out(2);
                         if (needs[0])
                           out[0] = g;
                         if (needs[1])
                           out[1] = map(g, [](double x) { return -x; });
                         return out;
                       });
  }

  Tensor mul_elem(const Tensor& a, const Tensor& b)
  {
    Tape& tape = common_tape(a, b);
    require_same_shape("mul_elem", a, b);
    auto av = shared_value(a);
    auto bv = shared_value(b);
    return tape.record("mul_elem", zip(*av, *bv, std::multiplies<>{}), {a, b},
                       [av, bv](const Matrix& g, std::span<const bool> needs) {
                         std::vector<Matrix> out(2);
                         if (needs[0])
                           out[0] = zip(g, *bv, std::multiplies<>{});
                         if (needs[1])
                           out[1] = zip(g, *av, std::multiplies<>{});
                         return out;
                       });
  }

  Tensor scale(const Tensor& a, double factor)
  {
    return a.tape().record("scale", map(a.value(), [factor](double x) { return factor * x; }), {a},
                           [factor](const Matrix& g, std::span<const bool>) {
                             return std::vector<Matrix>{map(g, [factor](double x) { return factor * x; })};
                           });
  }

  Tensor concat_cols(const Tensor& a, const Tensor& b)
  {
    Tape& tape = common_tape(a, b);
    if (a.rows() != b.rows())
      throw ShapeError("concat_cols: row counts differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
    const std::size_t n = a.rows(), ca = a.cols(), cb = b.cols();
    Matrix out(n, ca + cb);
    for (std::size_t i = 0; i < n; ++i)
    {
      std::copy_n(a.value().row(i).begin(), ca, out.row(i).begin());
      std::copy_n(b.value().row(i).begin(), cb, out.row(i).begin() + static_cast<std::ptrdiff_t>(ca));
    }
    return tape.record("concat_cols", std::move(out), {a, b},
                       [n, ca, cb](const Matrix& g, std::span<const bool> needs) {
                         std::vector<Matrix> grads(2);
                         if (needs[0])
                         {
                           grads[0] = Matrix(n, ca);
                           for (std::size_t i = 0; i < n; ++i)
                             std::copy_n(g.row(i).begin(), ca, grads[0].row(i).begin());
                         }
                         if (needs[1])
                         {
                           grads[1] = Matrix(n, cb);
                           for (std::size_t i = 0; i < n; ++i)
                             std::copy_n(g.row(i).begin() + static_cast<std::ptrdiff_t>(ca), cb,
                                         grads[1].row(i).begin());
                         }
                         return grads;
                       });
  }

  Tensor relu(const Tensor& a)
  {
    auto av = shared_value(a);
    double margin = std::numeric_limits<double>::infinity();
    for (double x : av->values())
      margin = std::min(margin, std::abs(x));
    a.tape().note_kink_margin(margin);
    return a.tape().record("relu", map(*av, [](double x) { return x > 0.0 ? x : 0.0; }), {a},
                           [av](const Matrix& g, std::span<const bool>) {
                             // subgradient at 0 is 0
                             return std::vector<Matrix>{zip(g, *av, [](double gi, double x) { return x > 0.0 ? gi : 0.0; })};
                           });
  }

  Tensor sigmoid(const Tensor& a)
  {
    Matrix y = map(a.value(), [](double x) {
      if (x >= 0.0)
        return 1.0 / (1.0 + std::exp(-x));
      const double e = std::exp(x);
      return e / (1.0 + e);
    });
    auto yv = std::make_shared<const Matrix>(y);
    return a.tape().record("sigmoid", std::move(y), {a}, [yv](const Matrix& g, std::span<const bool>) {
      return std::vector<Matrix>{zip(g, *yv, [](double gi, double s) { return gi * s * (1.0 - s); })};
    });
  }

  Tensor tanh(const Tensor& a)
  {
    Matrix y = map(a.value(), [](double x) { return std::tanh(x); });
    auto yv = std::make_shared<const Matrix>(y);
    return a.tape().record("tanh", std::move(y), {a}, [yv](const Matrix& g, std::span<const bool>) {
      return std::vector<Matrix>{zip(g, *yv, [](double gi, double t) { return gi * (1.0 - t * t); })};
    });
  }

  Tensor sum(const Tensor& a)
  {
    double total = 0.0;
    for (double v : a.value().values())
      total += v;
    const Shape s = a.shape();
    return a.tape().record("sum", Matrix(1, 1, total), {a}, [s](const Matrix& g, std::span<const bool>) {
      return std::vector<Matrix>{Matrix(s.rows, s.cols, g(0, 0))};
    });
  }

  Tensor detach(const Tensor& a)
  {
    return a.tape().leaf(a.value(), false);
  }

  Tensor masked_cross_entropy(const Tensor& logits, std::span<const int> labels, std::span<const std::size_t> mask)
  {
    const Matrix& z = logits.value();
    const std::size_t classes = z.cols();
    if (mask.empty())
      throw std::invalid_argument("masked_cross_entropy: empty mask");
    if (labels.size() != z.rows())
      throw ShapeError("masked_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                       std::to_string(z.rows()) + " rows");

    Matrix probs(mask.size(), classes);
    double total = 0.0;
    for (std::size_t m = 0; m < mask.size(); ++m)
    {
      const std::size_t i = mask[m];
      if (i >= z.rows())
        throw std::out_of_range("masked_cross_entropy: mask index " + std::to_string(i) + " out of range");
      const int y = labels[i];
      if (y < 0 || static_cast<std::size_t>(y) >= classes)
        throw std::out_of_range("masked_cross_entropy: label " + std::to_string(y) + " out of range");
      auto row = z.row(i);
      const double shift = *std::max_element(row.begin(), row.end());
      double denom = 0.0;
      for (std::size_t c = 0; c < classes; ++c)
      {
        probs(m, c) = std::exp(row[c] - shift);
        denom += probs(m, c);
      }
      for (std::size_t c = 0; c < classes; ++c)
        probs(m, c) /= denom;
      total += std::log(denom) - (row[static_cast<std::size_t>(y)] - shift);
    }
    const double count = static_cast<double>(mask.size());

    std::vector<std::size_t> rows(mask.begin(), mask.end());
    std::vector<int> targets(rows.size());
    for (std::size_t m = 0; m < rows.size(); ++m)
      targets[m] = labels[rows[m]];
    const Shape s = z.shape();

    return logits.tape().record(
      "masked_cross_entropy", Matrix(1, 1, total / count), {logits},
      [probs = std::move(probs), rows = std::move(rows), targets = std::move(targets), s, count](
        const Matrix& g, std::span<const bool>) {
        Matrix grad(s.rows, s.cols);
        const double w = g(0, 0) / count;
        for (std::size_t m = 0; m < rows.size(); ++m)
        {
          auto dst = grad.row(rows[m]);
          for (std::size_t c = 0; c < s.cols; ++c)
            dst[c] += w * probs(m, c);
          dst[static_cast<std::size_t>(targets[m])] -= w;
        }
        return std::vector<Matrix>{std::move(grad)};
      });
  }

  Tensor clip_rows_l2(const Tensor& a, double radius)
  {
    if (!(radius > 0.0))
      throw std::invalid_argument("clip_rows_l2: radius must be positive");
    const Matrix& x = a.value();
    Matrix y = x;
    std::vector<double> norms(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
    {
      double sq = 0.0;
      for (double v : x.row(i))
        sq += v * v;
      norms[i] = std::sqrt(sq);
      a.tape().note_kink_margin(std::abs(norms[i] - radius));
      if (norms[i] > radius)
        for (double& v : y.row(i))
          v *= radius / norms[i];
    }
    auto xv = shared_value(a);
    return a.tape().record("clip_rows_l2", std::move(y), {a},
                           [xv, norms = std::move(norms), radius](const Matrix& g, std::span<const bool>) {
                             Matrix grad = g;
                             for (std::size_t i = 0; i < g.rows(); ++i)
                             {
                               const double nrm = norms[i];
                               if (nrm <= radius)
                                 continue;
                               auto r = xv->row(i);
                               auto gi = g.row(i);
                               double rg = 0.0;
                               for (std::size_t j = 0; j < r.size(); ++j)
                                 rg += r[j] * gi[j];
                               auto dst = grad.row(i);
                               for (std::size_t j = 0; j < r.size(); ++j)
                                 dst[j] = radius / nrm * (gi[j] - r[j] * rg / (nrm * nrm));
                             }
                             return std::vector<Matrix>{std::move(grad)};
                           });
  }

  Tensor pair_dot(const Tensor& z, std::span<const Edge> pairs)
  {
    const Matrix& zv = z.value();
    Matrix out(pairs.size(), 1);
    for (std::size_t k = 0; k < pairs.size(); ++k)
    {
      const auto [u, v] = pairs[k];
      if (u >= zv.rows() || v >= zv.rows())
        throw std::out_of_range("pair_dot: node index out of range");
      double acc = 0.0;
      for (std::size_t j = 0; j < zv.cols(); ++j)
        acc += zv(u, j) * zv(v, j);
      out(k, 0) = acc;
    }
    auto keep = shared_value(z);
    std::vector<Edge> p(pairs.begin(), pairs.end());
    return z.tape().record("pair_dot", std::move(out), {z},
                           [keep, p = std::move(p)](const Matrix& g, std::span<const bool>) {
                             const Matrix& zm = *keep;
                             Matrix grad(zm.rows(), zm.cols());
                             for (std::size_t k = 0; k < p.size(); ++k)
                             {
                               const double gk = g(k, 0);
                               if (gk == 0.0)
                                 continue;
                               for (std::size_t j = 0; j < zm.cols(); ++j)
                               {
                                 grad(p[k].u, j) += gk * zm(p[k].v, j);
                                 grad(p[k].v, j) += gk * zm(p[k].u, j);
                               }
                             }
                             return std::vector<Matrix>{std::move(grad)};
                           });
  }

  Tensor scatter_pairs(const Tensor& values, std::span<const Edge> pairs, std::size_t n)
  {
    if (values.shape() != Shape{pairs.size(), 1})
      throw ShapeError("scatter_pairs: expected (" + std::to_string(pairs.size()) + "x1) values, got " +
                       to_string(values.shape()));
    Matrix out(n, n);
    for (std::size_t k = 0; k < pairs.size(); ++k)
    {
      const auto [u, v] = pairs[k];
      if (u >= n || v >= n)
        throw std::out_of_range("scatter_pairs: node index out of range");
      out(u, v) = values.value()(k, 0);
      out(v, u) = values.value()(k, 0);
    }
    std::vector<Edge> p(pairs.begin(), pairs.end());
    return values.tape().record("scatter_pairs", std::move(out), {values},
                                [p = std::move(p)](const Matrix& g, std::span<const bool>) {
                                  Matrix grad(p.size(), 1);
                                  for (std::size_t k = 0; k < p.size(); ++k)
                                    grad(k, 0) = p[k].u == p[k].v ? g(p[k].u, p[k].v)
                                                                  : g(p[k].u, p[k].v) + g(p[k].v, p[k].u);
                                  return std::vector<Matrix>{std::move(grad)};
                                });
  }
}
