#ifndef PGNN_GRADCHECK_HPP
#define PGNN_GRADCHECK_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pgnn/tensor.hpp"

namespace pgnn
{
  //! Output of a probe: a scalar loss and the leaves bound from each checked
  //! parameter, in the same order as the parameter list.
  struct Probe
  {
    Tensor loss;
    std::vector<Tensor> wrt;
  };

  //! Builds a loss on the given tape, binding every checked parameter from its
  //! current value. Called repeatedly while entries are nudged in place.
  using ProbeFn = std::function<Probe(Tape& tape, bool requires_grad)>;

  //! |a - b| / max(|a|, |b|, floor)
  double relative_error(double a, double b, double floor = 1e-6);

  //! Central-difference check of every entry of every parameter. Returns the
  //! largest relative error between the analytic and numeric gradients.
  double max_gradient_error(const ProbeFn& probe, std::span<Matrix* const> params, double eps = 1e-5);

  struct GradCheckCase
  {
    std::string name;
    std::size_t instances = 0;
    double max_rel_error = 0.0;
    bool passed = false;
  };

  struct GradCheckSummary
  {
    std::vector<GradCheckCase> cases;
    double tolerance = 1e-4;

    std::size_t instances() const;
    double max_rel_error() const;
    bool passed() const;
  };

  //! Every recorded op, plus both backbones under every strategy x form x
  //! adversary phase, each on `instances_per_case` randomized small problems.
  GradCheckSummary run_gradcheck_suite(std::uint64_t seed = 0, std::size_t instances_per_case = 3,
                                       double tolerance = 1e-4, double eps = 1e-5);
}

#endif // PGNN_GRADCHECK_HPP
