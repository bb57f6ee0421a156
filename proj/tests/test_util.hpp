#ifndef PGNN_TEST_UTIL_HPP
#define PGNN_TEST_UTIL_HPP

#include <random>

#include "pgnn/backbones.hpp"
#include "pgnn/graph.hpp"
#include "pgnn/rng.hpp"

namespace pgnn::test
{
  inline Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
  {
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(r, c);
    for (double& v : m.values())
      v = dist(rng);
    return m;
  }

  //! roughly `density` of the entries nonzero
  inline Matrix sparse_matrix(std::size_t r, std::size_t c, double density, std::uint64_t seed)
  {
    Rng rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::bernoulli_distribution keep(density);
    Matrix m(r, c);
    for (double& v : m.values())
      v = keep(rng) ? dist(rng) : 0.0;
    return m;
  }

  inline Graph small_graph(std::size_t nodes, std::uint64_t seed, std::size_t classes = 2, std::size_t features = 6,
                           double intra = 0.4, double inter = 0.1)
  {
    CsbmParams p;
    p.nodes = nodes;
    p.classes = classes;
    p.features = features;
    p.intra_p = intra;
    p.inter_p = inter;
    p.seed = seed;
    return make_csbm(p);
  }

  //! hook that adds a fixed matrix
  inline HookSet::Hook constant_hook(Matrix delta)
  {
    return [d = std::move(delta)](const Tensor& t) { return t.tape().leaf(d); };
  }
}

#endif // PGNN_TEST_UTIL_HPP
