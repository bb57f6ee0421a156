#ifndef PGNN_EDGE_HPP
#define PGNN_EDGE_HPP

#include <compare>
#include <cstddef>

namespace pgnn
{
  //! undirected edge stored with u < v
  struct Edge
  {
    std::size_t u = 0;
    std::size_t v = 0;

    friend auto operator<=>(const Edge&, const Edge&) = default;
  };

  inline Edge make_edge(std::size_t a, std::size_t b) noexcept
  {
    return a < b ? Edge{a, b} : Edge{b, a};
  }
}

#endif // PGNN_EDGE_HPP
