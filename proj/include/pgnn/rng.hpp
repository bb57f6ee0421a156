#ifndef PGNN_RNG_HPP
#define PGNN_RNG_HPP

#include <cstdint>
#include <random>

namespace pgnn
{
  using Rng = std::mt19937_64;

  inline std::uint64_t splitmix64(std::uint64_t x) noexcept
  {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  //! independent stream for (seed, purpose, index)
  inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) noexcept
  {
    return splitmix64(splitmix64(splitmix64(seed) ^ purpose) ^ index);
  }
}

#endif // PGNN_RNG_HPP
