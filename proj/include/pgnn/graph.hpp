#ifndef PGNN_GRAPH_HPP
#define PGNN_GRAPH_HPP

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "pgnn/edge.hpp"
#include "pgnn/matrix.hpp"

namespace pgnn
{
  //! malformed dataset files or graph contents
  class DatasetError : public std::runtime_error
  {
  public:
    using std::runtime_error::runtime_error;
  };

  struct Splits
  {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
  };

  //! Undirected node-classification graph. Edges are unique, sorted, u < v and
  //! never self-loops; self-loops only appear inside normalize_adjacency.
  struct Graph
  {
    std::size_t num_nodes = 0;
    std::vector<Edge> edges;
    Matrix features;
    std::vector<int> labels;
    Splits splits;

    int num_classes() const;
    std::size_t num_features() const { return features.cols(); }

    //! throws DatasetError if any structural invariant is violated
    void validate() const;
  };

  //! D^-1/2 (A + I) D^-1/2 stored densely
  struct NormalizedAdjacency
  {
    Matrix matrix;
  };

  NormalizedAdjacency normalize_adjacency(const Graph& g);

  //! 0/1 symmetric adjacency without self-loops
  Matrix dense_adjacency(const Graph& g);

  //! sort, symmetrize and de-duplicate; throws on self-loops or out-of-range ids
  std::vector<Edge> canonical_edges(std::vector<Edge> edges, std::size_t num_nodes);

  //! Per-class proportional split: within each class the first
  //! round(train_frac * size) shuffled nodes train, the next round(val_frac * size)
  //! validate, the rest test.
  Splits proportional_split(const std::vector<int>& labels, double train_frac, double val_frac, std::uint64_t seed);

  //! Reads edges.tsv, features.csv, labels.txt and (optionally) splits.json.
  //! Without splits.json a 48/32/20 proportional split with seed 0 is used.
  Graph load_dataset(const std::filesystem::path& dir);
  void save_dataset(const Graph& g, const std::filesystem::path& dir);

  struct CsbmParams
  {
    std::size_t nodes = 1000;
    std::size_t classes = 2;
    std::size_t features = 16;
    double intra_p = 0.05;
    double inter_p = 0.005;
    double feature_noise = 1.0;
    std::uint64_t seed = 0;
  };

  //! Stochastic block model with equal class sizes. Features are a random
  //! unit-variance class mean plus isotropic Gaussian noise of the given scale.
  Graph make_csbm(const CsbmParams& params);

  //! copy of g with round(ratio * |E|) uniformly sampled non-edges added
  Graph add_random_edges(const Graph& g, double ratio, std::uint64_t seed);

  double edge_homophily(const Graph& g);
}

#endif // PGNN_GRAPH_HPP
