#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>

#include "pgnn/graph.hpp"
#include "test_util.hpp"

using namespace pgnn;

namespace
{
  Graph path_graph(std::size_t n)
  {
    Graph g;
    g.num_nodes = n;
    for (std::size_t i = 0; i + 1 < n; ++i)
      g.edges.push_back({i, i + 1});
    g.features = Matrix(n, 1, 1.0);
    g.labels.assign(n, 0);
    return g;
  }

  //! D^-1/2 (A + I) D^-1/2 built entry by entry from the dense definition
  Matrix brute_force_normalized(const Graph& g)
  {
    const std::size_t n = g.num_nodes;
    Matrix a_hat = dense_adjacency(g);
    for (std::size_t i = 0; i < n; ++i)
      a_hat(i, i) += 1.0;
    std::vector<double> deg(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        deg[i] += a_hat(i, j);
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        out(i, j) = a_hat(i, j) / std::sqrt(deg[i] * deg[j]);
    return out;
  }

  std::filesystem::path scratch_dir(const std::string& name)
  {
    auto dir = std::filesystem::temp_directory_path() / ("pgnn_graph_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
  }

  void write_file(const std::filesystem::path& p, const std::string& text)
  {
    std::ofstream(p) << text;
  }
}

TEST(NormalizeAdjacency, IsolatedNode)
{
  const Graph g = path_graph(1);
  EXPECT_EQ(normalize_adjacency(g).matrix, Matrix::from_rows({{1.0}}));
}

TEST(NormalizeAdjacency, TwoNodesOneEdge)
{
  const Graph g = path_graph(2);
  const Matrix a = normalize_adjacency(g).matrix;
  EXPECT_LT(max_abs_diff(a, Matrix(2, 2, 0.5)), 1e-15);
}

TEST(NormalizeAdjacency, MatchesBruteForce)
{
  EXPECT_LT(max_abs_diff(normalize_adjacency(path_graph(3)).matrix, brute_force_normalized(path_graph(3))), 1e-15);
  const Graph g = test::small_graph(30, 4);
  const Matrix a = normalize_adjacency(g).matrix;
  EXPECT_LT(max_abs_diff(a, brute_force_normalized(g)), 1e-14);
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    for (std::size_t j = 0; j < g.num_nodes; ++j)
      EXPECT_EQ(a(i, j), a(j, i));
}

TEST(Csbm, HomophilyMatchesBlockExpectation)
{
  CsbmParams p;
  p.nodes = 1000;
  p.classes = 2;
  p.intra_p = 0.05;
  p.inter_p = 0.005;
  p.seed = 3;
  const Graph g = make_csbm(p);
  // expected same-class and cross-class pair counts for equal blocks
  const double block = 500.0;
  const double same = 2.0 * block * (block - 1.0) / 2.0 * p.intra_p;
  const double cross = block * block * p.inter_p;
  const double expected = same / (same + cross);
  const double h = edge_homophily(g);
  EXPECT_GE(h, 0.85);
  EXPECT_LE(h, 0.95);
  EXPECT_NEAR(h, expected, 0.02);
}

TEST(Csbm, EqualProbabilitiesGiveOneOverC)
{
  CsbmParams p;
  p.nodes = 600;
  p.classes = 3;
  p.intra_p = 0.03;
  p.inter_p = 0.03;
  p.seed = 9;
  // same-class pairs are (n/c - 1)/(n - 1) of all pairs
  EXPECT_NEAR(edge_homophily(make_csbm(p)), 199.0 / 599.0, 0.03);
}

TEST(Csbm, DeterministicAndValid)
{
  const Graph a = test::small_graph(60, 5);
  const Graph b = test::small_graph(60, 5);
  EXPECT_EQ(a.edges, b.edges);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.splits.train, b.splits.train);
  EXPECT_NO_THROW(a.validate());
  EXPECT_NE(test::small_graph(60, 6).edges, a.edges);
}

TEST(Csbm, RejectsBadParameters)
{
  CsbmParams p;
  p.nodes = 7;
  p.classes = 2;
  EXPECT_THROW(make_csbm(p), std::invalid_argument);
  p.nodes = 8;
  p.intra_p = 1.5;
  EXPECT_THROW(make_csbm(p), std::invalid_argument);
}

TEST(AddRandomEdges, CountLaw)
{
  Graph g = path_graph(101);
  ASSERT_EQ(g.edges.size(), 100u);
  const Graph noisy = add_random_edges(g, 0.3, 1);
  EXPECT_EQ(noisy.edges.size(), 130u);
  EXPECT_NO_THROW(noisy.validate());
  EXPECT_EQ(add_random_edges(g, 0.0, 1).edges, g.edges);
}

TEST(AddRandomEdges, AddedPairsAreNew)
{
  const Graph g = test::small_graph(40, 2);
  const Graph noisy = add_random_edges(g, 0.5, 7);
  std::set<Edge> original(g.edges.begin(), g.edges.end());
  std::size_t kept = 0;
  for (const Edge& e : noisy.edges)
    kept += original.count(e);
  EXPECT_EQ(kept, g.edges.size());
  EXPECT_EQ(noisy.edges.size() - g.edges.size(), static_cast<std::size_t>(std::llround(0.5 * g.edges.size())));
}

TEST(AddRandomEdges, DenseFallbackAndExhaustion)
{
  const Graph g = path_graph(6); // 5 edges of 15 pairs
  const Graph noisy = add_random_edges(g, 2.0, 3);
  EXPECT_EQ(noisy.edges.size(), 15u);
  EXPECT_THROW(add_random_edges(g, 2.5, 3), std::invalid_argument);
  EXPECT_THROW(add_random_edges(g, -0.1, 3), std::invalid_argument);
}

TEST(EdgeHomophily, SingleLabelIsOne)
{
  EXPECT_EQ(edge_homophily(path_graph(5)), 1.0);
  EXPECT_THROW(edge_homophily(path_graph(1)), std::invalid_argument);
}

TEST(Split, ProportionalPerClass)
{
  std::vector<int> labels;
  for (int c = 0; c < 3; ++c)
    labels.insert(labels.end(), 50, c);
  const Splits s = proportional_split(labels, 0.48, 0.32, 1);
  EXPECT_EQ(s.train.size(), 3u * 24u);
  EXPECT_EQ(s.val.size(), 3u * 16u);
  EXPECT_EQ(s.test.size(), 3u * 10u);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  EXPECT_EQ(all.size(), labels.size());
}

TEST(Dataset, SaveLoadRoundTrip)
{
  const Graph g = test::small_graph(20, 8);
  const auto dir = scratch_dir("roundtrip");
  save_dataset(g, dir);
  const Graph back = load_dataset(dir);
  EXPECT_EQ(back.num_nodes, g.num_nodes);
  EXPECT_EQ(back.edges, g.edges);
  EXPECT_EQ(back.features, g.features);
  EXPECT_EQ(back.labels, g.labels);
  EXPECT_EQ(back.splits.test, g.splits.test);
}

TEST(Dataset, DefaultSplitWithoutSplitsFile)
{
  const auto dir = scratch_dir("nosplit");
  write_file(dir / "features.csv", "1,0\n0,1\n1,1\n0,0\n");
  write_file(dir / "labels.txt", "0\n1\n0\n1\n");
  write_file(dir / "edges.tsv", "0\t1\n1 2\n2\t1\n");
  const Graph g = load_dataset(dir);
  EXPECT_EQ(g.num_nodes, 4u);
  EXPECT_EQ(g.edges, (std::vector<Edge>{{0, 1}, {1, 2}}));
  EXPECT_EQ(g.splits.train.size() + g.splits.val.size() + g.splits.test.size(), 4u);
}

TEST(Dataset, RejectsSelfLoop)
{
  const auto dir = scratch_dir("selfloop");
  write_file(dir / "features.csv", "1\n2\n");
  write_file(dir / "labels.txt", "0\n1\n");
  write_file(dir / "edges.tsv", "0\t0\n");
  EXPECT_THROW(load_dataset(dir), DatasetError);
}

TEST(Dataset, RejectsMalformedFiles)
{
  const auto dir = scratch_dir("malformed");
  write_file(dir / "features.csv", "1,2\n3\n");
  write_file(dir / "labels.txt", "0\n1\n");
  write_file(dir / "edges.tsv", "0\t1\n");
  EXPECT_THROW(load_dataset(dir), DatasetError);
  write_file(dir / "features.csv", "1,2\n3,4\n");
  write_file(dir / "edges.tsv", "0\t5\n");
  EXPECT_THROW(load_dataset(dir), DatasetError);
  write_file(dir / "edges.tsv", "0\t1\n");
  write_file(dir / "labels.txt", "0\n");
  EXPECT_THROW(load_dataset(dir), DatasetError);
  EXPECT_THROW(load_dataset(dir / "missing"), DatasetError);
}

namespace
{
  const char* data_dir() { return std::getenv("PGNN_DATA_DIR"); }
}

TEST(Dataset, CoraStatistics)
{
  if (!data_dir() || !std::filesystem::exists(std::filesystem::path(data_dir()) / "cora"))
    GTEST_SKIP() << "PGNN_DATA_DIR/cora not available";
  const Graph g = load_dataset(std::filesystem::path(data_dir()) / "cora");
  EXPECT_EQ(g.num_nodes, 2708u);
  EXPECT_EQ(g.edges.size(), 5278u);
  EXPECT_EQ(g.num_features(), 1433u);
  EXPECT_EQ(g.num_classes(), 7);
  EXPECT_NEAR(edge_homophily(g), 0.81, 0.01);
}

TEST(Dataset, CiteseerStatistics)
{
  if (!data_dir() || !std::filesystem::exists(std::filesystem::path(data_dir()) / "citeseer"))
    GTEST_SKIP() << "PGNN_DATA_DIR/citeseer not available";
  const Graph g = load_dataset(std::filesystem::path(data_dir()) / "citeseer");
  EXPECT_EQ(g.num_nodes, 3327u);
  EXPECT_EQ(g.num_features(), 3703u);
  EXPECT_EQ(g.num_classes(), 6);
}
