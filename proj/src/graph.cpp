#include "pgnn/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "pgnn/rng.hpp"

namespace pgnn
{
  namespace
  {
    enum Stream : std::uint64_t
    {
      kFeatures = 1,
      kEdges = 2,
      kSplits = 3,
      kNoiseEdges = 4,
    };

    template <class T>
    T parse_number(std::string_view token, const std::string& where)
    {
      while (!token.empty() && (token.front() == ' ' || token.front() == '\t' || token.front() == '\r'))
        token.remove_prefix(1);
      while (!token.empty() && (token.back() == ' ' || token.back() == '\t' || token.back() == '\r'))
        token.remove_suffix(1);
      T value{};
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (ec != std::errc{} || ptr != token.data() + token.size())
        throw DatasetError(where + ": cannot parse '" + std::string(token) + "'");
      return value;
    }

    std::string format_double(double v)
    {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
      return std::string(buf, ptr);
    }

    std::ifstream open_input(const std::filesystem::path& p)
    {
      std::ifstream in(p);
      if (!in)
        throw DatasetError("cannot open " + p.string());
      return in;
    }
  }

  int Graph::num_classes() const
  {
    if (labels.empty())
      return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
  }

  void Graph::validate() const
  {
    if (features.rows() != num_nodes)
      throw DatasetError("feature rows " + std::to_string(features.rows()) + " != node count " +
                         std::to_string(num_nodes));
    if (labels.size() != num_nodes)
      throw DatasetError("label count " + std::to_string(labels.size()) + " != node count " + std::to_string(num_nodes));
    for (int y : labels)
      if (y < 0)
        throw DatasetError("negative label " + std::to_string(y));
    for (std::size_t k = 0; k < edges.size(); ++k)
    {
      const Edge& e = edges[k];
      if (e.u == e.v)
        throw DatasetError("self-loop on node " + std::to_string(e.u));
      if (e.u > e.v || e.v >= num_nodes)
        throw DatasetError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") is not canonical");
      if (k > 0 && !(edges[k - 1] < e))
        throw DatasetError("edges are not sorted and unique");
    }
    std::vector<char> seen(num_nodes, 0);
    for (const auto* part : {&splits.train, &splits.val, &splits.test})
      for (std::size_t i : *part)
      {
        if (i >= num_nodes)
          throw DatasetError("split index " + std::to_string(i) + " out of range");
        if (seen[i])
          throw DatasetError("node " + std::to_string(i) + " appears in more than one split");
        seen[i] = 1;
      }
  }

  std::vector<Edge> canonical_edges(std::vector<Edge> edges, std::size_t num_nodes)
  {
    for (Edge& e : edges)
    {
      if (e.u == e.v)
        throw DatasetError("self-loop on node " + std::to_string(e.u));
      if (e.u >= num_nodes || e.v >= num_nodes)
        throw DatasetError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ") out of range for " +
                           std::to_string(num_nodes) + " nodes");
      e = make_edge(e.u, e.v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
  }

  NormalizedAdjacency normalize_adjacency(const Graph& g)
  {
    const std::size_t n = g.num_nodes;
    std::vector<double> degree(n, 1.0);
    for (const Edge& e : g.edges)
    {
      degree[e.u] += 1.0;
      degree[e.v] += 1.0;
    }
    std::vector<double> inv_sqrt(n);
    for (std::size_t i = 0; i < n; ++i)
      inv_sqrt[i] = 1.0 / std::sqrt(degree[i]);

    Matrix a(n, n);
    for (std::size_t i = 0; i < n; ++i)
      a(i, i) = inv_sqrt[i] * inv_sqrt[i];
    for (const Edge& e : g.edges)
    {
      const double w = inv_sqrt[e.u] * inv_sqrt[e.v];
      a(e.u, e.v) = w;
      a(e.v, e.u) = w;
    }
    return {std::move(a)};
  }

  Matrix dense_adjacency(const Graph& g)
  {
    Matrix a(g.num_nodes, g.num_nodes);
    for (const Edge& e : g.edges)
    {
      a(e.u, e.v) = 1.0;
      a(e.v, e.u) = 1.0;
    }
    return a;
  }

  Splits proportional_split(const std::vector<int>& labels, double train_frac, double val_frac, std::uint64_t seed)
  {
    if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0)
      throw std::invalid_argument("proportional_split: fractions must be non-negative and sum to at most 1");
    int classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(std::max(classes, 0)));
    for (std::size_t i = 0; i < labels.size(); ++i)
      members[static_cast<std::size_t>(labels[i])].push_back(i);

    Rng rng(derive_seed(seed, kSplits));
    Splits s;
    for (auto& group : members)
    {
      std::shuffle(group.begin(), group.end(), rng);
      const auto size = static_cast<double>(group.size());
      const auto n_train = static_cast<std::size_t>(std::llround(train_frac * size));
      const auto n_val = std::min(group.size() - n_train, static_cast<std::size_t>(std::llround(val_frac * size)));
      s.train.insert(s.train.end(), group.begin(), group.begin() + static_cast<std::ptrdiff_t>(n_train));
      s.val.insert(s.val.end(), group.begin() + static_cast<std::ptrdiff_t>(n_train),
                   group.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
      s.test.insert(s.test.end(), group.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), group.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.val.begin(), s.val.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
  }

  Graph load_dataset(const std::filesystem::path& dir)
  {
    Graph g;

    {
      auto in = open_input(dir / "features.csv");
      std::string line;
      std::vector<double> values;
      std::size_t rows = 0, cols = 0;
      while (std::getline(in, line))
      {
        if (line.empty() || line == "\r")
          continue;
        const std::string where = "features.csv line " + std::to_string(rows + 1);
        std::size_t count = 0;
        std::string_view rest(line);
        while (true)
        {
          auto comma = rest.find(',');
          values.push_back(parse_number<double>(rest.substr(0, comma), where));
          ++count;
          if (comma == std::string_view::npos)
            break;
          rest.remove_prefix(comma + 1);
        }
        if (rows == 0)
          cols = count;
        else if (count != cols)
          throw DatasetError(where + ": expected " + std::to_string(cols) + " columns, got " + std::to_string(count));
        ++rows;
      }
      g.num_nodes = rows;
      g.features = Matrix(rows, cols, std::move(values));
    }

    {
      auto in = open_input(dir / "labels.txt");
      std::string line;
      std::size_t lineno = 0;
      while (std::getline(in, line))
      {
        ++lineno;
        if (line.empty() || line == "\r")
          continue;
        g.labels.push_back(parse_number<int>(line, "labels.txt line " + std::to_string(lineno)));
      }
      if (g.labels.size() != g.num_nodes)
        throw DatasetError("labels.txt has " + std::to_string(g.labels.size()) + " entries for " +
                           std::to_string(g.num_nodes) + " feature rows");
    }

    {
      auto in = open_input(dir / "edges.tsv");
      std::string line;
      std::size_t lineno = 0;
      std::vector<Edge> edges;
      while (std::getline(in, line))
      {
        ++lineno;
        if (line.empty() || line == "\r")
          continue;
        const std::string where = "edges.tsv line " + std::to_string(lineno);
        std::string_view rest(line);
        auto sep = rest.find_first_of("\t ");
        if (sep == std::string_view::npos)
          throw DatasetError(where + ": expected two columns");
        auto u = parse_number<std::size_t>(rest.substr(0, sep), where);
        auto v = parse_number<std::size_t>(rest.substr(sep + 1), where);
        if (u == v)
          throw DatasetError(where + ": self-loop on node " + std::to_string(u));
        if (u >= g.num_nodes || v >= g.num_nodes)
          throw DatasetError(where + ": node index out of range for " + std::to_string(g.num_nodes) + " nodes");
        edges.push_back(make_edge(u, v));
      }
      g.edges = canonical_edges(std::move(edges), g.num_nodes);
    }

    const auto split_path = dir / "splits.json";
    if (std::filesystem::exists(split_path))
    {
      auto in = open_input(split_path);
      nlohmann::json j;
      try
      {
        in >> j;
        g.splits.train = j.at("train").get<std::vector<std::size_t>>();
        g.splits.val = j.at("val").get<std::vector<std::size_t>>();
        g.splits.test = j.at("test").get<std::vector<std::size_t>>();
      }
      catch (const nlohmann::json::exception& e)
      {
        throw DatasetError("splits.json: " + std::string(e.what()));
      }
    }
    else
    {
      g.splits = proportional_split(g.labels, 0.48, 0.32, 0);
    }

    g.validate();
    return g;
  }

  void save_dataset(const Graph& g, const std::filesystem::path& dir)
  {
    g.validate();
    std::filesystem::create_directories(dir);
    {
      std::ofstream out(dir / "features.csv");
      for (std::size_t i = 0; i < g.num_nodes; ++i)
      {
        auto row = g.features.row(i);
        for (std::size_t j = 0; j < row.size(); ++j)
          out << (j ? "," : "") << format_double(row[j]);
        out << '\n';
      }
    }
    {
      std::ofstream out(dir / "labels.txt");
      for (int y : g.labels)
        out << y << '\n';
    }
    {
      std::ofstream out(dir / "edges.tsv");
      for (const Edge& e : g.edges)
        out << e.u << '\t' << e.v << '\n';
    }
    {
      nlohmann::json j;
      j["train"] = g.splits.train;
      j["val"] = g.splits.val;
      j["test"] = g.splits.test;
      std::ofstream out(dir / "splits.json");
      out << j.dump() << '\n';
    }
  }

  Graph make_csbm(const CsbmParams& p)
  {
    if (!(p.intra_p >= 0.0 && p.intra_p <= 1.0 && p.inter_p >= 0.0 && p.inter_p <= 1.0))
      throw std::invalid_argument("make_csbm: edge probabilities must lie in [0, 1]");
    if (p.classes == 0 || p.nodes == 0 || p.nodes % p.classes != 0)
      throw std::invalid_argument("make_csbm: node count must be a positive multiple of the class count");
    if (p.feature_noise < 0.0)
      throw std::invalid_argument("make_csbm: feature_noise must be non-negative");

    Graph g;
    g.num_nodes = p.nodes;
    const std::size_t block = p.nodes / p.classes;
    g.labels.resize(p.nodes);
    for (std::size_t i = 0; i < p.nodes; ++i)
      g.labels[i] = static_cast<int>(i / block);

    Rng feat_rng(derive_seed(p.seed, kFeatures));
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix means(p.classes, p.features);
    for (double& v : means.values())
      v = normal(feat_rng);
    g.features = Matrix(p.nodes, p.features);
    for (std::size_t i = 0; i < p.nodes; ++i)
    {
      auto mu = means.row(static_cast<std::size_t>(g.labels[i]));
      auto x = g.features.row(i);
      for (std::size_t j = 0; j < p.features; ++j)
        x[j] = mu[j] + p.feature_noise * normal(feat_rng);
    }

    Rng edge_rng(derive_seed(p.seed, kEdges));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t u = 0; u < p.nodes; ++u)
      for (std::size_t v = u + 1; v < p.nodes; ++v)
      {
        const double prob = g.labels[u] == g.labels[v] ? p.intra_p : p.inter_p;
        if (unif(edge_rng) < prob)
          g.edges.push_back({u, v});
      }

    g.splits = proportional_split(g.labels, 0.48, 0.32, p.seed);
    return g;
  }

  Graph add_random_edges(const Graph& g, double ratio, std::uint64_t seed)
  {
    if (!(ratio >= 0.0))
      throw std::invalid_argument("add_random_edges: ratio must be non-negative");
    const auto extra = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(g.edges.size())));
    const std::size_t n = g.num_nodes;
    const std::size_t all_pairs = n * (n - 1) / 2;
    const std::size_t non_edges = all_pairs - g.edges.size();
    if (extra > non_edges)
      throw std::invalid_argument("add_random_edges: requested " + std::to_string(extra) + " edges but only " +
                                  std::to_string(non_edges) + " non-edges exist");

    Graph out = g;
    if (extra == 0)
      return out;

    Rng rng(derive_seed(seed, kNoiseEdges));
    std::vector<Edge> added;
    added.reserve(extra);
    if (extra * 2 <= non_edges)
    {
      std::set<Edge> taken(g.edges.begin(), g.edges.end());
      std::uniform_int_distribution<std::size_t> pick(0, n - 1);
      while (added.size() < extra)
      {
        const std::size_t a = pick(rng), b = pick(rng);
        if (a == b)
          continue;
        const Edge e = make_edge(a, b);
        if (taken.insert(e).second)
          added.push_back(e);
      }
    }
    else
    {
      std::vector<Edge> candidates;
      candidates.reserve(non_edges);
      std::size_t k = 0;
      for (std::size_t u = 0; u < n; ++u)
        for (std::size_t v = u + 1; v < n; ++v)
        {
          const Edge e{u, v};
          while (k < g.edges.size() && g.edges[k] < e)
            ++k;
          if (k < g.edges.size() && g.edges[k] == e)
            continue;
          candidates.push_back(e);
        }
      for (std::size_t i = 0; i < extra; ++i)
      {
        std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
        std::swap(candidates[i], candidates[pick(rng)]);
      }
      added.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(extra));
    }
    out.edges.insert(out.edges.end(), added.begin(), added.end());
    std::sort(out.edges.begin(), out.edges.end());
    return out;
  }

  double edge_homophily(const Graph& g)
  {
    if (g.edges.empty())
      throw std::invalid_argument("edge_homophily: graph has no edges");
    std::size_t same = 0;
    for (const Edge& e : g.edges)
      same += g.labels[e.u] == g.labels[e.v] ? 1 : 0;
    return static_cast<double>(same) / static_cast<double>(g.edges.size());
  }
}
