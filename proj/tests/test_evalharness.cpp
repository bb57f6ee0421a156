#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pgnn/evalharness.hpp"
#include "test_util.hpp"

using namespace pgnn;
namespace fs = std::filesystem;

namespace
{
  fs::path fresh_dir(const std::string& name)
  {
    const fs::path dir = fs::temp_directory_path() / ("pgnn_eval_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
  }

  std::string slurp(const fs::path& p)
  {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  TrainConfig quick()
  {
    TrainConfig c;
    c.epochs = 10;
    c.patience = 0;
    return c;
  }
}

TEST(Accuracy, Examples)
{
  const Matrix logits = Matrix::from_rows({{1.0, 2.0}, {3.0, 0.0}, {0.5, 0.5}});
  const std::vector<int> labels = {1, 1, 0};
  EXPECT_DOUBLE_EQ(accuracy(logits, labels, std::vector<std::size_t>{0, 1, 2}), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(accuracy(logits, labels, std::vector<std::size_t>{1}), 0.0);
  // tie resolves to class 0
  EXPECT_DOUBLE_EQ(accuracy(logits, labels, std::vector<std::size_t>{2}), 1.0);
}

TEST(MeanStd, SampleDeviation)
{
  const MeanStd ms = mean_std(std::vector<double>{1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(ms.mean, 2.5);
  EXPECT_NEAR(ms.std, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std(std::vector<double>{7.0}).std, 0.0);
}

TEST(Uniformity, Examples)
{
  EXPECT_NEAR(uniformity(Matrix::from_rows({{1.0, 1.0}, {2.0, 2.0}, {0.5, 0.5}})), 0.0, 1e-15);
  EXPECT_NEAR(uniformity(Matrix::from_rows({{1.0, 0.0}, {-3.0, 0.0}})), -8.0, 1e-12);
  // orthogonal unit vectors: |zi - zj|^2 = 2
  EXPECT_NEAR(uniformity(Matrix::from_rows({{1.0, 0.0}, {0.0, 1.0}})), -4.0, 1e-12);
  EXPECT_THROW(uniformity(Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}})), std::invalid_argument);
  EXPECT_THROW(uniformity(Matrix::from_rows({{1.0, 0.0}})), std::invalid_argument);
}

TEST(Uniformity, SampledCloseToExact)
{
  const Matrix z = test::random_matrix(300, 4, 3);
  const double exact = uniformity(z);
  const double sampled = uniformity(z, 20000, 1);
  EXPECT_NEAR(sampled, exact, 0.05);
  EXPECT_LE(exact, 0.0);
}

TEST(Sweep, ShapeAndRatioZeroIsClean)
{
  const Graph g = test::small_graph(40, 2);
  const std::vector<std::uint64_t> seeds = {0, 1};
  std::vector<TrainedMethod> methods = {{"plain", {}}, {"other", {}}};
  for (auto& m : methods)
    for (auto s : seeds)
    {
      Model model = Model::create(BackboneKind::Gcn, g, 8, s + (m.label == "other" ? 10 : 0));
      train_standard(model, g, quick());
      m.models.push_back(std::move(model));
    }
  const std::vector<double> ratios = {0.0, 0.2, 0.5};
  const SweepResult r = robustness_sweep(methods, g, ratios, seeds);
  ASSERT_EQ(r.rows.size(), 6u);
  EXPECT_EQ(r.seeds, seeds);
  EXPECT_EQ(r.rows[0].method, "plain");
  EXPECT_EQ(r.rows[3].method, "other");
  EXPECT_EQ(r.rows[4].ratio, 0.2);

  std::vector<double> clean;
  for (const Model& m : methods[0].models)
    clean.push_back(accuracy(m.logits(m.prepare(g)), g.labels, g.splits.test));
  EXPECT_EQ(r.rows[0].mean_acc, mean_std(clean).mean);
  EXPECT_EQ(r.rows[0].std_acc, mean_std(clean).std);
  for (const auto& row : r.rows)
  {
    EXPECT_GE(row.mean_acc, 0.0);
    EXPECT_LE(row.mean_acc, 1.0);
  }
}

TEST(Csv, RoundTrip)
{
  const fs::path dir = fresh_dir("csv");
  const std::vector<ResultRow> rows = {{"csbm", "gcn", "embedding", "random", 0.1 + 0.2, 1.0 / 3.0, 5},
                                       {"cora", "linkx", "none", "none", 0.5, 0.0, 1}};
  write_results_csv(dir / "r.csv", rows);
  const auto back = read_results_csv(dir / "r.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].mean_acc, 0.1 + 0.2);
  EXPECT_EQ(back[0].std_acc, 1.0 / 3.0);
  EXPECT_EQ(back[1].dataset, "cora");
  EXPECT_EQ(slurp(dir / "r.csv").substr(0, slurp(dir / "r.csv").find('\n')), "dataset,backbone,strategy,form,mean_acc,std_acc,n_seeds");

  const std::vector<SweepRow> sweep = {{"plain", 0.1, 0.7, 0.01}};
  write_sweep_csv(dir / "s.csv", sweep);
  const auto sback = read_sweep_csv(dir / "s.csv");
  ASSERT_EQ(sback.size(), 1u);
  EXPECT_EQ(sback[0].ratio, 0.1);
  EXPECT_EQ(sback[0].mean_acc, 0.7);
}

TEST(Csv, FormatDoubleRoundTrips)
{
  for (double x : {0.0, 1.0, 0.1, 1e-300, -2.5e17, 1.0 / 7.0})
    EXPECT_EQ(parse_double(format_double(x)), x);
  EXPECT_THROW(parse_double("1.0x"), std::invalid_argument);
}

TEST(Grid, ShapeAndResume)
{
  const fs::path dir = fresh_dir("grid");
  const std::vector<GridDataset> datasets = {{"a", [] { return test::small_graph(30, 1); }},
                                             {"b", [] { return test::small_graph(30, 2); }}};
  const std::vector<BackboneKind> backbones = {BackboneKind::Gcn, BackboneKind::Linkx};
  PerturbSpec emb;
  emb.strategy = Strategy::Embedding;
  const std::vector<PerturbSpec> specs = {PerturbSpec{}, emb};
  GridOptions opts;
  opts.hidden = 8;
  opts.train = quick();
  opts.seeds = {0, 1};

  const GridOutcome first = run_matrix(datasets, backbones, specs, opts, dir);
  EXPECT_EQ(first.cells_run, 8u);
  EXPECT_EQ(first.cells_failed, 0u);
  EXPECT_EQ(read_results_csv(dir / "results.csv").size(), 8u);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_EQ(report.size(), 8u * 2u);
  const std::string csv = slurp(dir / "results.csv");

  const GridOutcome second = run_matrix(datasets, backbones, specs, opts, dir);
  EXPECT_EQ(second.cells_run, 0u);
  EXPECT_EQ(second.cells_skipped, 8u);
  EXPECT_EQ(slurp(dir / "results.csv"), csv);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "report.json")), report);
}

TEST(Grid, ParallelMatchesSerial)
{
  const fs::path serial = fresh_dir("serial");
  const fs::path par = fresh_dir("parallel");
  const std::vector<GridDataset> datasets = {{"a", [] { return test::small_graph(30, 1); }}};
  const std::vector<BackboneKind> backbones = {BackboneKind::Gcn, BackboneKind::Linkx};
  PerturbSpec node;
  node.strategy = Strategy::Node;
  const std::vector<PerturbSpec> specs = {PerturbSpec{}, node};
  GridOptions opts;
  opts.hidden = 8;
  opts.train = quick();
  opts.seeds = {3};
  run_matrix(datasets, backbones, specs, opts, serial);
  opts.parallel = 3;
  run_matrix(datasets, backbones, specs, opts, par);
  auto sorted = [](std::vector<ResultRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
      return std::tie(a.backbone, a.strategy) < std::tie(b.backbone, b.strategy);
    });
    return rows;
  };
  const auto a = sorted(read_results_csv(serial / "results.csv"));
  const auto b = sorted(read_results_csv(par / "results.csv"));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    EXPECT_EQ(a[i].mean_acc, b[i].mean_acc);
}

TEST(Grid, FailingDatasetIsRecorded)
{
  const fs::path dir = fresh_dir("fail");
  const std::vector<GridDataset> datasets = {{"broken", []() -> Graph { throw DatasetError("missing"); }},
                                             {"ok", [] { return test::small_graph(30, 1); }}};
  const std::vector<BackboneKind> backbones = {BackboneKind::Gcn};
  const std::vector<PerturbSpec> specs = {PerturbSpec{}};
  GridOptions opts;
  opts.hidden = 8;
  opts.train = quick();
  opts.seeds = {0};
  const GridOutcome o = run_matrix(datasets, backbones, specs, opts, dir);
  EXPECT_EQ(o.cells_failed, 1u);
  EXPECT_EQ(o.cells_run, 1u);
  const auto report = nlohmann::json::parse(slurp(dir / "report.json"));
  bool saw_failed = false;
  for (const auto& r : report)
    saw_failed = saw_failed || r.value("status", "") == "failed";
  EXPECT_TRUE(saw_failed);
}

TEST(Timing, RepeatsAndRejectsFewRepeats)
{
  const Graph g = test::small_graph(30, 1);
  PerturbSpec node;
  node.strategy = Strategy::Node;
  const std::vector<TimingMethod> methods = {{"plain", {}}, {"node", node}};
  const auto rows = timing_report(methods, g, BackboneKind::Gcn, 8, quick(), 5, 3);
  ASSERT_EQ(rows.size(), 2u);
  for (const auto& r : rows)
  {
    EXPECT_EQ(r.repeats.size(), 3u);
    EXPECT_GT(r.mean_seconds, 0.0);
  }
  EXPECT_THROW(timing_report(methods, g, BackboneKind::Gcn, 8, quick(), 5, 2), std::invalid_argument);
}

TEST(Radius, PicksFromCandidates)
{
  const Graph g = test::small_graph(30, 1);
  PerturbSpec spec;
  spec.strategy = Strategy::Embedding;
  const std::vector<std::uint64_t> seeds = {0};
  const double r = select_radius(g, BackboneKind::Gcn, 8, quick(), spec, seeds);
  EXPECT_TRUE(std::find(std::begin(kRadiusCandidates), std::end(kRadiusCandidates), r) != std::end(kRadiusCandidates));
}
