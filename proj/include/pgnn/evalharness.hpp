#ifndef PGNN_EVALHARNESS_HPP
#define PGNN_EVALHARNESS_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pgnn/backbones.hpp"
#include "pgnn/graph.hpp"
#include "pgnn/perturb.hpp"
#include "pgnn/training.hpp"

namespace pgnn
{
  //! argmax-match fraction over mask; argmax ties go to the lowest class index
  double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> mask);

  struct MeanStd
  {
    double mean = 0.0;
    //! sample standard deviation (n - 1); 0 for a single value
    double std = 0.0;
  };

  MeanStd mean_std(std::span<const double> values);

  //! trained models of one method, one per seed, aligned with the sweep seeds
  struct TrainedMethod
  {
    std::string label;
    std::vector<Model> models;
  };

  struct SweepRow
  {
    std::string method;
    double ratio = 0.0;
    double mean_acc = 0.0;
    double std_acc = 0.0;
  };

  struct SweepResult
  {
    std::vector<SweepRow> rows;
    std::vector<std::uint64_t> seeds;
  };

  //! Test accuracy of every model on g with round(ratio * |E|) random edges
  //! added (seeded per seed index); ratio 0 evaluates the unmodified graph.
  SweepResult robustness_sweep(std::span<const TrainedMethod> methods, const Graph& g, std::span<const double> ratios,
                               std::span<const std::uint64_t> seeds);

  //! log mean exp(-2 |z_i - z_j|^2) over row-normalized embeddings; all pairs
  //! when there are at most sample_pairs of them, otherwise that many seeded
  //! random pairs.
  double uniformity(const Matrix& embeddings, std::size_t sample_pairs = 100000, std::uint64_t seed = 0);

  struct TimingMethod
  {
    std::string label;
    PerturbSpec spec;
  };

  struct TimingRow
  {
    std::string method;
    //! mean over repeats of the summed per-epoch step time
    double mean_seconds = 0.0;
    double std_seconds = 0.0;
    std::vector<double> repeats;
  };

  //! Wall-clock of `epochs` training epochs per method, measured `repeats`
  //! times with early stopping disabled. Repeats are interleaved across methods.
  std::vector<TimingRow> timing_report(std::span<const TimingMethod> methods, const Graph& g, BackboneKind backbone,
                                       std::size_t hidden, const TrainConfig& cfg, std::size_t epochs = 50,
                                       std::size_t repeats = 3);

  //! radius multipliers tried by select_radius
  inline constexpr double kRadiusCandidates[] = {0.01, 0.05, 0.1, 0.5};

  //! radius with the best mean validation accuracy over seeds; ties keep the smaller
  double select_radius(const Graph& g, BackboneKind backbone, std::size_t hidden, const TrainConfig& cfg,
                       PerturbSpec spec, std::span<const std::uint64_t> seeds,
                       std::span<const double> candidates = kRadiusCandidates);

  struct GridDataset
  {
    std::string name;
    std::function<Graph()> load;
  };

  struct ResultRow
  {
    std::string dataset;
    std::string backbone;
    std::string strategy;
    std::string form;
    double mean_acc = 0.0;
    double std_acc = 0.0;
    std::size_t n_seeds = 0;
  };

  struct CellReport
  {
    std::string dataset;
    std::string backbone;
    std::string strategy;
    std::string form;
    std::vector<RunReport> runs;
  };

  struct GridOptions
  {
    std::size_t hidden = 64;
    TrainConfig train;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::size_t parallel = 1;
    //! progress lines (one per finished cell); may be empty
    std::function<void(const std::string&)> log;
  };

  struct GridOutcome
  {
    std::vector<ResultRow> results;
    std::size_t cells_run = 0;
    std::size_t cells_skipped = 0;
    std::size_t cells_failed = 0;
  };

  //! Runs datasets x backbones x specs over the seeds and maintains
  //! out/results.csv and out/report.json. Cells already in results.csv are
  //! skipped; a failing cell is logged and recorded without stopping the grid.
  GridOutcome run_matrix(std::span<const GridDataset> datasets, std::span<const BackboneKind> backbones,
                         std::span<const PerturbSpec> specs, const GridOptions& opts,
                         const std::filesystem::path& out);

  //! RunReport as JSON text; wall-clock fields are omitted unless requested
  std::string report_json(std::span<const CellReport> cells, bool include_timing = false);

  void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows);
  std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
  void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);
  std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path);

  //! shortest decimal text that parses back to exactly x
  std::string format_double(double x);
  double parse_double(std::string_view text);
}

#endif // PGNN_EVALHARNESS_HPP
