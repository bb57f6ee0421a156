#include "pgnn/evalharness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "pgnn/rng.hpp"

namespace pgnn
{
  double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const std::size_t> mask)
  {
    if (mask.empty())
      throw std::invalid_argument("accuracy: empty mask");
    if (labels.size() != logits.rows())
      throw ShapeError("accuracy: " + std::to_string(labels.size()) + " labels for " + std::to_string(logits.rows()) +
                       " rows");
    std::size_t hits = 0;
    for (std::size_t i : mask)
    {
      if (i >= logits.rows())
        throw std::out_of_range("accuracy: mask index " + std::to_string(i) + " out of range");
      auto row = logits.row(i);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      hits += best == labels[i] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(mask.size());
  }

  MeanStd mean_std(std::span<const double> values)
  {
    MeanStd out;
    if (values.empty())
      return out;
    for (double v : values)
      out.mean += v;
    out.mean /= static_cast<double>(values.size());
    if (values.size() < 2)
      return out;
    double ss = 0.0;
    for (double v : values)
      ss += (v - out.mean) * (v - out.mean);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return out;
  }

  namespace
  {
    enum Stream : std::uint64_t
    {
      kSweepEdges = 41,
      kUniformity = 42,
    };
  }

  SweepResult robustness_sweep(std::span<const TrainedMethod> methods, const Graph& g, std::span<const double> ratios,
                               std::span<const std::uint64_t> seeds)
  {
    if (!std::is_sorted(ratios.begin(), ratios.end()))
      throw std::invalid_argument("robustness_sweep: ratios must be sorted");
    for (double r : ratios)
      if (!(r >= 0.0))
        throw std::invalid_argument("robustness_sweep: ratios must be non-negative");
    for (const auto& m : methods)
      if (m.models.size() != seeds.size())
        throw std::invalid_argument("robustness_sweep: method '" + m.label + "' has " +
                                    std::to_string(m.models.size()) + " models for " + std::to_string(seeds.size()) +
                                    " seeds");

    SweepResult result;
    result.seeds.assign(seeds.begin(), seeds.end());
    std::map<std::pair<std::size_t, std::size_t>, std::vector<double>> acc;
    for (std::size_t ri = 0; ri < ratios.size(); ++ri)
      for (std::size_t s = 0; s < seeds.size(); ++s)
      {
        const Graph noisy = ratios[ri] == 0.0 ? g : add_random_edges(g, ratios[ri], derive_seed(seeds[s], kSweepEdges));
        for (std::size_t mi = 0; mi < methods.size(); ++mi)
        {
          const Model& model = methods[mi].models[s];
          acc[{mi, ri}].push_back(accuracy(model.logits(model.prepare(noisy)), noisy.labels, noisy.splits.test));
        }
      }
    for (std::size_t mi = 0; mi < methods.size(); ++mi)
      for (std::size_t ri = 0; ri < ratios.size(); ++ri)
      {
        const MeanStd ms = mean_std(acc[{mi, ri}]);
        result.rows.push_back({methods[mi].label, ratios[ri], ms.mean, ms.std});
      }
    return result;
  }

  double uniformity(const Matrix& embeddings, std::size_t sample_pairs, std::uint64_t seed)
  {
    const std::size_t n = embeddings.rows();
    if (n < 2 || embeddings.cols() < 2)
      throw std::invalid_argument("uniformity: needs at least 2 rows and 2 columns");
    if (sample_pairs == 0)
      throw std::invalid_argument("uniformity: sample_pairs must be positive");
    Matrix z = embeddings;
    for (std::size_t i = 0; i < n; ++i)
    {
      auto row = z.row(i);
      double sq = 0.0;
      for (double v : row)
        sq += v * v;
      if (sq == 0.0)
        throw std::invalid_argument("uniformity: row " + std::to_string(i) + " has zero norm");
      const double inv = 1.0 / std::sqrt(sq);
      for (double& v : row)
        v *= inv;
    }
    auto exponent = [&z](std::size_t i, std::size_t j) {
      double d = 0.0;
      for (std::size_t c = 0; c < z.cols(); ++c)
      {
        const double t = z(i, c) - z(j, c);
        d += t * t;
      }
      return -2.0 * d;
    };

    std::vector<double> terms;
    const std::size_t all_pairs = n * (n - 1) / 2;
    if (all_pairs <= sample_pairs)
    {
      terms.reserve(all_pairs);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
          terms.push_back(exponent(i, j));
    }
    else
    {
      Rng rng(derive_seed(seed, kUniformity));
      std::uniform_int_distribution<std::size_t> first(0, n - 1), second(0, n - 2);
      terms.reserve(sample_pairs);
      for (std::size_t k = 0; k < sample_pairs; ++k)
      {
        const std::size_t i = first(rng);
        std::size_t j = second(rng);
        if (j >= i)
          ++j;
        terms.push_back(exponent(i, j));
      }
    }
    const double top = *std::max_element(terms.begin(), terms.end());
    double acc = 0.0;
    for (double t : terms)
      acc += std::exp(t - top);
    return top + std::log(acc / static_cast<double>(terms.size()));
  }

  std::vector<TimingRow> timing_report(std::span<const TimingMethod> methods, const Graph& g, BackboneKind backbone,
                                       std::size_t hidden, const TrainConfig& cfg, std::size_t epochs,
                                       std::size_t repeats)
  {
    if (repeats < 3)
      throw std::invalid_argument("timing_report: repeats must be >= 3");
    if (epochs < 1)
      throw std::invalid_argument("timing_report: epochs must be >= 1");
    TrainConfig tc = cfg;
    tc.epochs = epochs;
    tc.patience = 0;
    std::vector<TimingRow> rows(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m)
      rows[m].method = methods[m].label;
    for (std::size_t r = 0; r < repeats; ++r)
      for (std::size_t m = 0; m < methods.size(); ++m)
      {
        Model model = Model::create(backbone, g, hidden, tc.seed);
        const RunReport rep = train(model, g, tc, methods[m].spec);
        if (!rep.ok())
          throw NumericError("timing_report: " + methods[m].label + " diverged: " + rep.error);
        rows[m].repeats.push_back(rep.train_seconds());
      }
    for (auto& row : rows)
    {
      const MeanStd ms = mean_std(row.repeats);
      row.mean_seconds = ms.mean;
      row.std_seconds = ms.std;
    }
    return rows;
  }

  double select_radius(const Graph& g, BackboneKind backbone, std::size_t hidden, const TrainConfig& cfg,
                       PerturbSpec spec, std::span<const std::uint64_t> seeds, std::span<const double> candidates)
  {
    if (candidates.empty() || seeds.empty())
      throw std::invalid_argument("select_radius: needs candidates and seeds");
    double best_radius = candidates[0];
    double best_val = -1.0;
    for (double c : candidates)
    {
      spec.ball.radius = c;
      std::vector<double> vals;
      for (std::uint64_t s : seeds)
      {
        TrainConfig tc = cfg;
        tc.seed = s;
        Model model = Model::create(backbone, g, hidden, s);
        vals.push_back(train(model, g, tc, spec).best_val_acc);
      }
      const double mean = mean_std(vals).mean;
      if (mean > best_val)
      {
        best_val = mean;
        best_radius = c;
      }
    }
    return best_radius;
  }

  // ---------------------------------------------------------- formatting

  std::string format_double(double x)
  {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
  }

  double parse_double(std::string_view text)
  {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size())
      throw std::invalid_argument("cannot parse number '" + std::string(text) + "'");
    return v;
  }

  namespace
  {
    std::vector<std::string> split_csv_line(const std::string& line)
    {
      std::vector<std::string> out;
      std::string cell;
      std::istringstream ss(line);
      while (std::getline(ss, cell, ','))
        out.push_back(cell);
      if (!line.empty() && line.back() == ',')
        out.emplace_back();
      return out;
    }

    std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header)
    {
      std::ifstream in(path);
      if (!in)
        throw std::runtime_error("cannot open " + path.string());
      std::string line;
      if (!std::getline(in, line) || line != header)
        throw std::runtime_error(path.string() + ": expected header '" + header + "'");
      const std::size_t width = split_csv_line(header).size();
      std::vector<std::vector<std::string>> rows;
      while (std::getline(in, line))
      {
        if (line.empty())
          continue;
        auto cells = split_csv_line(line);
        if (cells.size() != width)
          throw std::runtime_error(path.string() + ": malformed row '" + line + "'");
        rows.push_back(std::move(cells));
      }
      return rows;
    }

    void write_atomically(const std::filesystem::path& path, const std::string& content)
    {
      if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
      auto tmp = path;
      tmp += ".tmp";
      {
        std::ofstream out(tmp, std::ios::binary);
        if (!out)
          throw std::runtime_error("cannot write " + tmp.string());
        out << content;
      }
      std::filesystem::rename(tmp, path);
    }

    constexpr const char* kResultsHeader = "dataset,backbone,strategy,form,mean_acc,std_acc,n_seeds";
    constexpr const char* kSweepHeader = "method,ratio,mean_acc,std_acc";
  }

  void write_results_csv(const std::filesystem::path& path, std::span<const ResultRow> rows)
  {
    std::string s = std::string(kResultsHeader) + "\n";
    for (const auto& r : rows)
      s += r.dataset + "," + r.backbone + "," + r.strategy + "," + r.form + "," + format_double(r.mean_acc) + "," +
           format_double(r.std_acc) + "," + std::to_string(r.n_seeds) + "\n";
    write_atomically(path, s);
  }

  std::vector<ResultRow> read_results_csv(const std::filesystem::path& path)
  {
    std::vector<ResultRow> out;
    for (const auto& c : read_csv(path, kResultsHeader))
      out.push_back({c[0], c[1], c[2], c[3], parse_double(c[4]), parse_double(c[5]),
                     static_cast<std::size_t>(std::stoull(c[6]))});
    return out;
  }

  void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows)
  {
    std::string s = std::string(kSweepHeader) + "\n";
    for (const auto& r : rows)
      s += r.method + "," + format_double(r.ratio) + "," + format_double(r.mean_acc) + "," + format_double(r.std_acc) +
           "\n";
    write_atomically(path, s);
  }

  std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& path)
  {
    std::vector<SweepRow> out;
    for (const auto& c : read_csv(path, kSweepHeader))
      out.push_back({c[0], parse_double(c[1]), parse_double(c[2]), parse_double(c[3])});
    return out;
  }

  // --------------------------------------------------------------- reports

  namespace
  {
    nlohmann::json run_to_json(const RunReport& r, bool include_timing)
    {
      nlohmann::json epochs = nlohmann::json::array();
      for (const auto& e : r.epochs)
      {
        nlohmann::json je = {{"train_loss", e.train_loss}, {"train_acc", e.train_acc}, {"val_loss", e.val_loss},
                             {"val_acc", e.val_acc},       {"generator_step", e.generator_step}};
        if (include_timing)
          je["seconds"] = e.seconds;
        epochs.push_back(std::move(je));
      }
      nlohmann::json j = {{"method", r.method},
                          {"status", r.status},
                          {"seed", r.seed},
                          {"epochs_run", r.epochs.size()},
                          {"best_epoch", r.best_epoch},
                          {"best_val_acc", r.best_val_acc},
                          {"test_acc", r.test_acc},
                          {"params_digest", r.params_digest},
                          {"epochs", std::move(epochs)}};
      if (!r.error.empty())
        j["error"] = r.error;
      if (include_timing)
        j["train_seconds"] = r.train_seconds();
      return j;
    }

    nlohmann::json cell_runs_json(const CellReport& c, bool include_timing)
    {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : c.runs)
      {
        nlohmann::json j = run_to_json(r, include_timing);
        j["dataset"] = c.dataset;
        j["backbone"] = c.backbone;
        j["strategy"] = c.strategy;
        j["form"] = c.form;
        arr.push_back(std::move(j));
      }
      return arr;
    }

    std::string cell_key(const std::string& d, const std::string& b, const std::string& s, const std::string& f)
    {
      return d + "|" + b + "|" + s + "|" + f;
    }

    std::string form_label(const PerturbSpec& spec)
    {
      return spec.strategy == Strategy::None ? "none" : to_string(spec.form);
    }
  }

  std::string report_json(std::span<const CellReport> cells, bool include_timing)
  {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cells)
      for (auto& j : cell_runs_json(c, include_timing))
        arr.push_back(std::move(j));
    return arr.dump(2) + "\n";
  }

  GridOutcome run_matrix(std::span<const GridDataset> datasets, std::span<const BackboneKind> backbones,
                         std::span<const PerturbSpec> specs, const GridOptions& opts, const std::filesystem::path& out)
  {
    if (opts.seeds.empty())
      throw std::invalid_argument("run_matrix: no seeds");
    opts.train.validate();
    const auto results_path = out / "results.csv";
    const auto report_path = out / "report.json";

    GridOutcome outcome;
    std::vector<ResultRow> done;
    nlohmann::json report = nlohmann::json::array();
    if (std::filesystem::exists(results_path))
      done = read_results_csv(results_path);
    if (std::filesystem::exists(report_path))
    {
      std::ifstream in(report_path);
      report = nlohmann::json::parse(in);
      if (!report.is_array())
        throw std::runtime_error(report_path.string() + ": expected a JSON array");
    }
    std::map<std::string, ResultRow> finished;
    for (const auto& r : done)
      finished[cell_key(r.dataset, r.backbone, r.strategy, r.form)] = r;

    struct Cell
    {
      std::size_t dataset;
      BackboneKind backbone;
      PerturbSpec spec;
      std::string key;
    };
    std::vector<Cell> pending;
    std::vector<std::string> order;
    for (std::size_t d = 0; d < datasets.size(); ++d)
      for (BackboneKind b : backbones)
        for (const auto& spec : specs)
        {
          const std::string key = cell_key(datasets[d].name, to_string(b), to_string(spec.strategy), form_label(spec));
          order.push_back(key);
          if (finished.count(key))
            ++outcome.cells_skipped;
          else
            pending.push_back({d, b, spec, key});
        }

    // load each dataset once, lazily
    std::vector<std::optional<Graph>> graphs(datasets.size());
    std::vector<std::once_flag> loaded(datasets.size());
    std::vector<std::string> load_errors(datasets.size());

    std::mutex writer;
    auto flush = [&] {
      std::vector<ResultRow> rows;
      for (const auto& key : order)
        if (auto it = finished.find(key); it != finished.end())
          rows.push_back(it->second);
      write_results_csv(results_path, rows);
      write_atomically(report_path, report.dump(2) + "\n");
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next++; k < pending.size(); k = next++)
      {
        const Cell& cell = pending[k];
        const GridDataset& ds = datasets[cell.dataset];
        CellReport cr{ds.name, to_string(cell.backbone), to_string(cell.spec.strategy), form_label(cell.spec), {}};
        std::string failure;
        try
        {
          std::call_once(loaded[cell.dataset], [&] {
            try
            {
              graphs[cell.dataset] = ds.load();
            }
            catch (const std::exception& e)
            {
              load_errors[cell.dataset] = e.what();
            }
          });
          if (!graphs[cell.dataset])
            throw DatasetError(load_errors[cell.dataset]);
          const Graph& g = *graphs[cell.dataset];
          for (std::uint64_t seed : opts.seeds)
          {
            TrainConfig tc = opts.train;
            tc.seed = seed;
            Model model = Model::create(cell.backbone, g, opts.hidden, seed);
            cr.runs.push_back(train(model, g, tc, cell.spec));
          }
        }
        catch (const std::exception& e)
        {
          failure = e.what();
        }

        std::vector<double> accs;
        for (const auto& r : cr.runs)
          if (r.ok())
            accs.push_back(r.test_acc);
        if (failure.empty() && accs.empty())
          failure = "every run diverged";

        std::lock_guard lock(writer);
        if (failure.empty())
        {
          const MeanStd ms = mean_std(accs);
          finished[cell.key] = {cr.dataset, cr.backbone, cr.strategy, cr.form, ms.mean, ms.std, accs.size()};
          for (auto& j : cell_runs_json(cr, false))
            report.push_back(std::move(j));
          ++outcome.cells_run;
          if (opts.log)
            opts.log(cell.key + ": mean " + format_double(ms.mean) + " over " + std::to_string(accs.size()) + " seeds");
        }
        else
        {
          report.push_back({{"dataset", cr.dataset},
                            {"backbone", cr.backbone},
                            {"strategy", cr.strategy},
                            {"form", cr.form},
                            {"status", "failed"},
                            {"error", failure}});
          ++outcome.cells_failed;
          if (opts.log)
            opts.log(cell.key + ": failed: " + failure);
        }
        flush();
      }
    };

    const std::size_t threads = std::max<std::size_t>(1, std::min(opts.parallel, pending.size()));
    if (threads <= 1)
      worker();
    else
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back(worker);
    }
    if (pending.empty() && !std::filesystem::exists(results_path))
      flush();

    for (const auto& key : order)
      if (auto it = finished.find(key); it != finished.end())
        outcome.results.push_back(it->second);
    return outcome;
  }
}
