#include "pgnn/commands.hpp"

#include <fstream>
#include <ostream>

#include <json.hpp>

#include "pgnn/evalharness.hpp"
#include "pgnn/gradcheck.hpp"

namespace pgnn
{
  namespace
  {
    void write_text(const std::filesystem::path& path, const std::string& text)
    {
      std::filesystem::create_directories(path.parent_path());
      std::ofstream out(path, std::ios::binary);
      if (!out)
        throw std::runtime_error("cannot write " + path.string());
      out << text;
    }

    std::string pct(double x) { return format_double(std::round(x * 10000.0) / 100.0); }

    //! resolves auto_radius for a spec, logging the choice
    PerturbSpec resolved_spec(const ExperimentConfig& cfg, const Graph& g, PerturbSpec spec, CommandIo io)
    {
      if (!cfg.auto_radius || spec.strategy == Strategy::None || spec.strategy == Strategy::Edge)
        return spec;
      spec.ball.radius = select_radius(g, cfg.backbone, cfg.hidden, cfg.train, spec, cfg.seeds);
      io.log << "selected radius " << format_double(spec.ball.radius) << " for " << spec.label() << "\n";
      return spec;
    }

    std::vector<RunReport> train_seeds(const ExperimentConfig& cfg, const Graph& g, const PerturbSpec& spec,
                                       std::vector<Model>* models, CommandIo io)
    {
      std::vector<RunReport> runs;
      for (std::uint64_t seed : cfg.seeds)
      {
        TrainConfig tc = cfg.train;
        tc.seed = seed;
        Model model = Model::create(cfg.backbone, g, cfg.hidden, seed);
        runs.push_back(train(model, g, tc, spec));
        const RunReport& r = runs.back();
        io.log << spec.label() << " seed " << seed << ": " << r.status << ", test acc " << format_double(r.test_acc)
               << " (best epoch " << r.best_epoch << " of " << r.epochs.size() << ")\n";
        if (models)
          models->push_back(std::move(model));
      }
      return runs;
    }

    bool any_diverged(const std::vector<RunReport>& runs)
    {
      return std::any_of(runs.begin(), runs.end(), [](const auto& r) { return !r.ok(); });
    }
  }

  int cmd_train(const ExperimentConfig& cfg, CommandIo io)
  {
    cfg.validate();
    const Graph g = cfg.dataset.load();
    const PerturbSpec spec = resolved_spec(cfg, g, cfg.perturb, io);
    const auto runs = train_seeds(cfg, g, spec, nullptr, io);

    const CellReport cell{cfg.dataset.name, to_string(cfg.backbone), to_string(spec.strategy),
                          spec.strategy == Strategy::None ? "none" : to_string(spec.form), runs};
    const auto path = cfg.out / "report.json";
    write_text(path, report_json({&cell, 1}));

    std::vector<double> accs;
    for (const auto& r : runs)
      if (r.ok())
        accs.push_back(r.test_acc);
    const MeanStd ms = mean_std(accs);
    io.summary << "train " << spec.label() << " " << to_string(cfg.backbone) << " on " << cfg.dataset.name
               << ": test acc " << pct(ms.mean) << " +- " << pct(ms.std) << " over " << accs.size() << "/"
               << runs.size() << " seeds -> " << path.string() << "\n";
    return any_diverged(runs) ? kExitDiverged : kExitOk;
  }

  int cmd_grid(const ExperimentConfig& cfg, CommandIo io)
  {
    cfg.validate();
    std::vector<GridDataset> datasets;
    for (const auto& d : cfg.grid.datasets.empty() ? std::vector{cfg.dataset} : cfg.grid.datasets)
      datasets.push_back({d.name, [d] { return d.load(); }});
    const auto backbones = cfg.grid.backbones.empty() ? std::vector{cfg.backbone} : cfg.grid.backbones;
    auto specs = cfg.grid.perturbs;
    if (specs.empty())
      specs = {PerturbSpec{}, cfg.perturb};

    GridOptions opts;
    opts.hidden = cfg.hidden;
    opts.train = cfg.train;
    opts.seeds = cfg.seeds;
    opts.parallel = cfg.parallel;
    opts.log = [&io](const std::string& line) { io.log << line << "\n"; };
    const GridOutcome outcome = run_matrix(datasets, backbones, specs, opts, cfg.out);

    io.summary << "grid: " << outcome.cells_run << " run, " << outcome.cells_skipped << " skipped, "
               << outcome.cells_failed << " failed -> " << (cfg.out / "results.csv").string() << " "
               << (cfg.out / "report.json").string() << "\n";
    return outcome.cells_failed > 0 ? kExitDiverged : kExitOk;
  }

  int cmd_sweep(const ExperimentConfig& cfg, CommandIo io)
  {
    cfg.validate();
    const Graph g = cfg.dataset.load();
    std::vector<TrainedMethod> methods;
    bool diverged = false;
    for (const auto& m : cfg.sweep.methods)
    {
      const PerturbSpec spec = resolved_spec(cfg, g, m, io);
      TrainedMethod tm{spec.label(), {}};
      diverged = any_diverged(train_seeds(cfg, g, spec, &tm.models, io)) || diverged;
      methods.push_back(std::move(tm));
    }
    const SweepResult result = robustness_sweep(methods, g, cfg.sweep.ratios, cfg.seeds);
    const auto csv = cfg.out / "sweep.csv";
    write_sweep_csv(csv, result.rows);
    nlohmann::json meta = {{"dataset", cfg.dataset.name}, {"backbone", to_string(cfg.backbone)}, {"seeds", result.seeds}};
    write_text(cfg.out / "sweep.json", meta.dump(2) + "\n");

    io.summary << "sweep: " << methods.size() << " methods x " << cfg.sweep.ratios.size() << " ratios over "
               << cfg.seeds.size() << " seeds -> " << csv.string() << "\n";
    return diverged ? kExitDiverged : kExitOk;
  }

  int cmd_gradcheck(const ExperimentConfig& cfg, CommandIo io)
  {
    const std::uint64_t seed = cfg.seeds.empty() ? 0 : cfg.seeds.front();
    const GradCheckSummary s = run_gradcheck_suite(seed);
    nlohmann::json cases = nlohmann::json::array();
    for (const auto& c : s.cases)
    {
      io.log << (c.passed ? "pass " : "FAIL ") << c.name << " (" << c.instances
             << " instances, max rel err " << c.max_rel_error << ")\n";
      cases.push_back({{"name", c.name}, {"instances", c.instances}, {"max_rel_error", c.max_rel_error},
                       {"passed", c.passed}});
    }
    const auto path = cfg.out / "gradcheck.json";
    write_text(path, nlohmann::json{{"tolerance", s.tolerance}, {"passed", s.passed()}, {"cases", cases}}.dump(2) +
                       "\n");
    io.summary << "gradcheck: " << (s.passed() ? "pass" : "FAIL") << ", " << s.cases.size() << " suites, "
               << s.instances() << " instances, max rel err " << s.max_rel_error() << " -> " << path.string()
               << "\n";
    return s.passed() ? kExitOk : kExitFailed;
  }

  int cmd_timing(const ExperimentConfig& cfg, CommandIo io)
  {
    cfg.validate();
    const Graph g = cfg.dataset.load();
    std::vector<TimingMethod> methods;
    for (const auto& m : cfg.timing.methods)
      methods.push_back({m.label(), m});
    TrainConfig tc = cfg.train;
    tc.seed = cfg.seeds.front();
    const auto rows = timing_report(methods, g, cfg.backbone, cfg.hidden, tc, cfg.timing.epochs, cfg.timing.repeats);

    std::string csv = "method,mean_seconds,std_seconds,repeats\n";
    for (const auto& r : rows)
    {
      csv += r.method + "," + format_double(r.mean_seconds) + "," + format_double(r.std_seconds) + "," +
             std::to_string(r.repeats.size()) + "\n";
      io.log << r.method << ": " << r.mean_seconds << " s per " << cfg.timing.epochs << " epochs\n";
    }
    const auto path = cfg.out / "timing.csv";
    write_text(path, csv);
    io.summary << "timing: " << rows.size() << " methods, " << cfg.timing.repeats << " repeats of "
               << cfg.timing.epochs << " epochs -> " << path.string() << "\n";
    return kExitOk;
  }
}
