#include <iostream>

#include <CLI11.hpp>

#include "pgnn/commands.hpp"

namespace
{
  struct Options
  {
    std::string config;
    std::string out;
    std::string seeds;
    std::size_t parallel = 0;
  };

  void add_common(CLI::App* sub, Options& o, bool config_required)
  {
    auto* c = sub->add_option("--config", o.config, "experiment config (JSON)");
    if (config_required)
      c->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--seeds", o.seeds, "comma-separated seeds, e.g. 0,1,2");
    sub->add_option("--parallel", o.parallel, "grid cells run concurrently")->check(CLI::PositiveNumber);
  }

  pgnn::ExperimentConfig resolve(const Options& o)
  {
    pgnn::ExperimentConfig cfg = o.config.empty() ? pgnn::ExperimentConfig{} : pgnn::load_config(o.config);
    if (!o.out.empty())
      cfg.out = o.out;
    if (!o.seeds.empty())
      cfg.seeds = pgnn::parse_seed_list(o.seeds);
    if (o.parallel > 0)
      cfg.parallel = o.parallel;
    cfg.validate();
    return cfg;
  }
}

int main(int argc, char** argv)
{
  CLI::App app{"Perturbation-trained graph neural networks"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train one configuration over the seeds, write report.json");
  auto* grid = app.add_subcommand("grid", "run the dataset x backbone x perturbation grid, write results.csv");
  auto* sweep = app.add_subcommand("sweep", "evaluate trained methods under added random edges, write sweep.csv");
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every op and hook configuration");
  auto* timing = app.add_subcommand("timing", "time training epochs per method, write timing.csv");
  auto* defaults = app.add_subcommand("defaults", "print the default config, or the key reference");
  bool reference = false;
  defaults->add_flag("--reference", reference, "print one documented line per key");

  add_common(train, o, true);
  add_common(grid, o, true);
  add_common(sweep, o, true);
  add_common(gradcheck, o, false);
  add_common(timing, o, true);

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? 0 : pgnn::kExitConfig;
  }

  if (defaults->parsed())
  {
    std::cout << (reference ? pgnn::config_reference() : pgnn::default_config_json());
    return pgnn::kExitOk;
  }

  pgnn::CommandIo io{std::cout, std::cerr};
  try
  {
    const pgnn::ExperimentConfig cfg = resolve(o);
    if (train->parsed())
      return pgnn::cmd_train(cfg, io);
    if (grid->parsed())
      return pgnn::cmd_grid(cfg, io);
    if (sweep->parsed())
      return pgnn::cmd_sweep(cfg, io);
    if (gradcheck->parsed())
      return pgnn::cmd_gradcheck(cfg, io);
    return pgnn::cmd_timing(cfg, io);
  }
  catch (const pgnn::ConfigError& e)
  {
    std::cerr << "config error: " << e.what() << "\n";
    return pgnn::kExitConfig;
  }
  catch (const pgnn::DatasetError& e)
  {
    std::cerr << "dataset error: " << e.what() << "\n";
    return pgnn::kExitDataset;
  }
  catch (const pgnn::NumericError& e)
  {
    std::cerr << "diverged: " << e.what() << "\n";
    return pgnn::kExitDiverged;
  }
  catch (const std::exception& e)
  {
    std::cerr << "error: " << e.what() << "\n";
    return pgnn::kExitFailed;
  }
}
