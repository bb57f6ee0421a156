#ifndef PGNN_CONFIG_HPP
#define PGNN_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pgnn/backbones.hpp"
#include "pgnn/graph.hpp"
#include "pgnn/perturb.hpp"
#include "pgnn/training.hpp"

namespace pgnn
{
  //! unreadable, malformed or invalid experiment configuration
  class ConfigError : public std::runtime_error
  {
  public:
    using std::runtime_error::runtime_error;
  };

  //! A dataset directory or a synthetic block-model graph.
  struct DatasetConfig
  {
    std::string name = "csbm";
    std::optional<std::filesystem::path> path;
    std::optional<CsbmParams> csbm = CsbmParams{};

    Graph load() const;
  };

  struct GridConfig
  {
    std::vector<DatasetConfig> datasets;
    std::vector<BackboneKind> backbones;
    std::vector<PerturbSpec> perturbs;
  };

  struct SweepConfig
  {
    std::vector<double> ratios = {0.0, 0.1, 0.2, 0.3};
    //! methods trained per seed and evaluated under added edges
    std::vector<PerturbSpec> methods;
  };

  struct TimingConfig
  {
    std::size_t epochs = 50;
    std::size_t repeats = 5;
    std::vector<PerturbSpec> methods;
  };

  struct ExperimentConfig
  {
    DatasetConfig dataset;
    BackboneKind backbone = BackboneKind::Gcn;
    std::size_t hidden = 64;
    PerturbSpec perturb;
    //! pick the radius by validation accuracy before training
    bool auto_radius = false;
    TrainConfig train;
    std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
    std::filesystem::path out = "out";
    std::size_t parallel = 1;
    GridConfig grid;
    SweepConfig sweep;
    TimingConfig timing;

    ExperimentConfig();

    //! throws ConfigError naming the offending key
    void validate() const;
  };

  //! parse JSON text; unknown keys are rejected at every level
  ExperimentConfig parse_config(const std::string& text);
  ExperimentConfig load_config(const std::filesystem::path& path);

  //! the default configuration as JSON text
  std::string default_config_json();
  //! one line per key: dotted path, default value and meaning
  std::string config_reference();

  //! comma-separated list of unsigned integers, e.g. "0,1,2"
  std::vector<std::uint64_t> parse_seed_list(const std::string& text);
}

#endif // PGNN_CONFIG_HPP
