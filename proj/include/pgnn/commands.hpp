#ifndef PGNN_COMMANDS_HPP
#define PGNN_COMMANDS_HPP

#include <iosfwd>

#include "pgnn/config.hpp"

namespace pgnn
{
  enum ExitCode : int
  {
    kExitOk = 0,
    kExitFailed = 1,
    kExitConfig = 2,
    kExitDataset = 3,
    kExitDiverged = 4,
  };

  //! Streams used by a command: the one-line summary goes to `summary`,
  //! progress and diagnostics to `log`.
  struct CommandIo
  {
    std::ostream& summary;
    std::ostream& log;
  };

  //! Each command writes its files under cfg.out and returns an exit code.
  //! ConfigError and DatasetError propagate to the caller.
  int cmd_train(const ExperimentConfig& cfg, CommandIo io);
  int cmd_grid(const ExperimentConfig& cfg, CommandIo io);
  int cmd_sweep(const ExperimentConfig& cfg, CommandIo io);
  int cmd_gradcheck(const ExperimentConfig& cfg, CommandIo io);
  int cmd_timing(const ExperimentConfig& cfg, CommandIo io);
}

#endif // PGNN_COMMANDS_HPP
