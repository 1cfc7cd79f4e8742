#ifndef MARGINFORGE_CLI_COMMANDS_HPP_
#define MARGINFORGE_CLI_COMMANDS_HPP_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "marginforge/data.hpp"
#include "marginforge_cli/config.hpp"

namespace marginforge::cli {

struct CommonOptions {
  std::optional<std::string> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> data;  // overrides paths.data_dir
};

/// Config file (or defaults) with command-line overrides applied.
RunConfig resolve_config(const CommonOptions& opts);

/// Loads paths.data_dir if set, otherwise generates from the data section.
Dataset resolve_dataset(const RunConfig& cfg);

struct InspectOptions {
  std::string checkpoint;
  std::string split = "train";
  std::size_t batch_index = 0;
  std::string expert = "all";
};

struct EvalOptions {
  std::string checkpoint;
  std::string split = "val";
};

struct SweepOptions {
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> params;  // "key=v1,v2,..."
};

// Each command returns a process exit code and reports failures on `err`.
int cmd_gen_data(const CommonOptions& opts, std::ostream& out, std::ostream& err);
int cmd_train(const CommonOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const CommonOptions& opts, const EvalOptions& eval, std::ostream& out, std::ostream& err);
int cmd_inspect_margins(const CommonOptions& opts, const InspectOptions& inspect, std::ostream& out,
                        std::ostream& err);
int cmd_sweep(const CommonOptions& opts, const SweepOptions& sweep, std::ostream& out, std::ostream& err);

/// Worker count for sweeps, from MARGINFORGE_THREADS (default 1).
unsigned sweep_threads();

}  // namespace marginforge::cli

#endif  // MARGINFORGE_CLI_COMMANDS_HPP_
