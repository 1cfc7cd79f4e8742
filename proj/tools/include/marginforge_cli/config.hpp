#ifndef MARGINFORGE_CLI_CONFIG_HPP_
#define MARGINFORGE_CLI_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "marginforge/data.hpp"
#include "marginforge/trainer.hpp"

namespace marginforge::cli {

/// Everything a command needs. One seed (run.seed) feeds the data, init and
/// shuffle streams.
struct RunConfig {
  TrainConfig train;
  SynthConfig data;
  std::string data_dir;
  std::string out_dir;

  void set_seed(std::uint64_t seed);
  std::uint64_t seed() const { return train.seed; }
};

// Flat "key = value" lines with dotted keys; '#' starts a comment line.
RunConfig parse_config(const std::filesystem::path& path);
RunConfig parse_config_text(std::string_view text, std::string_view origin = "<config>");

/// Sets one key from its textual value, as a config line would. `where`
/// prefixes error messages.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value,
                   std::string_view where);

/// Cross-field validation after all keys are applied.
void validate(const RunConfig& cfg);

/// Every key with its resolved value, in parse_config syntax.
std::string format_resolved_config(const RunConfig& cfg);

std::vector<std::string> known_keys();

}  // namespace marginforge::cli

#endif  // MARGINFORGE_CLI_CONFIG_HPP_
