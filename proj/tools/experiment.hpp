#pragma once

#include "json.hpp"
#include "vis/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace vis::cli {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

enum class Command { Solve, Derivative, Fd, Verify };

const char* to_string(Command c);

struct RunOptions {
  Command command = Command::Verify;
  std::optional<std::uint64_t> seed_override;
  int jobs = 1;
};

struct RunResult {
  json report;
  std::string csv;
  bool pass = false;
};

/// Parses a config file. Throws Error(ConfigError) for unreadable or malformed input.
json load_config(const std::string& path);

/// Validates the config and runs every ray of the requested command. Config
/// problems throw Error(ConfigError); numerical failures propagate.
RunResult run_experiment(const json& config, const RunOptions& opts);

/// Built-in nonsmooth kinds, sets and bang-bang templates whose id contains filter.
json catalog(const std::string& filter);

json error_json(const std::string& code, const std::string& message);

}  // namespace vis::cli
