#pragma once

#include <string>

#include "dfmpc/sim.hpp"

namespace dfmpc::io {

inline constexpr int kScenarioFormatVersion = 1;

/// A parsed scenario file: the scenario plus where its artifacts go.
struct ScenarioFile {
  sim::Scenario scenario;
  std::string out_dir;  // empty when the file does not name one
};

/// Parses and validates a scenario document. Unknown keys, a missing or
/// unsupported "version" and malformed values throw ConfigError (with the
/// offending key path); dimension mismatches throw DimensionError.
ScenarioFile parse_scenario(const std::string& text);

/// Reads `path` and parses it. Throws ConfigError when unreadable.
ScenarioFile load_scenario(const std::string& path);

/// Serializes a scenario so that parse_scenario reproduces it. Settings
/// flagged in Scenario::derived are written as "auto".
std::string dump_scenario(const sim::Scenario& scenario, const std::string& out_dir = {});

}  // namespace dfmpc::io
