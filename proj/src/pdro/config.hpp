#pragma once

#include <string>

#include "pdro/bench.hpp"

namespace pdro {

/// Flat `key = value` configuration mirroring ExperimentSpec. Lines starting
/// with '#' and blank lines are ignored; unknown keys and out-of-range values
/// are rejected with a message listing every violation. Defaults are the
/// ExperimentSpec defaults and are documented in the README.
ExperimentSpec load_config(const std::string& path);

ExperimentSpec parse_config_text(const std::string& text, const std::string& origin);

/// Default output path recorded in the config ("out" key, default
/// "results.csv").
std::string config_output_path(const std::string& path);

} // namespace pdro
