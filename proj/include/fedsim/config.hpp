#pragma once

#include <string>

#include "fedsim/simulation.hpp"

namespace fedsim {

// Flat key=value text (lines are blank, `#` comments, or key=value). Missing
// keys take the documented defaults; tau_max additionally defaults to
// epochs - 1 when absent. Unknown keys, malformed values, and cross-field
// invariant violations all raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& text);

// Canonical key order, shortest round-trip number formatting. Parse of the
// result reproduces the config exactly (parse -> serialize -> parse fixpoint).
std::string serialize_config(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::string& path);

}  // namespace fedsim
