#pragma once

#include <string>

#include "fedgraph/experiment.hpp"

namespace fedgraph::cli {

struct CliConfig {
    RunConfig run;
    BenchMatrix bench;
    std::string partition_cache;  // empty = partition inline
};

// Parses a YAML run profile. Unknown keys and bad values raise ConfigError.
// Relative paths resolve against the directory holding the file.
CliConfig load_config(const std::string& path);

}  // namespace fedgraph::cli
