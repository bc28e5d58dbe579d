#pragma once

#include <filesystem>

#include "punct/ensemble.hpp"
#include "punct/synth.hpp"
#include "punct/tdnn.hpp"

namespace punct {

// Declarative experiment configuration (JSON, versioned). Every field is
// optional and falls back to the built-in defaults; unknown keys are
// rejected. Parse errors carry line:column positions, semantic errors the
// offending key path.
struct RunConfig {
    TdnnConfig model = TdnnConfig::standard();
    double learning_rate = 1e-5;
    double momentum = 0.9;
    TrainOptions training;
    EnsembleConfig ensemble;
};

RunConfig load_run_config(const std::filesystem::path& path);   // throws ConfigError
SynthSpec load_synth_spec(const std::filesystem::path& path);   // throws ConfigError

}  // namespace punct
