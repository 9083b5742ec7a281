#pragma once

#include <filesystem>

#include "transfuse/fuse.hpp"
#include "transfuse/trainer.hpp"

namespace transfuse {

// One config file drives every subcommand. All sections and keys are
// optional; unknown keys are rejected.
struct RunConfig {
    TrainConfig train;
    FusionRule fusion;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig default_run_config();

}  // namespace transfuse
