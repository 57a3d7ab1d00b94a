#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "tsynth/config.hpp"
#include "tsynth/pipeline.hpp"

namespace tsynth {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Everything a command can be configured with. The JSON form has a "model"
// block with the Defaults fields (same names) and a "pipeline" block.
struct ToolConfig {
  Defaults model;
  std::optional<double> stage2_seconds;  // wall clock for the whole linear search
  std::string solver_path;             // empty: ExternalSmtSolver::default_executable()
  std::uint64_t solver_rlimit = 0;     // z3 resource limit per query, 0: none
  std::size_t workers = 1;

  // Stage 1 uses the model's node cap and timeout.
  PipelineBudget budget() const;
};

nlohmann::json config_to_json(const ToolConfig& c);
// Overlays the keys present in `j` onto `base`; unknown keys are errors.
ToolConfig merge_config(ToolConfig base, const nlohmann::json& j);
ToolConfig load_config(const std::filesystem::path& file, ToolConfig base = {});

}  // namespace tsynth
