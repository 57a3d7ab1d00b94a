#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsynth/config.hpp"
#include "tsynth/mdp.hpp"
#include "tsynth/smt.hpp"

namespace tsynth {

struct PipelineBudget {
  std::uint64_t stage1_node_cap = 0;           // 0: unlimited
  std::optional<double> stage1_seconds;        // wall clock, on top of the node cap
  std::optional<double> stage2_seconds;        // whole linear search
};

enum class SeedOutcome : std::uint8_t {
  Success,
  NoCars,
  Stage1Budget,     // search cut short before a trace was proven optimal
  Stage1NoTrace,    // no trace exists
  Stage2Unsat,      // every horizon up to the cap is unsatisfiable
  Stage2Budget,
  EpisodeRejected,  // conversion to an MDP episode failed
  Error,
};
const char* to_string(SeedOutcome o);

struct SeedRecord {
  std::uint64_t seed = 0;
  std::size_t cars = 0;
  SeedOutcome outcome = SeedOutcome::Error;
  double stage1_seconds = 0;
  std::uint64_t stage1_expanded = 0;
  std::optional<Rational> trace_time;
  double stage2_seconds = 0;
  std::optional<std::int64_t> steps;  // refined horizon N
  std::optional<double> episode_reward;
  std::optional<std::size_t> episode_length;
  std::string diagnostic;
};

struct PipelineReport {
  std::vector<SeedRecord> records;
  std::size_t attempted() const { return records.size(); }
  std::size_t successful() const;
  double success_fraction() const;
  nlohmann::json to_json() const;
};

using SolverFactory = std::function<std::unique_ptr<SmtSolver>()>;

// Stage 1, stage 2 and episode conversion for one random instance.
SeedRecord run_seed(std::uint64_t seed, const Defaults& defaults, const PipelineBudget& budget, SmtSolver& solver,
                    const MdpModel& model, Episode* episode_out = nullptr);

struct GenerationResult {
  PipelineReport report;
  std::vector<Episode> episodes;  // successful ones, in seed order
};

// Runs the seeds on `workers` threads; results come back in seed order.
GenerationResult generate_dataset(const std::vector<std::uint64_t>& seeds, const Defaults& defaults,
                                  const PipelineBudget& budget, const SolverFactory& make_solver,
                                  std::size_t workers = 1,
                                  const std::function<void(const SeedRecord&)>& progress = {});

// Roster for datasets and the environment: the running example's network and cars.
MdpModel default_model(const Defaults& defaults);

}  // namespace tsynth
