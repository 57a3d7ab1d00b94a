#include "tsynth/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "tsynth/instance_io.hpp"
#include "tsynth/reachability.hpp"

namespace tsynth {

const char* to_string(SeedOutcome o) {
  switch (o) {
    case SeedOutcome::Success: return "success";
    case SeedOutcome::NoCars: return "no-cars";
    case SeedOutcome::Stage1Budget: return "stage1-budget";
    case SeedOutcome::Stage1NoTrace: return "stage1-no-trace";
    case SeedOutcome::Stage2Unsat: return "stage2-unsat";
    case SeedOutcome::Stage2Budget: return "stage2-budget";
    case SeedOutcome::EpisodeRejected: return "episode-rejected";
    case SeedOutcome::Error: return "error";
  }
  return "?";
}

std::size_t PipelineReport::successful() const {
  std::size_t n = 0;
  for (const auto& r : records) n += r.outcome == SeedOutcome::Success;
  return n;
}

double PipelineReport::success_fraction() const {
  return records.empty() ? 0.0 : static_cast<double>(successful()) / static_cast<double>(records.size());
}

nlohmann::json PipelineReport::to_json() const {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json j{{"seed", r.seed},
                     {"cars", r.cars},
                     {"outcome", to_string(r.outcome)},
                     {"stage1_seconds", r.stage1_seconds},
                     {"stage1_expanded", r.stage1_expanded},
                     {"stage2_seconds", r.stage2_seconds}};
    if (r.trace_time) j["trace_time"] = rational_to_json(*r.trace_time);
    if (r.steps) j["steps"] = *r.steps;
    if (r.episode_reward) j["episode_reward"] = *r.episode_reward;
    if (r.episode_length) j["episode_length"] = *r.episode_length;
    if (!r.diagnostic.empty()) j["diagnostic"] = r.diagnostic;
    seeds.push_back(std::move(j));
  }
  return {{"attempted", attempted()},
          {"successful", successful()},
          {"success_fraction", success_fraction()},
          {"seeds", seeds}};
}

MdpModel default_model(const Defaults& defaults) {
  return MdpModel(running_example(defaults), MdpConfig::from_defaults(defaults));
}

SeedRecord run_seed(std::uint64_t seed, const Defaults& defaults, const PipelineBudget& budget, SmtSolver& solver,
                    const MdpModel& model, Episode* episode_out) {
  using clock = std::chrono::steady_clock;
  SeedRecord rec;
  rec.seed = seed;
  try {
    RandomInstance inst = random_instance(seed, defaults);
    const CarTraffic& t = inst.traffic;
    rec.cars = t.cars().size();
    if (t.cars().empty()) {
      rec.outcome = SeedOutcome::NoCars;
      return rec;
    }
    SwaSystem sys(t);
    SolverOptions so;
    so.node_cap = budget.stage1_node_cap;
    if (budget.stage1_seconds) so.time_limit = std::chrono::duration<double>(*budget.stage1_seconds);
    SolveResult solved = solve_time_optimal(sys, so);
    rec.stage1_seconds = solved.stats.seconds;
    rec.stage1_expanded = solved.stats.expanded;
    if (!solved.optimal) {
      rec.outcome = SeedOutcome::Stage1Budget;
      return rec;
    }
    if (!solved.best.trace) {
      rec.outcome = SeedOutcome::Stage1NoTrace;
      return rec;
    }
    rec.trace_time = solved.best.time;

    RefinementSpec spec = RefinementSpec::from_defaults(defaults, t, 1);
    RefineOptions ro;
    ro.horizon_cap = defaults.horizon_cap;
    if (budget.stage2_seconds) ro.time_limit = std::chrono::duration<double>(*budget.stage2_seconds);
    const auto started = clock::now();
    RefineResult refined = solve_refinement(sys, *solved.best.trace, spec, solver, ro);
    rec.stage2_seconds = std::chrono::duration<double>(clock::now() - started).count();
    if (!refined.plan) {
      rec.outcome = refined.timed_out ? SeedOutcome::Stage2Budget : SeedOutcome::Stage2Unsat;
      return rec;
    }
    rec.steps = refined.plan->steps;
    spec.steps = refined.plan->steps;
    auto events = extract_events(sys, *solved.best.trace);
    if (auto check = validate_plan(*refined.plan, events, spec, t); !check) {
      rec.outcome = SeedOutcome::Error;
      rec.diagnostic = "plan rejected: " + check.diagnostic;
      return rec;
    }
    try {
      Episode e = plan_to_episode(*refined.plan, t, model, seed);
      rec.episode_reward = e.cumulative_reward();
      rec.episode_length = e.records.size();
      if (!e.successful() || e.cumulative_reward() < defaults.reward_success) {
        rec.outcome = SeedOutcome::EpisodeRejected;
        rec.diagnostic = "episode is not successful";
        return rec;
      }
      rec.outcome = SeedOutcome::Success;
      if (episode_out) *episode_out = std::move(e);
    } catch (const PlanConversionError& err) {
      rec.outcome = SeedOutcome::EpisodeRejected;
      rec.diagnostic = err.what();
    }
  } catch (const std::exception& err) {
    rec.outcome = SeedOutcome::Error;
    rec.diagnostic = err.what();
  }
  return rec;
}

GenerationResult generate_dataset(const std::vector<std::uint64_t>& seeds, const Defaults& defaults,
                                  const PipelineBudget& budget, const SolverFactory& make_solver,
                                  std::size_t workers, const std::function<void(const SeedRecord&)>& progress) {
  const MdpModel model = default_model(defaults);
  std::vector<SeedRecord> records(seeds.size());
  std::vector<std::optional<Episode>> episodes(seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  auto work = [&] {
    auto solver = make_solver();
    for (std::size_t i; (i = next++) < seeds.size();) {
      Episode e;
      records[i] = run_seed(seeds[i], defaults, budget, *solver, model, &e);
      if (records[i].outcome == SeedOutcome::Success) episodes[i] = std::move(e);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(records[i]);
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, seeds.size()));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  GenerationResult out;
  out.report.records = std::move(records);
  for (auto& e : episodes) {
    if (e) out.episodes.push_back(std::move(*e));
  }
  return out;
}

}  // namespace tsynth
