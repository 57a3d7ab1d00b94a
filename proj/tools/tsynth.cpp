// tsynth: command line front end for the synthesis pipeline.
#include <chrono>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tsynth/config_io.hpp"
#include "tsynth/dataset.hpp"
#include "tsynth/env_protocol.hpp"
#include "tsynth/instance_io.hpp"
#include "tsynth/pipeline.hpp"
#include "tsynth/reachability.hpp"
#include "tsynth/refinement.hpp"
#include "tsynth/render.hpp"
#include "tsynth/smt.hpp"
#include "tsynth/trace.hpp"

namespace {

using namespace tsynth;

enum Exit : int {
  kOk = 0,
  kValidationFailed = 1,
  kInvalidInput = 2,
  kUnsat = 3,
  kTimeout = 4,
  kSolverError = 5,
};

// Flag overrides; unset options leave the config value alone.
struct Overrides {
  std::string config_file;
  std::optional<std::string> epsilon, nominal_speed, max_speed, max_accel, max_decel;
  std::optional<std::int64_t> slack, horizon_cap, episode_cap;
  std::optional<double> solve_timeout;
  std::optional<std::uint64_t> node_cap;
  std::optional<std::string> solver;
  std::optional<std::uint64_t> solver_rlimit;
  std::optional<double> stage2_seconds;
  std::optional<std::size_t> workers;
};

ToolConfig effective_config(const Overrides& o) {
  ToolConfig c;
  if (!o.config_file.empty()) c = load_config(o.config_file, c);
  nlohmann::json model = nlohmann::json::object();
  nlohmann::json pipeline = nlohmann::json::object();
  if (o.epsilon) model["epsilon"] = *o.epsilon;
  if (o.nominal_speed) model["nominal_speed"] = *o.nominal_speed;
  if (o.max_speed) model["max_speed"] = *o.max_speed;
  if (o.max_accel) model["max_accel"] = *o.max_accel;
  if (o.max_decel) model["max_decel"] = *o.max_decel;
  if (o.slack) model["timing_slack"] = *o.slack;
  if (o.horizon_cap) model["horizon_cap"] = *o.horizon_cap;
  if (o.episode_cap) model["episode_cap"] = *o.episode_cap;
  if (o.solve_timeout) model["solve_timeout_seconds"] = *o.solve_timeout;
  if (o.node_cap) model["solve_node_cap"] = *o.node_cap;
  if (o.solver) pipeline["solver_path"] = *o.solver;
  if (o.solver_rlimit) pipeline["solver_rlimit"] = *o.solver_rlimit;
  if (o.stage2_seconds) pipeline["stage2_seconds"] = *o.stage2_seconds;
  if (o.workers) pipeline["workers"] = *o.workers;
  return merge_config(std::move(c), {{"model", model}, {"pipeline", pipeline}});
}

std::unique_ptr<SmtSolver> make_solver(const ToolConfig& c) {
  std::vector<std::string> extra;
  if (c.solver_rlimit > 0) extra.push_back("rlimit=" + std::to_string(c.solver_rlimit));
  const std::string exe = c.solver_path.empty() ? ExternalSmtSolver::default_executable() : c.solver_path;
  return std::make_unique<ExternalSmtSolver>(exe, std::move(extra));
}

void write_text(const std::string& file, const std::string& text) {
  if (file.empty() || file == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file);
  out << text;
}

int cmd_gen_instance(const ToolConfig& c, std::optional<std::uint64_t> seed, const std::string& out) {
  if (seed) {
    RandomInstance inst = random_instance(*seed, c.model);
    write_text(out, instance_to_json(inst.traffic, *seed).dump(2) + "\n");
  } else {
    write_text(out, instance_to_json(running_example(c.model)).dump(2) + "\n");
  }
  return kOk;
}

int cmd_solve(const ToolConfig& c, const std::string& instance, bool no_heuristic, bool no_subsumption,
              const std::string& emit_trace) {
  const CarTraffic t = read_instance(instance).traffic;
  SwaSystem sys(t);
  SolverOptions so;
  so.use_heuristic = !no_heuristic;
  so.use_subsumption = !no_subsumption;
  so.node_cap = c.model.solve_node_cap;
  if (c.model.solve_timeout_seconds > 0) so.time_limit = std::chrono::duration<double>(c.model.solve_timeout_seconds);
  SolveResult r = solve_time_optimal(sys, so);
  nlohmann::json summary{{"optimal", r.optimal},
                         {"expanded", r.stats.expanded},
                         {"seconds", r.stats.seconds},
                         {"time", r.best.time ? rational_to_json(*r.best.time) : nlohmann::json(nullptr)}};
  std::cerr << summary.dump() << '\n';
  if (r.best.trace && !emit_trace.empty()) {
    write_trace(emit_trace, sys, *r.best.trace, r.optimal ? r.best.time : std::nullopt);
  }
  if (!r.optimal) return kTimeout;
  if (!r.best.trace) {
    std::cerr << "no configuration reaches the goals\n";
    return kUnsat;
  }
  if (emit_trace.empty()) std::cout << trace_to_json(sys, *r.best.trace, r.best.time).dump(2) << '\n';
  return kOk;
}

int cmd_refine(const ToolConfig& c, const std::string& instance, const std::string& trace_file,
               const std::string& emit_plan, const std::string& start, bool full_pairs) {
  const CarTraffic t = read_instance(instance).traffic;
  SwaSystem sys(t);
  const Trace trace = read_trace(trace_file, sys);
  if (auto check = validate_trace(sys, trace); !check) {
    std::cerr << "trace is invalid: " << check.diagnostic << '\n';
    return kInvalidInput;
  }
  RefinementSpec spec = RefinementSpec::from_defaults(c.model, t, 1);
  if (full_pairs) spec.pair_scope = PairScope::Full;
  RefineOptions ro;
  ro.horizon_cap = c.model.horizon_cap;
  ro.start = start == "trace" ? SearchStart::TraceTime : SearchStart::DynamicBound;
  if (c.stage2_seconds) ro.time_limit = std::chrono::duration<double>(*c.stage2_seconds);
  auto solver = make_solver(c);
  RefineResult r = solve_refinement(sys, trace, spec, *solver, ro);
  nlohmann::json attempts = nlohmann::json::array();
  for (const auto& a : r.attempts) {
    const char* status = a.status == RefineStatus::Sat ? "sat" : a.status == RefineStatus::Unsat ? "unsat" : "timeout";
    attempts.push_back({{"steps", a.steps}, {"status", status}, {"seconds", a.seconds}});
  }
  std::cerr << nlohmann::json{{"attempts", attempts}}.dump() << '\n';
  if (!r.plan) {
    if (r.timed_out) return kTimeout;
    std::cerr << "no plan up to N = " << ro.horizon_cap << '\n';
    return kUnsat;
  }
  spec.steps = r.plan->steps;
  const std::string doc = plan_to_json(*r.plan, spec, t).dump(2) + "\n";
  write_text(emit_plan, doc);
  return kOk;
}

int cmd_validate(const std::string& instance, const std::string& trace_file, const std::string& plan_file) {
  const CarTraffic t = read_instance(instance).traffic;
  SwaSystem sys(t);
  const Trace trace = read_trace(trace_file, sys);
  if (auto check = validate_trace(sys, trace); !check) {
    std::cerr << "trace event " << check.failed_event << ": " << check.diagnostic << '\n';
    return kValidationFailed;
  }
  if (auto bad = check_intersection_spacing(sys, trace)) {
    std::cerr << "spacing: " << *bad << '\n';
    return kValidationFailed;
  }
  if (auto bad = check_fifo_order(sys, trace)) {
    std::cerr << "order: " << *bad << '\n';
    return kValidationFailed;
  }
  if (!plan_file.empty()) {
    PlanDocument doc = read_plan(plan_file, t);
    if (doc.plan.trace_hash != trace_hash(sys, trace)) {
      std::cerr << "plan was refined from a different trace\n";
      return kValidationFailed;
    }
    if (auto check = validate_plan(doc.plan, extract_events(sys, trace), doc.spec, t); !check) {
      std::cerr << "plan: " << check.diagnostic << '\n';
      return kValidationFailed;
    }
  }
  std::cout << "valid\n";
  return kOk;
}

int cmd_gen_dataset(const ToolConfig& c, std::uint64_t first, std::uint64_t count, const std::string& out,
                    const std::string& report_file, bool quiet) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < count; ++s) seeds.push_back(first + s);
  auto progress = [&](const SeedRecord& r) {
    if (quiet) return;
    std::cerr << "seed " << r.seed << ": " << to_string(r.outcome);
    if (r.steps) std::cerr << " N=" << *r.steps;
    if (!r.diagnostic.empty()) std::cerr << " (" << r.diagnostic << ")";
    std::cerr << '\n';
  };
  GenerationResult g = generate_dataset(seeds, c.model, c.budget(), [&] { return make_solver(c); }, c.workers, progress);
  export_dataset(out, g.episodes, default_model(c.model));
  nlohmann::json report = g.report.to_json();
  report["config"] = config_to_json(c);
  report["dataset"] = out;
  std::size_t transitions = 0;
  for (const auto& e : g.episodes) transitions += e.records.size();
  report["transitions"] = transitions;
  if (!report_file.empty()) write_text(report_file, report.dump(2) + "\n");
  std::cout << "attempted " << g.report.attempted() << ", successful " << g.report.successful()
            << ", success fraction " << g.report.success_fraction() << ", transitions " << transitions << '\n';
  return kOk;
}

int cmd_serve_env(const ToolConfig& c) {
  const MdpModel model = default_model(c.model);
  EnvServer server(model, c.model);
  server.serve(std::cin, std::cout);
  return kOk;
}

int cmd_render(const ToolConfig& c, const std::string& dataset, std::size_t episode, const std::string& plan_file,
               const std::string& instance, const std::string& out) {
  if (!dataset.empty()) {
    Dataset d = import_dataset(dataset);
    if (episode >= d.episodes.size()) {
      std::cerr << "dataset holds " << d.episodes.size() << " episodes\n";
      return kInvalidInput;
    }
    const MdpModel model = default_model(c.model);
    if (d.header.traffic_hash != traffic_hash(model.roster())) {
      std::cerr << "dataset was generated for a different network or roster\n";
      return kInvalidInput;
    }
    write_text(out, render_episode_csv(d.episodes[episode], model));
    return kOk;
  }
  if (plan_file.empty() || instance.empty()) {
    std::cerr << "render needs --dataset, or --plan with --instance\n";
    return kInvalidInput;
  }
  const CarTraffic t = read_instance(instance).traffic;
  write_text(out, render_plan_csv(read_plan(plan_file, t).plan, t));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Layered synthesis for multi-agent traffic control"};
  app.require_subcommand(1);
  Overrides o;
  app.add_option("--config", o.config_file, "JSON config file (flags take precedence)")->check(CLI::ExistingFile);
  app.add_option("--epsilon", o.epsilon, "security distance");
  app.add_option("--nominal-speed", o.nominal_speed, "abstract driving speed");
  app.add_option("--max-speed", o.max_speed, "V");
  app.add_option("--max-accel", o.max_accel, "A");
  app.add_option("--max-decel", o.max_decel, "B");
  app.add_option("--delta", o.slack, "timing slack in steps");
  app.add_option("--horizon-cap", o.horizon_cap, "largest N tried");
  app.add_option("--episode-cap", o.episode_cap, "MDP episode length cap");
  app.add_option("--node-cap", o.node_cap, "stage-1 node budget, 0 for none");
  app.add_option("--solver", o.solver, "SMT solver executable");
  app.add_option("--solver-rlimit", o.solver_rlimit, "z3 rlimit per query, 0 for none");
  app.add_option("--stage2-timeout", o.stage2_seconds, "seconds for the whole horizon search");
  app.add_option("--workers", o.workers, "gen-dataset worker threads");

  std::string instance, trace_file, plan_file, out, report, dataset, start = "dynamic";
  std::optional<std::uint64_t> seed;
  bool no_heuristic = false, no_subsumption = false, full_pairs = false, quiet = false;
  std::uint64_t first_seed = 0, count = 0;
  std::size_t episode = 0;

  auto* config_cmd = app.add_subcommand("config", "print the effective configuration");

  auto* gen_instance = app.add_subcommand("gen-instance", "write the running example or a random instance");
  gen_instance->add_option("--seed", seed, "random instance seed (omit for the running example)");
  gen_instance->add_option("-o,--out", out, "output file (default stdout)");

  auto* solve = app.add_subcommand("solve", "time-optimal trace of the abstract model");
  solve->add_option("--instance", instance)->required()->check(CLI::ExistingFile);
  solve->add_option("--timeout", o.solve_timeout, "seconds, 0 for none");
  solve->add_flag("--no-heuristic", no_heuristic);
  solve->add_flag("--no-subsumption", no_subsumption);
  solve->add_option("--emit-trace", trace_file, "trace output file");

  auto* refine = app.add_subcommand("refine", "refine a trace into a speed plan");
  refine->add_option("--instance", instance)->required()->check(CLI::ExistingFile);
  refine->add_option("--trace", trace_file)->required()->check(CLI::ExistingFile);
  refine->add_option("--emit-plan", plan_file, "plan output file (default stdout)");
  refine->add_option("--start", start, "first horizon: dynamic bound or trace end time")
      ->check(CLI::IsMember({"dynamic", "trace"}));
  refine->add_flag("--full-pairs", full_pairs, "constrain every ordered event pair");

  auto* validate = app.add_subcommand("validate", "check a trace, and optionally a plan refined from it");
  validate->add_option("--instance", instance)->required()->check(CLI::ExistingFile);
  validate->add_option("--trace", trace_file)->required()->check(CLI::ExistingFile);
  validate->add_option("--plan", plan_file)->check(CLI::ExistingFile);

  auto* gen_dataset = app.add_subcommand("gen-dataset", "run the pipeline on random seeds");
  gen_dataset->add_option("--first-seed", first_seed);
  gen_dataset->add_option("--seeds", count, "number of seeds")->required();
  gen_dataset->add_option("-o,--out", out, "dataset file")->required();
  gen_dataset->add_option("--report", report, "JSON report file");
  gen_dataset->add_flag("-q,--quiet", quiet);

  auto* serve = app.add_subcommand("serve-env", "environment service on stdin/stdout");

  auto* render = app.add_subcommand("render", "per-step CSV of a dataset episode or a plan");
  render->add_option("--dataset", dataset)->check(CLI::ExistingFile);
  render->add_option("--episode", episode);
  render->add_option("--plan", plan_file)->check(CLI::ExistingFile);
  render->add_option("--instance", instance)->check(CLI::ExistingFile);
  render->add_option("-o,--out", out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kInvalidInput;
  }

  try {
    const ToolConfig c = effective_config(o);
    if (*config_cmd) {
      std::cout << config_to_json(c).dump(2) << '\n';
      return kOk;
    }
    if (*gen_instance) return cmd_gen_instance(c, seed, out);
    if (*solve) return cmd_solve(c, instance, no_heuristic, no_subsumption, trace_file);
    if (*refine) return cmd_refine(c, instance, trace_file, plan_file, start, full_pairs);
    if (*validate) return cmd_validate(instance, trace_file, plan_file);
    if (*gen_dataset) return cmd_gen_dataset(c, first_seed, count, out, report, quiet);
    if (*serve) return cmd_serve_env(c);
    if (*render) return cmd_render(c, dataset, episode, plan_file, instance, out);
  } catch (const SolverTransportError& e) {
    std::cerr << "solver error: " << e.what() << '\n';
    return kSolverError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInvalidInput;
  }
  return kInvalidInput;
}
