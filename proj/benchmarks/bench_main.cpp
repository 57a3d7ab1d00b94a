#include <benchmark/benchmark.h>

#include <random>
#include <sstream>

#include "tsynth/dataset.hpp"
#include "tsynth/instance_io.hpp"
#include "tsynth/mdp.hpp"
#include "tsynth/reachability.hpp"
#include "tsynth/refinement.hpp"
#include "tsynth/smt.hpp"

using namespace tsynth;

namespace {

const char* kGolden = TSYNTH_SOURCE_DIR "/tests/golden/";

CarTraffic golden_instance(const std::string& name) {
  return read_instance(std::string(kGolden) + name + ".instance.json").traffic;
}

void BM_SolveGolden(benchmark::State& state, const std::string& name) {
  const SwaSystem sys(golden_instance(name));
  for (auto _ : state) {
    SolveResult r = solve_time_optimal(sys);
    benchmark::DoNotOptimize(r.best.time);
    state.counters["expanded"] = static_cast<double>(r.stats.expanded);
  }
}
BENCHMARK_CAPTURE(BM_SolveGolden, straight, std::string("straight"))->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_SolveGolden, seed2, std::string("seed2"))->Unit(benchmark::kMillisecond);

void BM_SolveRandomSmall(benchmark::State& state) {
  Defaults d;
  d.presence_probability = 0.2;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    state.PauseTiming();
    RandomInstance ri = random_instance(seed++, d);
    while (ri.traffic.cars().empty() || ri.traffic.cars().size() > 2) ri = random_instance(seed++, d);
    const SwaSystem sys(ri.traffic);
    state.ResumeTiming();
    SolverOptions o;
    o.node_cap = 200000;
    benchmark::DoNotOptimize(solve_time_optimal(sys, o).best.time);
  }
}
BENCHMARK(BM_SolveRandomSmall)->Unit(benchmark::kMillisecond);

void BM_BuildConstraints(benchmark::State& state) {
  const SwaSystem sys(golden_instance("seed2"));
  const Trace trace = read_trace(std::string(kGolden) + "seed2.trace.json", sys);
  const auto events = extract_events(sys, trace);
  Defaults d;
  d.max_speed = Rational(2);
  d.nominal_speed = Rational(2);
  const RefinementSpec spec = RefinementSpec::from_defaults(d, sys.traffic(), state.range(0));
  for (auto _ : state) {
    ConstraintSet cs = build_constraints(events, spec, sys.traffic());
    benchmark::DoNotOptimize(emit_smtlib(cs).size());
  }
}
BENCHMARK(BM_BuildConstraints)->Arg(40)->Arg(85);

void BM_MdpStep(benchmark::State& state) {
  const Defaults d;
  const MdpModel m(running_example(d), MdpConfig::from_defaults(d));
  const MdpState s = m.encode(to_double_snapshot(random_instance(3, d).snapshot));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-0.25, 0.25);
  MdpAction a(m.action_size());
  for (auto _ : state) {
    for (double& x : a) x = u(rng);
    benchmark::DoNotOptimize(m.step(s, a).reward);
  }
}
BENCHMARK(BM_MdpStep);

void BM_EncodeDecode(benchmark::State& state) {
  const Defaults d;
  const MdpModel m(running_example(d), MdpConfig::from_defaults(d));
  const DoubleSnapshot w = to_double_snapshot(random_instance(3, d).snapshot);
  for (auto _ : state) benchmark::DoNotOptimize(m.decode(m.encode(w)).cars.size());
}
BENCHMARK(BM_EncodeDecode);

void BM_EnvironmentEpisode(benchmark::State& state) {
  const Defaults d;
  const MdpModel m(running_example(d), MdpConfig::from_defaults(d));
  Environment env(m, d);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    env.reset(seed++);
    MdpAction a(m.action_size(), 0.0);
    while (!env.done()) benchmark::DoNotOptimize(env.step(a).outcome.reward);
  }
}
BENCHMARK(BM_EnvironmentEpisode);

}  // namespace
BENCHMARK_MAIN();
