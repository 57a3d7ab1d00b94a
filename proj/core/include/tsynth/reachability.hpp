#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <vector>

#include "tsynth/system.hpp"
#include "tsynth/trace.hpp"

namespace tsynth {

struct SearchNode {
  SystemState state;
  std::vector<Move> moves;  // succ enumeration, computed once
  std::size_t cursor = 0;   // next move to try
};

struct BestSolution {
  std::optional<Rational> time;  // nullopt means unreachable (+inf)
  std::optional<Trace> trace;
};

struct SolverOptions {
  bool use_heuristic = true;
  bool use_subsumption = true;
  std::uint64_t node_cap = 0;  // 0: unlimited
  std::optional<std::chrono::duration<double>> time_limit;
};

struct SolverStats {
  std::uint64_t expanded = 0;
  std::uint64_t subsumed = 0;
  std::uint64_t pruned = 0;
  std::uint64_t finals = 0;
  std::size_t explored_size = 0;
  double seconds = 0;
};

struct SolveResult {
  BestSolution best;
  bool optimal = true;  // false when a budget cut the search short
  SolverStats stats;
};

inline const Rational& min_glob_time(const SystemState& s) { return s.global_time(); }
Rational heuristic_remaining(const SwaSystem& sys, const SystemState& s);
bool keep_exploring(const SwaSystem& sys, const SystemState& s, const BestSolution& best);

// Trace from the initial state to the state reached by the last consumed move
// of the top frame.
Trace trace_of(const SwaSystem& sys, const std::vector<SearchNode>& stack);

SolveResult solve_time_optimal(const SwaSystem& sys, const SolverOptions& options = {});

}  // namespace tsynth
