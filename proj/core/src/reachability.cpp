#include "tsynth/reachability.hpp"

#include <unordered_map>

namespace tsynth {

Rational heuristic_remaining(const SwaSystem& sys, const SystemState& s) {
  Rational worst{0};
  for (std::size_t c = 0; c < sys.car_count(); ++c) {
    const ClockIndex x = 1 + c;
    worst = max(worst, sys.goal_progress(c) - s.clocks[x]);
  }
  return min_glob_time(s) + worst;
}

bool keep_exploring(const SwaSystem& sys, const SystemState& s, const BestSolution& best) {
  if (!best.time) return true;
  return heuristic_remaining(sys, s) < *best.time;
}

Trace trace_of(const SwaSystem& sys, const std::vector<SearchNode>& stack) {
  std::vector<Move> path;
  for (const SearchNode& n : stack) {
    if (n.cursor > 0) path.push_back(n.moves[n.cursor - 1]);
  }
  return trace_from_moves(sys, path);
}

SolveResult solve_time_optimal(const SwaSystem& sys, const SolverOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  SolveResult result;
  auto& stats = result.stats;

  std::unordered_map<std::string, Rational> explored;
  std::vector<SearchNode> stack;
  const SystemState& s0 = sys.initial_state();
  if (sys.is_final(s0)) {
    result.best = {min_glob_time(s0), Trace{}};
    return result;
  }
  stack.push_back({s0, sys.moves(s0), 0});
  if (options.use_subsumption) explored.emplace(state_key(s0), min_glob_time(s0));

  while (!stack.empty()) {
    if ((options.node_cap != 0 && stats.expanded >= options.node_cap) ||
        (options.time_limit && (stats.expanded & 0xff) == 0 && clock::now() - started > *options.time_limit)) {
      result.optimal = false;
      break;
    }
    SearchNode& top = stack.back();
    if (top.cursor >= top.moves.size()) {
      stack.pop_back();
      continue;
    }
    const Move move = top.moves[top.cursor++];
    SystemState next = sys.apply(top.state, move);
    ++stats.expanded;

    if (sys.is_final(next)) {
      ++stats.finals;
      if (!result.best.time || min_glob_time(next) < *result.best.time) {
        result.best.time = min_glob_time(next);
        result.best.trace = trace_of(sys, stack);
      }
      continue;
    }
    if (options.use_subsumption) {
      auto [it, inserted] = explored.try_emplace(state_key(next), min_glob_time(next));
      if (!inserted) {
        if (it->second <= min_glob_time(next)) {
          ++stats.subsumed;
          continue;
        }
      }
      if (options.use_heuristic && !keep_exploring(sys, next, result.best)) {
        ++stats.pruned;
        if (inserted) explored.erase(it);
        continue;
      }
      it->second = min_glob_time(next);
    } else if (options.use_heuristic && !keep_exploring(sys, next, result.best)) {
      ++stats.pruned;
      continue;
    }
    auto moves = sys.moves(next);
    stack.push_back({std::move(next), std::move(moves), 0});
  }

  stats.explored_size = explored.size();
  stats.seconds = std::chrono::duration<double>(clock::now() - started).count();
  return result;
}

}  // namespace tsynth
