#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <gmpxx.h>
#include <nlohmann/json.hpp>

#include "tsynth/config.hpp"
#include "tsynth/trace.hpp"

namespace tsynth {

template <>
struct ScalarTraits<mpq_class> {
  static mpq_class from(const Rational& r) { return mpq_class(r.num(), r.den()); }
  static double to_double(const mpq_class& v) { return v.get_d(); }
};

inline mpq_class to_mpq(const Rational& r) { return ScalarTraits<mpq_class>::from(r); }

struct HorizonError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct InvalidTraceError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class EventKind : std::uint8_t { Enter = 0, Leave = 1 };

struct ImportantEvent {
  CarId car = 0;
  SectionId section = 0;
  std::size_t step = 0;  // index into the car's path
  EventKind kind = EventKind::Enter;
  Rational time;         // trace time; negative for a car already inside at time 0
  Rational offset;       // path offset of the section boundary
};

// A car enters a section when it starts driving on it and leaves it when it
// starts driving on the next one (or reaches its goal). Sorted by time, then
// car index, section id and kind.
std::vector<ImportantEvent> extract_events(const SwaSystem& sys, const Trace& trace);

enum class PairScope : std::uint8_t { Consecutive, Full };

struct RefinementSpec {
  std::int64_t steps = 1;  // N; one step lasts one time unit
  Rational max_speed{1};
  Rational max_accel{1, 4};
  Rational max_decel{1, 4};
  std::int64_t slack = 4;  // Delta
  Rational safety_distance{5};
  PairScope pair_scope = PairScope::Consecutive;

  static RefinementSpec from_defaults(const Defaults& d, const CarTraffic& t, std::int64_t steps);
};

// Linear expressions over speed variables v[car slot][k] and position
// shorthands p[car slot][k] = initial offset + sum of v[slot][l] for l < k.
struct VarRef {
  enum Kind : std::uint8_t { Speed, Position } kind = Speed;
  std::uint32_t car = 0;  // slot
  std::uint32_t step = 0;
  friend bool operator==(const VarRef&, const VarRef&) = default;
};

struct LinExpr {
  std::vector<std::pair<VarRef, mpq_class>> terms;
  mpq_class constant;

  static LinExpr var(VarRef v, mpq_class coef = 1) { return LinExpr{{{v, std::move(coef)}}, 0}; }
  LinExpr& add(VarRef v, mpq_class coef);
  LinExpr& shift(const mpq_class& c) {
    constant += c;
    return *this;
  }
};

enum class Cmp : std::uint8_t { Lt, Le, Eq, Ge, Gt };

// expr cmp 0
struct Atom {
  LinExpr expr;
  Cmp cmp = Cmp::Ge;
};

enum class Family : std::uint8_t {
  InitialSpeed,
  Acceleration,   // (b)
  SpeedBound,     // (c)
  EventOrder,     // (d)
  Intersection,   // (e)
  Timing,         // (f)
  Goal,           // (g)
  Collision,      // (h) collision rules at every step
};
const char* to_string(Family f);

// premises (conjunction) imply conclusion (disjunction; empty means false).
struct Constraint {
  Family family;
  std::vector<Atom> premises;
  std::vector<Atom> conclusion;
  std::string note;
};

struct ConstraintSet {
  std::size_t cars = 0;
  std::int64_t steps = 0;
  std::vector<mpq_class> initial_offsets;  // per car slot
  std::vector<Constraint> constraints;

  std::size_t variable_count() const { return cars * static_cast<std::size_t>(steps); }
  std::size_t count(Family f) const;
  // First constraint violated by the given speeds, if any.
  std::optional<std::size_t> first_violation(const std::vector<std::vector<mpq_class>>& speeds) const;
};

struct BuildOptions {
  bool prune = true;  // drop instances that the speed bounds already decide
  bool with_timing = true;
  bool with_collision = true;
};

ConstraintSet build_constraints(const std::vector<ImportantEvent>& events, const RefinementSpec& spec,
                                const CarTraffic& traffic, const BuildOptions& options = {});

struct RefinedPlan {
  std::int64_t steps = 0;
  std::vector<std::vector<mpq_class>> speeds;  // [car slot][k], k < steps
  std::uint64_t trace_hash = 0;

  mpq_class position(const CarTraffic& t, std::size_t slot, std::int64_t k) const;
};

struct PlanCheck {
  bool ok = true;
  std::string diagnostic;
  explicit operator bool() const { return ok; }
};

// Recomputes every constraint family from the definitions and checks the
// collision rules on the snapshot of every step.
PlanCheck validate_plan(const RefinedPlan& plan, const std::vector<ImportantEvent>& events,
                        const RefinementSpec& spec, const CarTraffic& traffic);

// Step at which every car has reached its goal (the episode length).
std::int64_t completion_step(const RefinedPlan& plan, const CarTraffic& traffic);

// Smallest N whose horizon admits a plan with speeds on the lattice of
// multiples of `unit` (default: the acceleration bound), by breadth-first
// search over joint speed/position states. For tiny instances only.
std::optional<std::int64_t> lattice_min_horizon(const std::vector<ImportantEvent>& events,
                                                const RefinementSpec& spec, const CarTraffic& traffic,
                                                std::int64_t max_steps, std::optional<Rational> unit = {});

// Fewest steps a car needs on its own from its initial speed.
std::int64_t dynamic_lower_bound(const CarTraffic& traffic, const RefinementSpec& spec);

class SmtSolver;

enum class RefineStatus : std::uint8_t { Sat, Unsat, Timeout };

struct RefineAttempt {
  std::int64_t steps;
  RefineStatus status;
  double seconds;
};

struct RefineResult {
  std::optional<RefinedPlan> plan;
  std::vector<RefineAttempt> attempts;
  bool timed_out = false;
};

enum class SearchStart : std::uint8_t { DynamicBound, TraceTime };

struct RefineOptions {
  std::int64_t horizon_cap = 85;
  SearchStart start = SearchStart::DynamicBound;
  std::optional<std::chrono::duration<double>> time_limit;  // whole search
  BuildOptions build;
};

// Linear search over N; returns the plan for the first satisfiable horizon.
RefineResult solve_refinement(const SwaSystem& sys, const Trace& trace, RefinementSpec spec, SmtSolver& solver,
                              const RefineOptions& options = {});

inline constexpr int kPlanFormatVersion = 1;

nlohmann::json plan_to_json(const RefinedPlan& plan, const RefinementSpec& spec, const CarTraffic& traffic);
struct PlanDocument {
  RefinedPlan plan;
  RefinementSpec spec;
};
PlanDocument plan_from_json(const nlohmann::json& doc, const CarTraffic& traffic);
void write_plan(const std::filesystem::path& file, const RefinedPlan& plan, const RefinementSpec& spec,
                const CarTraffic& traffic);
PlanDocument read_plan(const std::filesystem::path& file, const CarTraffic& traffic);

}  // namespace tsynth
