#include <gtest/gtest.h>

#include <algorithm>

#include "reach_oracle.hpp"
#include "small_instances.hpp"
#include "tsynth/reachability.hpp"
#include "tsynth/refinement.hpp"
#include "tsynth/smt.hpp"

using namespace tsynth;

namespace {

CarTraffic straight(std::vector<std::int64_t> lengths, Rational init_speed = Rational(0)) {
  std::vector<Section> s;
  Path p{"P", {}};
  std::int64_t total = 0;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    s.push_back({"n" + std::to_string(i), "n" + std::to_string(i + 1), Rational(lengths[i])});
    p.steps.push_back({i, Direction::Up});
    total += lengths[i];
  }
  return CarTraffic(s, {p}, {{1, 0, Rational(0), Rational(total), init_speed}}, Rational(5), Rational(1));
}

// a -10- m, c -10- m, then both over m -30- n.
CarTraffic merge_instance() {
  std::vector<Section> s{{"a", "m", Rational(10)}, {"c", "m", Rational(10)}, {"m", "n", Rational(30)}};
  Path p{"P", {{0, Direction::Up}, {2, Direction::Up}}};
  Path q{"Q", {{1, Direction::Up}, {2, Direction::Up}}};
  return CarTraffic(s, {p, q},
                    {{1, 0, Rational(0), Rational(40), Rational(1)}, {2, 1, Rational(0), Rational(40), Rational(1)}},
                    Rational(5), Rational(1));
}

Trace optimal_trace(const SwaSystem& sys) {
  auto r = solve_time_optimal(sys);
  if (!r.best.trace) throw std::runtime_error("no trace");
  return *r.best.trace;
}

RefinementSpec unit_spec(std::int64_t slack = 4) {
  RefinementSpec s;
  s.max_speed = Rational(1);
  s.max_accel = Rational(1);
  s.max_decel = Rational(1);
  s.slack = slack;
  s.safety_distance = Rational(5);
  return s;
}

std::size_t count_asserts(const std::string& doc) {
  std::size_t n = 0;
  for (const SExpr& e : parse_sexprs(doc)) {
    if (!e.list.empty() && e.list[0].atom == "assert") ++n;
  }
  return n;
}

// Answers from a fixed text, for transport tests.
class CannedSolver : public SmtSolver {
 public:
  explicit CannedSolver(std::string text) : text_(std::move(text)) {}
  SmtAnswer check(const std::string&, std::optional<std::chrono::duration<double>>) override {
    return parse_solver_output(text_);
  }

 private:
  std::string text_;
};

}  // namespace

TEST(Events, SingleSection) {
  SwaSystem sys(straight({30}));
  auto ev = extract_events(sys, optimal_trace(sys));
  ASSERT_EQ(ev.size(), 2u);
  EXPECT_EQ(ev[0].kind, EventKind::Enter);
  EXPECT_EQ(ev[0].time, Rational(0));
  EXPECT_EQ(ev[0].offset, Rational(0));
  EXPECT_EQ(ev[1].kind, EventKind::Leave);
  EXPECT_EQ(ev[1].time, Rational(30));
  EXPECT_EQ(ev[1].offset, Rational(30));
}

TEST(Events, MergeInstance) {
  SwaSystem sys(merge_instance());
  auto ev = extract_events(sys, optimal_trace(sys));
  ASSERT_EQ(ev.size(), 8u);
  for (std::size_t i = 1; i < ev.size(); ++i) EXPECT_LE(ev[i - 1].time, ev[i].time);
  for (const auto& e : ev) {
    if (e.kind == EventKind::Enter) {
      auto leave = std::find_if(ev.begin(), ev.end(), [&](const ImportantEvent& l) {
        return l.car == e.car && l.section == e.section && l.kind == EventKind::Leave;
      });
      ASSERT_NE(leave, ev.end());
      EXPECT_LT(e.offset, leave->offset);
      EXPECT_LE(e.time, leave->time);
    }
  }
}

TEST(Events, RejectsInvalidTrace) {
  SwaSystem sys(straight({30}));
  Trace t = optimal_trace(sys);
  t.events.pop_back();
  EXPECT_THROW(extract_events(sys, t), InvalidTraceError);
}

TEST(Constraints, OneCarReducesToDynamicsBoundsGoal) {
  CarTraffic t = straight({30});
  SwaSystem sys(t);
  auto ev = extract_events(sys, optimal_trace(sys));
  RefinementSpec spec = unit_spec(0);
  spec.steps = 40;
  auto cs = build_constraints(ev, spec, t);
  EXPECT_EQ(cs.variable_count(), 40u);
  EXPECT_EQ(cs.count(Family::InitialSpeed), 1u);
  EXPECT_EQ(cs.count(Family::Acceleration), 2u * 39);
  EXPECT_EQ(cs.count(Family::SpeedBound), 2u * 40);
  EXPECT_EQ(cs.count(Family::Goal), 1u);
  EXPECT_EQ(cs.count(Family::EventOrder) + cs.count(Family::Intersection) + cs.count(Family::Timing) +
                cs.count(Family::Collision),
            0u);
  EXPECT_EQ(count_asserts(emit_smtlib(cs)), cs.constraints.size());
}

TEST(Constraints, IntersectionOneImplicationPerStepAndPair) {
  CarTraffic t = merge_instance();
  SwaSystem sys(t);
  auto ev = extract_events(sys, optimal_trace(sys));
  RefinementSpec spec = unit_spec();
  spec.steps = 50;
  auto cs = build_constraints(ev, spec, t, {.prune = false});
  EXPECT_EQ(cs.count(Family::Intersection), 51u);
  EXPECT_EQ(cs.variable_count(), 100u);
  EXPECT_EQ(count_asserts(emit_smtlib(cs)), cs.constraints.size());
}

TEST(Constraints, FullScopeCoversEveryOrderedPair) {
  CarTraffic t = merge_instance();
  SwaSystem sys(t);
  auto ev = extract_events(sys, optimal_trace(sys));
  std::size_t pairs = 0;
  for (const auto& a : ev) {
    for (const auto& b : ev) pairs += a.car != b.car && a.time < b.time;
  }
  RefinementSpec spec = unit_spec();
  spec.steps = 50;
  spec.pair_scope = PairScope::Full;
  auto cs = build_constraints(ev, spec, t, {.prune = false});
  EXPECT_EQ(cs.count(Family::EventOrder), pairs * 51);
}

TEST(Constraints, HorizonMustBePositive) {
  CarTraffic t = straight({30});
  SwaSystem sys(t);
  auto ev = extract_events(sys, optimal_trace(sys));
  RefinementSpec spec = unit_spec();
  spec.steps = 0;
  EXPECT_THROW(build_constraints(ev, spec, t), HorizonError);
}

TEST(Constraints, PruningKeepsSolutionsAndViolations) {
  CarTraffic t = merge_instance();
  SwaSystem sys(t);
  auto ev = extract_events(sys, optimal_trace(sys));
  RefinementSpec spec = unit_spec();
  spec.steps = 50;
  auto full = build_constraints(ev, spec, t, {.prune = false});
  auto pruned = build_constraints(ev, spec, t);
  EXPECT_LT(pruned.constraints.size(), full.constraints.size());
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> q(0, 4);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<std::vector<mpq_class>> v(2, std::vector<mpq_class>(50));
    for (auto& row : v) {
      row[0] = 1;
      for (std::size_t k = 1; k < row.size(); ++k) row[k] = mpq_class(q(rng), 4);
    }
    EXPECT_EQ(full.first_violation(v).has_value(), pruned.first_violation(v).has_value()) << trial;
  }
}

TEST(Smt, ParsesModels) {
  auto a = parse_solver_output("sat\n((v_0_0 1.0)\n (v_0_1 (/ 1.0 4.0))\n (v_1_0 (- (/ 2.0 3.0))))\n");
  ASSERT_EQ(a.status, SmtAnswer::Sat);
  EXPECT_EQ(a.values.at("v_0_0"), 1);
  EXPECT_EQ(a.values.at("v_0_1"), mpq_class(1, 4));
  EXPECT_EQ(a.values.at("v_1_0"), mpq_class(-2, 3));
  EXPECT_EQ(parse_solver_output("unsat\n(error \"model is not available\")").status, SmtAnswer::Unsat);
  EXPECT_EQ(parse_solver_output("timeout\n").status, SmtAnswer::Timeout);
  EXPECT_THROW(parse_solver_output(""), SolverTransportError);
  EXPECT_THROW(parse_solver_output("(error \"bad\")\nsat"), SolverTransportError);
  EXPECT_THROW(parse_solver_output("sat\n((v_0_0 x))"), SolverTransportError);
  EXPECT_THROW(parse_solver_output("sat ((v"), SolverTransportError);
}

TEST(Smt, SexprRoundTrip) {
  auto es = parse_sexprs("(a (b c) |q r| \"s \"\" t\") ; note\n x");
  ASSERT_EQ(es.size(), 2u);
  EXPECT_EQ(to_string(es[0]), "(a (b c) |q r| \"s \"\" t\")");
  EXPECT_EQ(es[1].atom, "x");
  EXPECT_THROW(parse_sexprs("(a"), SExprError);
  EXPECT_THROW(parse_sexprs(")"), SExprError);
}

TEST(Smt, EmptySetIsSatisfiable) {
  ConstraintSet cs;
  ExternalSmtSolver z3;
  std::string doc = emit_smtlib(cs);
  EXPECT_NO_THROW(parse_sexprs(doc));
  EXPECT_EQ(z3.check(doc, std::chrono::seconds(10)).status, SmtAnswer::Sat);
}

TEST(Smt, MissingSolverIsTransportError) {
  ExternalSmtSolver none("/nonexistent/solver");
  EXPECT_THROW(none.check(emit_smtlib({}), {}), SolverTransportError);
}

TEST(Refine, SingleCarFromRestNeedsOneExtraStep) {
  CarTraffic t = straight({60});
  SwaSystem sys(t);
  ExternalSmtSolver z3;
  RefineOptions opts;
  opts.start = SearchStart::TraceTime;
  auto r = solve_refinement(sys, optimal_trace(sys), unit_spec(), z3, opts);
  ASSERT_TRUE(r.plan);
  EXPECT_EQ(r.plan->steps, 61);
  // The trace ends at 60 but the search starts at the dynamic bound.
  ASSERT_EQ(r.attempts.size(), 1u);
  EXPECT_EQ(r.attempts[0].steps, 61);
  EXPECT_EQ(dynamic_lower_bound(t, unit_spec()), 61);
  RefinementSpec at60 = unit_spec();
  at60.steps = 60;
  auto cs60 = build_constraints(extract_events(sys, optimal_trace(sys)), at60, t);
  EXPECT_EQ(z3.check(emit_smtlib(cs60), std::nullopt).status, SmtAnswer::Unsat);

  // Brute force over speed sequences: from rest, pos_N <= 0 + 1 + ... capped by V = 1.
  for (std::int64_t n = 1; n <= 70; ++n) {
    const std::int64_t best = std::max<std::int64_t>(0, n - 1);
    EXPECT_EQ(best >= 60, n >= 61);
  }
  auto ev = extract_events(sys, optimal_trace(sys));
  RefinementSpec spec = unit_spec();
  spec.steps = 61;
  EXPECT_TRUE(validate_plan(*r.plan, ev, spec, t)) << validate_plan(*r.plan, ev, spec, t).diagnostic;
}

TEST(Refine, ZeroSlackWithSlowAccelerationIsUnsat) {
  CarTraffic t = straight({30, 30});
  SwaSystem sys(t);
  ExternalSmtSolver z3;
  RefinementSpec spec = unit_spec(0);
  spec.max_accel = Rational(1, 4);
  RefineOptions opts;
  opts.horizon_cap = 70;
  auto r = solve_refinement(sys, optimal_trace(sys), spec, z3, opts);
  EXPECT_FALSE(r.plan);
  EXPECT_FALSE(r.timed_out);
  ASSERT_FALSE(r.attempts.empty());
  EXPECT_EQ(r.attempts.back().steps, 70);
  for (const auto& a : r.attempts) EXPECT_EQ(a.status, RefineStatus::Unsat);

  // Without the timing family the dynamics alone are feasible.
  opts.build.with_timing = false;
  auto relaxed = solve_refinement(sys, optimal_trace(sys), spec, z3, opts);
  EXPECT_TRUE(relaxed.plan);
}

TEST(Refine, MergePlanValidatesAndMutationsFail) {
  CarTraffic t = merge_instance();
  SwaSystem sys(t);
  Trace tr = optimal_trace(sys);
  auto ev = extract_events(sys, tr);
  ExternalSmtSolver z3;
  RefinementSpec spec = RefinementSpec::from_defaults(Defaults{}, t, 1);
  auto r = solve_refinement(sys, tr, spec, z3);
  ASSERT_TRUE(r.plan);
  spec.steps = r.plan->steps;
  auto ok = validate_plan(*r.plan, ev, spec, t);
  EXPECT_TRUE(ok) << ok.diagnostic;
  EXPECT_EQ(completion_step(*r.plan, t) <= r.plan->steps, true);

  RefinedPlan fast = *r.plan;
  fast.speeds[0][3] = to_mpq(spec.max_speed) + mpq_class(1, 8);
  EXPECT_FALSE(validate_plan(fast, ev, spec, t));

  // Swap who leads through m-n: the second car drives the first car's profile.
  RefinedPlan swapped = *r.plan;
  std::swap(swapped.speeds[0], swapped.speeds[1]);
  auto bad = validate_plan(swapped, ev, spec, t);
  EXPECT_FALSE(bad);

  RefinedPlan short_plan = *r.plan;
  for (auto& row : short_plan.speeds) row.pop_back();
  EXPECT_FALSE(validate_plan(short_plan, ev, spec, t));
}

TEST(Refine, MalformedModelIsTransportError) {
  CarTraffic t = straight({30});
  SwaSystem sys(t);
  CannedSolver liar("sat\n((v_0_0 1.0))\n");
  EXPECT_THROW(solve_refinement(sys, optimal_trace(sys), unit_spec(), liar), SolverTransportError);
  CannedSolver garbage("segmentation fault");
  EXPECT_THROW(solve_refinement(sys, optimal_trace(sys), unit_spec(), garbage), SolverTransportError);
}

TEST(Refine, PlanJsonRoundTrip) {
  CarTraffic t = merge_instance();
  SwaSystem sys(t);
  Trace tr = optimal_trace(sys);
  ExternalSmtSolver z3;
  RefinementSpec spec = RefinementSpec::from_defaults(Defaults{}, t, 1);
  auto r = solve_refinement(sys, tr, spec, z3);
  ASSERT_TRUE(r.plan);
  spec.steps = r.plan->steps;
  auto doc = plan_from_json(plan_to_json(*r.plan, spec, t), t);
  EXPECT_EQ(doc.plan.speeds, r.plan->speeds);
  EXPECT_EQ(doc.plan.trace_hash, trace_hash(sys, tr));
  EXPECT_EQ(doc.spec.steps, spec.steps);
  EXPECT_EQ(doc.spec.max_accel, spec.max_accel);
  EXPECT_THROW(plan_from_json(plan_to_json(*r.plan, spec, t), straight({30})), TraceFormatError);
}

namespace {

struct LatticeCase {
  Rational speed;
  Rational accel;
  std::int64_t slack;
};

}  // namespace

TEST(Refine, MinimalHorizonMatchesLatticeOracle) {
  const std::vector<LatticeCase> cases{{Rational(2), Rational(1), 4}, {Rational(3), Rational(1), 2},
                                       {Rational(1), Rational(1, 2), 4}, {Rational(2), Rational(1, 2), 8}};
  ExternalSmtSolver z3;
  int compared = 0;
  int two_car = 0;
  for (std::uint64_t seed = 0; compared < 60 && seed < 400; ++seed) {
    CarTraffic t = oracle::small_instance(seed);
    SwaSystem sys(t);
    auto solved = solve_time_optimal(sys, {.time_limit = std::chrono::seconds(5)});
    if (!solved.best.trace || !solved.optimal) continue;
    const Trace& tr = *solved.best.trace;
    const LatticeCase& c = cases[seed % cases.size()];
    RefinementSpec spec;
    spec.max_speed = c.speed;
    spec.max_accel = c.accel;
    spec.max_decel = c.accel;
    spec.slack = c.slack;
    spec.safety_distance = t.epsilon();
    auto ev = extract_events(sys, tr);
    auto lattice = lattice_min_horizon(ev, spec, t, 20);
    RefineOptions opts;
    opts.horizon_cap = 20;
    auto r = solve_refinement(sys, tr, spec, z3, opts);
    ASSERT_FALSE(r.timed_out);
    std::optional<std::int64_t> smt;
    if (r.plan) smt = r.plan->steps;
    // A lattice plan is a real plan, so the solver can never need more steps.
    if (lattice) ASSERT_TRUE(smt.has_value()) << "seed " << seed;
    if (smt && !lattice) {
      ADD_FAILURE() << "seed " << seed << ": solver N=" << *smt << ", lattice none";
      continue;
    }
    EXPECT_EQ(smt, lattice) << "seed " << seed;
    if (r.plan) {
      spec.steps = r.plan->steps;
      auto ok = validate_plan(*r.plan, ev, spec, t);
      EXPECT_TRUE(ok) << "seed " << seed << ": " << ok.diagnostic;
    }
    if (lattice) {
      ++compared;
      two_car += t.cars().size() == 2;
    }
  }
  EXPECT_GE(compared, 50);
  EXPECT_GE(two_car, 20);
}
