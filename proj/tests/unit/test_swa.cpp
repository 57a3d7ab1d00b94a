#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "tsynth/system.hpp"
#include "tsynth/trace.hpp"

using namespace tsynth;

namespace {

// a -10- m, c -10- m, then both over m -30- n (one direction).
CarTraffic merge_instance(std::int64_t eps = 5) {
  std::vector<Section> s{{"a", "m", Rational(10)}, {"c", "m", Rational(10)}, {"m", "n", Rational(30)}};
  Path p{"P", {{0, Direction::Up}, {2, Direction::Up}}};
  Path q{"Q", {{1, Direction::Up}, {2, Direction::Up}}};
  return CarTraffic(s, {p, q},
                    {{1, 0, Rational(0), Rational(40), Rational(0)}, {2, 1, Rational(0), Rational(40), Rational(0)}},
                    Rational(eps), Rational(1));
}

// Replays events picked by label; the caller chooses every firing time.
class TraceBuilder {
 public:
  explicit TraceBuilder(const SwaSystem& sys) : sys_(sys), state_(sys.initial_state()) {}

  TraceBuilder& fire(const std::string& automaton, const std::string& label, Rational time) {
    const std::size_t a = *sys_.find_automaton(automaton);
    const SwaAutomaton& aut = sys_.automata()[a];
    for (std::size_t ti : aut.outgoing[state_.locations[a]]) {
      const Transition& t = aut.transitions[ti];
      if (t.label.rfind(label, 0) != 0) continue;
      TraceEvent e;
      e.time = time;
      e.automaton = a;
      e.transition = ti;
      Move m{time - state_.global_time(), static_cast<std::uint16_t>(a), static_cast<std::uint16_t>(ti), -1, 0};
      if (t.sync) {
        const std::size_t p = sys_.car_count() + *t.sync / sys_.car_count();
        for (std::size_t pt : sys_.automata()[p].outgoing[state_.locations[p]]) {
          if (sys_.automata()[p].transitions[pt].sync == t.sync) {
            e.partner = std::make_pair(p, pt);
            m.partner = static_cast<std::int32_t>(p);
            m.partner_transition = static_cast<std::uint16_t>(pt);
          }
        }
      }
      if (t.channel_op != ChannelOp::None) e.channel = ChannelRecord{t.channel_op, t.channel, t.symbol};
      trace_.events.push_back(e);
      if (!t.sync || e.partner) state_ = sys_.apply(state_, m);
      return *this;
    }
    throw std::runtime_error(automaton + " has no '" + label + "' transition here");
  }

  const Trace& trace() const { return trace_; }

 private:
  const SwaSystem& sys_;
  SystemState state_;
  Trace trace_;
};

Trace merge_trace(const SwaSystem& sys, Rational second_entry) {
  const Rational eps = sys.traffic().epsilon();
  TraceBuilder b(sys);
  b.fire("car1", "reach", 10).fire("car2", "reach", 10).fire("car1", "enter", 10).fire("car1", "go", 10);
  if (second_entry >= Rational(10) + eps) b.fire("int[m-n]", "semifree", Rational(10) + eps);
  b.fire("car2", "enter", second_entry).fire("car2", "go", second_entry);
  b.fire("int[m-n]", "semifree", second_entry + eps);
  b.fire("car1", "reach", 40).fire("car2", "reach", second_entry + Rational(30));
  return b.trace();
}

}  // namespace

TEST(CarAutomaton, RunningExampleIsInitialized) {
  CarTraffic t = running_example();
  for (const Car& c : t.cars()) EXPECT_TRUE(is_initialized(build_car_automaton(c, t))) << c.index;
  for (SectionId s : t.intersections()) EXPECT_TRUE(is_initialized(build_intersection_automaton(s, t)));
}

TEST(CarAutomaton, SingleSectionHasDrivingAndArrived) {
  std::vector<Section> s{{"a", "b", Rational(30)}};
  CarTraffic t(s, {Path{"P", {{0, Direction::Up}}}}, {{1, 0, Rational(0), Rational(30), Rational(0)}}, Rational(5),
               Rational(1));
  SwaAutomaton a = build_car_automaton(t.car(1), t);
  ASSERT_EQ(a.locations.size(), 2u);
  EXPECT_EQ(a.locations[a.initial].role, LocationRole::Driving);
  EXPECT_EQ(a.locations[1].role, LocationRole::Arrived);
  EXPECT_TRUE(a.locations[1].goal);
  ASSERT_EQ(a.transitions.size(), 1u);
  EXPECT_EQ(a.transitions[0].channel_op, ChannelOp::None);
}

TEST(CarAutomaton, GuardConstantsAreCumulativeOffsets) {
  CarTraffic t = running_example();
  const Car& c = t.car(2);
  SwaAutomaton a = build_car_automaton(c, t);
  auto offsets = t.step_offsets(c.path);
  for (const Transition& tr : a.transitions) {
    ASSERT_EQ(tr.guard.atoms.size(), 1u);
    const std::size_t k = a.locations[tr.source].step;
    const Rational expected = a.locations[tr.source].role == LocationRole::Driving ? offsets[k + 1] : offsets[tr.label == "go" ? k : k + 1];
    EXPECT_EQ(tr.guard.atoms[0].relation, Relation::Eq);
    EXPECT_EQ(tr.guard.atoms[0].constant, expected) << tr.label << " at step " << k;
  }
  // wait, driving, arrived per step except the first, which has no wait.
  const std::size_t first = t.step_at(c.path, c.initial_offset);
  const auto last = static_cast<std::size_t>(std::find(offsets.begin(), offsets.end(), c.goal_offset) - offsets.begin());
  EXPECT_EQ(a.locations.size(), 3 * (last - first) - 1);
}

TEST(IntersectionAutomaton, OneDirectionHasThreeLocationsSixTransitions) {
  CarTraffic t = merge_instance();
  SwaAutomaton a = build_intersection_automaton(2, t);
  EXPECT_EQ(a.locations.size(), 3u);
  EXPECT_EQ(a.transitions.size(), 6u);
  EXPECT_TRUE(is_initialized(a));
  EXPECT_EQ(a.locations[a.initial].role, LocationRole::Free);
}

TEST(IntersectionAutomaton, TwoDirectionsHaveFiveLocations) {
  std::vector<Section> s{{"a", "m", Rational(10)}, {"c", "m", Rational(10)}, {"m", "n", Rational(30)}, {"n", "d", Rational(10)}};
  Path p{"P", {{0, Direction::Up}, {2, Direction::Up}}};
  Path q{"Q", {{1, Direction::Up}, {2, Direction::Up}}};
  Path r{"R", {{3, Direction::Down}, {2, Direction::Down}}};
  CarTraffic t(s, {p, q, r},
               {{1, 0, Rational(0), Rational(40), Rational(0)},
                {2, 1, Rational(0), Rational(40), Rational(0)},
                {3, 2, Rational(0), Rational(40), Rational(0)}},
               Rational(5), Rational(1));
  SwaAutomaton a = build_intersection_automaton(2, t);
  EXPECT_EQ(a.locations.size(), 5u);
  EXPECT_EQ(a.transitions.size(), 3u * 2 + 2u * 2);
  // The opposite direction is entered only from free or its own semi-free.
  for (const Transition& tr : a.transitions) {
    if (!tr.sync) continue;
    const Location& from = a.locations[tr.source];
    const Location& to = a.locations[tr.target];
    EXPECT_TRUE(from.role == LocationRole::Free || from.direction == to.direction);
  }
}

TEST(IsInitialized, DetectsUnresetStart) {
  SwaAutomaton a;
  a.clocks = {1};
  a.locations = {Location{"stop", LocationRole::Wait, 0, Direction::Up, {1}, {}, false},
                 Location{"run", LocationRole::Driving, 0, Direction::Up, {}, {}, false}};
  Transition t;
  t.source = 0;
  t.target = 1;
  a.transitions = {t};
  EXPECT_FALSE(is_initialized(a));
  a.transitions[0].resets = {{1, Rational(0)}};
  EXPECT_TRUE(is_initialized(a));
}

TEST(Succ, SingleCarSingleSection) {
  std::vector<Section> s{{"a", "b", Rational(30)}};
  SwaSystem sys(CarTraffic(s, {Path{"P", {{0, Direction::Up}}}}, {{1, 0, Rational(0), Rational(30), Rational(0)}},
                           Rational(5), Rational(1)));
  auto first = sys.succ(sys.initial_state(), 0);
  ASSERT_TRUE(first);
  EXPECT_EQ(first->first.global_time(), Rational(30));
  EXPECT_TRUE(sys.is_final(first->first));
  EXPECT_FALSE(sys.succ(sys.initial_state(), first->second));
  EXPECT_FALSE(sys.succ(first->first, 0));
}

TEST(Succ, NoSuccessorOncePastDeadline) {
  std::vector<Section> s{{"a", "b", Rational(30)}};
  SwaSystem sys(CarTraffic(s, {Path{"P", {{0, Direction::Up}}}}, {{1, 0, Rational(0), Rational(30), Rational(0)}},
                           Rational(5), Rational(1)));
  SystemState late = sys.initial_state();
  late.clocks[1] = Rational(31);
  EXPECT_TRUE(sys.moves(late).empty());
}

TEST(Succ, RunningExampleInitialMovesAreTheNineReaches) {
  SwaSystem sys(running_example());
  auto moves = sys.moves(sys.initial_state());
  ASSERT_EQ(moves.size(), 9u);
  for (std::size_t i = 0; i < moves.size(); ++i) {
    const Car& c = sys.traffic().cars()[i];
    EXPECT_EQ(moves[i].automaton, i);
    const auto offsets = sys.traffic().step_offsets(c.path);
    const std::size_t k = sys.traffic().step_at(c.path, c.initial_offset);
    EXPECT_EQ(moves[i].delay, offsets[k + 1] - c.initial_offset);
  }
}

TEST(Succ, HandBuiltTwoCarProduct) {
  CarTraffic t = merge_instance();
  SwaSystem sys(t);
  // Both cars drive toward m: two reach moves at delay 10.
  auto m0 = sys.moves(sys.initial_state());
  ASSERT_EQ(m0.size(), 2u);
  EXPECT_EQ(m0[0].delay, Rational(10));
  EXPECT_EQ(m0[1].delay, Rational(10));
  SystemState s1 = sys.apply(sys.initial_state(), m0[0]);
  // car1 arrived at m (may enter now), car2 still reaching m.
  auto m1 = sys.moves(s1);
  ASSERT_EQ(m1.size(), 2u);
  EXPECT_EQ(m1[0].automaton, 0);
  EXPECT_EQ(m1[0].partner, 2);
  EXPECT_EQ(m1[0].delay, Rational(0));
  EXPECT_EQ(m1[1].automaton, 1);
  SystemState s2 = sys.apply(s1, m1[0]);
  // car1 may pop; car2 must reach m before any time passes, so the
  // intersection's semifree step at delay 5 is not yet enabled.
  auto m2 = sys.moves(s2);
  ASSERT_EQ(m2.size(), 2u);
  EXPECT_EQ(sys.automata()[m2[0].automaton].transitions[m2[0].transition].label, "go");
  EXPECT_EQ(sys.automata()[m2[1].automaton].transitions[m2[1].transition].label, "reach");
  SystemState s3 = sys.apply(sys.apply(s2, m2[0]), m2[1]);
  // car2 is held by the blocked intersection, whose invariant also caps the
  // delay below car1's reach at 30.
  auto m3 = sys.moves(s3);
  ASSERT_EQ(m3.size(), 1u);
  EXPECT_EQ(sys.automata()[m3[0].automaton].transitions[m3[0].transition].label, "semifree");
  EXPECT_EQ(m3[0].delay, Rational(5));
  auto m4 = sys.moves(sys.apply(s3, m3[0]));
  ASSERT_EQ(m4.size(), 2u);
  EXPECT_EQ(m4[0].automaton, 0);
  EXPECT_EQ(m4[0].delay, Rational(25));
  EXPECT_EQ(m4[1].automaton, 1);
  EXPECT_EQ(m4[1].partner, 2);
  EXPECT_EQ(m4[1].delay, Rational(0));
}

TEST(Succ, DeterministicAndMonotone) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SwaSystem sys(random_instance(seed).traffic);
    std::mt19937_64 rng(seed);
    SystemState s = sys.initial_state();
    for (int step = 0; step < 200; ++step) {
      auto a = sys.moves(s);
      auto b = sys.moves(s);
      ASSERT_EQ(a.size(), b.size());
      for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(sys.apply(s, a[i]), sys.apply(s, b[i]));
      if (a.empty()) break;
      SystemState n = sys.apply(s, a[rng() % a.size()]);
      EXPECT_GE(n.global_time(), s.global_time());
      s = std::move(n);
    }
  }
}

TEST(Succ, StopwatchSemanticsOnRandomWalks) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SwaSystem sys(random_instance(seed).traffic);
    std::mt19937_64 rng(seed + 100);
    SystemState s = sys.initial_state();
    for (int step = 0; step < 200; ++step) {
      auto moves = sys.moves(s);
      if (moves.empty()) break;
      const Move m = moves[rng() % moves.size()];
      SystemState n = sys.apply(s, m);
      std::vector<bool> stopped(s.clocks.size(), false);
      std::vector<bool> reset(s.clocks.size(), false);
      for (std::size_t a = 0; a < sys.automata().size(); ++a) {
        for (ClockIndex c : sys.automata()[a].locations[s.locations[a]].stopped) stopped[c] = true;
      }
      auto mark = [&](std::size_t a, std::size_t t) {
        for (const Reset& r : sys.automata()[a].transitions[t].resets) reset[r.clock] = true;
      };
      mark(m.automaton, m.transition);
      if (m.partner >= 0) mark(static_cast<std::size_t>(m.partner), m.partner_transition);
      EXPECT_FALSE(stopped[0]);
      for (ClockIndex c = 0; c < s.clocks.size(); ++c) {
        if (reset[c]) continue;
        EXPECT_EQ(n.clocks[c], stopped[c] ? s.clocks[c] : s.clocks[c] + m.delay) << "clock " << c;
      }
      s = std::move(n);
    }
  }
}

TEST(Subsumes, Examples) {
  SwaSystem sys(merge_instance());
  SystemState a = sys.initial_state();
  EXPECT_TRUE(subsumes(a, a));
  SystemState slow = a;
  SystemState fast = a;
  slow.clocks[0] = Rational(12);
  fast.clocks[0] = Rational(10);
  EXPECT_TRUE(subsumes(slow, fast));
  EXPECT_FALSE(subsumes(fast, slow));
  SystemState other = slow;
  other.channel_length[0] = 1;
  EXPECT_FALSE(subsumes(other, fast));
  EXPECT_EQ(state_key(slow), state_key(fast));
  EXPECT_NE(state_key(other), state_key(fast));
}

TEST(ValidateTrace, EntriesExactlyEpsilonApartAccepted) {
  SwaSystem sys(merge_instance());
  Trace tr = merge_trace(sys, Rational(15));
  auto check = validate_trace(sys, tr);
  EXPECT_TRUE(check.ok) << check.diagnostic;
  EXPECT_FALSE(check_intersection_spacing(sys, tr));
  EXPECT_FALSE(check_fifo_order(sys, tr));
  auto entries = intersection_entries(sys, tr);
  ASSERT_EQ(entries.size(), 2u);
  EXPECT_EQ(entries[1].time - entries[0].time, sys.traffic().epsilon());
}

TEST(ValidateTrace, EntriesHalfEpsilonApartRejected) {
  SwaSystem sys(merge_instance());
  TraceBuilder b(sys);
  b.fire("car1", "reach", 10).fire("car2", "reach", 10).fire("car1", "enter", 10).fire("car1", "go", 10);
  b.fire("car2", "enter", Rational(25, 2));
  const Trace& tr = b.trace();
  auto check = validate_trace(sys, tr);
  EXPECT_FALSE(check.ok);
  EXPECT_EQ(check.failed_event, 4u);
  EXPECT_NE(check.diagnostic.find("handshake partner"), std::string::npos) << check.diagnostic;
  EXPECT_TRUE(check_intersection_spacing(sys, tr));
}

TEST(ValidateTrace, SwappedPopReportsFifo) {
  SwaSystem sys(merge_instance());
  TraceBuilder b(sys);
  b.fire("car1", "reach", 10).fire("car2", "reach", 10).fire("car2", "enter", 10).fire("car2", "go", 10);
  auto check = validate_trace(sys, b.trace());
  EXPECT_FALSE(check.ok);
  EXPECT_EQ(check.failed_event, 3u);
  EXPECT_NE(check.diagnostic.find("FIFO: channel m->n head is car1, car2 cannot pop"), std::string::npos)
      << check.diagnostic;
}

TEST(ValidateTrace, RejectsIncompleteAndBackwards) {
  SwaSystem sys(merge_instance());
  auto empty = validate_trace(sys, Trace{});
  EXPECT_FALSE(empty.ok);
  EXPECT_NE(empty.diagnostic.find("final state not reached"), std::string::npos);
  Trace tr = merge_trace(sys, Rational(15));
  tr.events[1].time = Rational(9);
  EXPECT_FALSE(validate_trace(sys, tr).ok);
}

TEST(ValidateTrace, EmptyTraceOnSystemAtGoal) {
  std::vector<Section> s{{"a", "b", Rational(30)}};
  SwaSystem sys(CarTraffic(s, {Path{"P", {{0, Direction::Up}}}}, {}, Rational(5), Rational(1)));
  EXPECT_TRUE(validate_trace(sys, Trace{}).ok);
}

TEST(TraceIo, JsonRoundTripAndHashCheck) {
  SwaSystem sys(merge_instance());
  Trace tr = merge_trace(sys, Rational(15));
  auto doc = trace_to_json(sys, tr, Rational(45));
  Trace back = trace_from_json(sys, doc);
  EXPECT_EQ(trace_to_json(sys, back, Rational(45)), doc);
  EXPECT_EQ(trace_hash(sys, back), trace_hash(sys, tr));
  SwaSystem other(merge_instance(4));
  EXPECT_THROW(trace_from_json(other, doc), TraceFormatError);
}
