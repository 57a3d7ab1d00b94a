#include "tsynth/refinement.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

#include "tsynth/instance_io.hpp"
#include "tsynth/smt.hpp"

namespace tsynth {

using nlohmann::json;

const char* to_string(Family f) {
  switch (f) {
    case Family::InitialSpeed: return "initial-speed";
    case Family::Acceleration: return "acceleration";
    case Family::SpeedBound: return "speed-bound";
    case Family::EventOrder: return "event-order";
    case Family::Intersection: return "intersection";
    case Family::Timing: return "timing";
    case Family::Goal: return "goal";
    case Family::Collision: return "collision";
  }
  return "?";
}

RefinementSpec RefinementSpec::from_defaults(const Defaults& d, const CarTraffic& t, std::int64_t steps) {
  RefinementSpec s;
  s.steps = steps;
  s.max_speed = d.max_speed;
  s.max_accel = d.max_accel;
  s.max_decel = d.max_decel;
  s.slack = d.timing_slack;
  s.safety_distance = t.epsilon();
  return s;
}

LinExpr& LinExpr::add(VarRef v, mpq_class coef) {
  for (auto& [w, c] : terms) {
    if (w == v) {
      c += coef;
      return *this;
    }
  }
  terms.emplace_back(v, std::move(coef));
  return *this;
}

namespace {

struct CarInfo {
  std::vector<Rational> offsets;
  std::size_t first = 0;
  std::size_t last = 0;
  mpq_class init;
  mpq_class init_speed;
  mpq_class goal;
};

std::vector<CarInfo> car_infos(const CarTraffic& t) {
  std::vector<CarInfo> out;
  for (const Car& c : t.cars()) {
    CarInfo info;
    info.offsets = t.step_offsets(c.path);
    info.first = t.step_at(c.path, c.initial_offset);
    auto it = std::find(info.offsets.begin() + 1, info.offsets.end(), c.goal_offset);
    info.last = it == info.offsets.end() ? t.step_at(c.path, c.goal_offset)
                                         : static_cast<std::size_t>(it - info.offsets.begin()) - 1;
    info.init = to_mpq(c.initial_offset);
    info.init_speed = to_mpq(c.initial_speed);
    info.goal = to_mpq(c.goal_offset);
    out.push_back(std::move(info));
  }
  return out;
}

bool is_initial_enter(const ImportantEvent& e, const CarTraffic& t, const std::vector<CarInfo>& infos) {
  return e.kind == EventKind::Enter && e.step == infos[t.car_slot(e.car)].first;
}

std::int64_t deadline_index(const ImportantEvent& e, const RefinementSpec& spec) {
  return std::min(std::max<std::int64_t>(0, e.time.floor()) + spec.slack, spec.steps);
}

// Pairs (earlier, later) of events from different cars whose order must be
// kept: consecutive time groups plus same-section pairs, or every pair.
std::vector<std::pair<std::size_t, std::size_t>> order_pairs(const std::vector<ImportantEvent>& ev, PairScope scope) {
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  auto add = [&](std::size_t a, std::size_t b) {
    if (ev[a].car != ev[b].car && ev[a].time < ev[b].time) pairs.insert({a, b});
  };
  if (scope == PairScope::Full) {
    for (std::size_t a = 0; a < ev.size(); ++a) {
      for (std::size_t b = 0; b < ev.size(); ++b) add(a, b);
    }
  } else {
    std::vector<std::pair<std::size_t, std::size_t>> groups;  // [begin, end)
    for (std::size_t i = 0; i < ev.size();) {
      std::size_t j = i;
      while (j < ev.size() && ev[j].time == ev[i].time) ++j;
      groups.push_back({i, j});
      i = j;
    }
    for (std::size_t g = 0; g + 1 < groups.size(); ++g) {
      for (std::size_t a = groups[g].first; a < groups[g].second; ++a) {
        for (std::size_t b = groups[g + 1].first; b < groups[g + 1].second; ++b) add(a, b);
      }
    }
    for (std::size_t a = 0; a < ev.size(); ++a) {
      for (std::size_t b = 0; b < ev.size(); ++b) {
        if (ev[a].section == ev[b].section) add(a, b);
      }
    }
  }
  return {pairs.begin(), pairs.end()};
}

// Cars through each intersection in entry order.
std::map<SectionId, std::vector<std::size_t>> intersection_order(const std::vector<ImportantEvent>& ev,
                                                                 const CarTraffic& t) {
  std::map<SectionId, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < ev.size(); ++i) {
    if (ev[i].kind == EventKind::Enter && t.is_intersection(ev[i].section)) out[ev[i].section].push_back(i);
  }
  return out;
}

const ImportantEvent& leave_of(const std::vector<ImportantEvent>& ev, const ImportantEvent& enter) {
  for (const auto& e : ev) {
    if (e.car == enter.car && e.step == enter.step && e.kind == EventKind::Leave) return e;
  }
  throw InvalidTraceError("enter event without matching leave event");
}

// One linear gap condition (gap >= eps) between two cars on given steps,
// in the relative coordinates of each car's section.
struct GapTerm {
  mpq_class coef_i;  // multiplies pos_i
  mpq_class coef_j;
  mpq_class constant;
};

struct RuleOutcome {
  bool forbidden = false;                   // rule 3
  bool same_lane = false;                   // rule 1, |rel_i - rel_j| >= eps
  std::vector<GapTerm> gaps;                // rule 2, each gap >= eps
};

// Mirrors check_collision_rules for car i on path step a and car j on step b.
RuleOutcome rule_outcome(const CarTraffic& t, const Car& ci, std::size_t a, const CarInfo& ii, const Car& cj,
                         std::size_t b, const CarInfo& ij) {
  RuleOutcome r;
  const Path& pi = t.path(ci.path);
  const Path& pj = t.path(cj.path);
  const DirectedSection da = pi.steps[a];
  const DirectedSection db = pj.steps[b];
  if (da.section == db.section) {
    if (da.direction != db.direction) {
      r.forbidden = true;
    } else {
      r.same_lane = true;
    }
    return r;
  }
  // rel_x = pos_x - start_x
  const mpq_class start_i = to_mpq(ii.offsets[a]);
  const mpq_class start_j = to_mpq(ij.offsets[b]);
  auto ordered = [&](const Path& path_b, std::size_t kb, DirectedSection dA, bool i_is_a) {
    const mpq_class len_a = to_mpq(t.section(dA.section).length);
    const mpq_class start_a = i_is_a ? start_i : start_j;
    const mpq_class start_b = i_is_a ? start_j : start_i;
    if (kb >= 1) {
      const DirectedSection prev = path_b.steps[kb - 1];
      if (prev == dA) {
        // len_a - (pos_a - start_a) + (pos_b - start_b)
        GapTerm g{i_is_a ? -1 : 1, i_is_a ? 1 : -1, len_a + start_a - start_b};
        r.gaps.push_back(g);
      }
    }
    if (kb + 1 < path_b.steps.size()) {
      const DirectedSection next = path_b.steps[kb + 1];
      if (next.section == dA.section && next.direction != dA.direction) {
        const mpq_class len_b = to_mpq(t.section(path_b.steps[kb].section).length);
        // len_a - (pos_a - start_a) + len_b - (pos_b - start_b)
        GapTerm g{-1, -1, len_a + start_a + len_b + start_b};
        r.gaps.push_back(g);
      }
    }
  };
  ordered(pj, b, da, true);
  ordered(pi, a, db, false);
  return r;
}

struct Windows {
  std::vector<std::vector<mpq_class>> lo;  // [slot][k], k in [0, N]
  std::vector<std::vector<mpq_class>> hi;
};

Windows position_windows(const std::vector<ImportantEvent>& ev, const RefinementSpec& spec, const CarTraffic& t,
                         const std::vector<CarInfo>& infos, bool with_timing) {
  const auto n = static_cast<std::size_t>(spec.steps);
  const mpq_class vmax_abs = to_mpq(spec.max_speed);
  const mpq_class a = to_mpq(spec.max_accel);
  const mpq_class b = to_mpq(spec.max_decel);
  Windows w;
  for (std::size_t c = 0; c < infos.size(); ++c) {
    std::vector<mpq_class> lo(n + 1);
    std::vector<mpq_class> hi(n + 1);
    std::vector<mpq_class> reach(n + 1);  // sum of vmax over [0, k)
    lo[0] = hi[0] = infos[c].init;
    reach[0] = 0;
    mpq_class vmax = infos[c].init_speed;
    mpq_class vmin = infos[c].init_speed;
    for (std::size_t k = 0; k < n; ++k) {
      hi[k + 1] = hi[k] + vmax;
      lo[k + 1] = lo[k] + vmin;
      reach[k + 1] = reach[k] + vmax;
      vmax = std::min<mpq_class>(vmax_abs, vmax + a);
      vmin = std::max<mpq_class>(0, vmin - b);
    }
    std::vector<std::pair<std::size_t, mpq_class>> anchors{{n, infos[c].goal}};
    if (with_timing) {
      for (const auto& e : ev) {
        if (t.car_slot(e.car) != c || e.kind != EventKind::Enter || is_initial_enter(e, t, infos)) continue;
        anchors.emplace_back(static_cast<std::size_t>(deadline_index(e, spec)), to_mpq(e.offset));
      }
    }
    for (const auto& [idx, p] : anchors) {
      for (std::size_t k = 0; k <= n; ++k) {
        mpq_class bound = k >= idx ? p : mpq_class(p - (reach[idx] - reach[k]));
        if (bound > lo[k]) lo[k] = bound;
      }
    }
    w.lo.push_back(std::move(lo));
    w.hi.push_back(std::move(hi));
  }
  return w;
}

Atom pos_cmp(std::size_t slot, std::int64_t k, Cmp cmp, const mpq_class& rhs) {
  Atom a{LinExpr::var({VarRef::Position, static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(k)}), cmp};
  a.expr.shift(-rhs);
  return a;
}

VarRef speed_ref(std::size_t slot, std::int64_t k) {
  return {VarRef::Speed, static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(k)};
}
VarRef pos_ref(std::size_t slot, std::int64_t k) {
  return {VarRef::Position, static_cast<std::uint32_t>(slot), static_cast<std::uint32_t>(k)};
}

bool holds(const Atom& a, const std::vector<std::vector<mpq_class>>& speeds,
           const std::vector<std::vector<mpq_class>>& positions) {
  mpq_class v = a.expr.constant;
  for (const auto& [ref, coef] : a.expr.terms) {
    v += coef * (ref.kind == VarRef::Speed ? speeds[ref.car][ref.step] : positions[ref.car][ref.step]);
  }
  switch (a.cmp) {
    case Cmp::Lt: return v < 0;
    case Cmp::Le: return v <= 0;
    case Cmp::Eq: return v == 0;
    case Cmp::Ge: return v >= 0;
    case Cmp::Gt: return v > 0;
  }
  return false;
}

}  // namespace

std::vector<ImportantEvent> extract_events(const SwaSystem& sys, const Trace& trace) {
  auto check = validate_trace(sys, trace);
  if (!check) throw InvalidTraceError(check.diagnostic);
  const CarTraffic& t = sys.traffic();
  const auto infos = car_infos(t);
  std::vector<ImportantEvent> out;
  for (std::size_t c = 0; c < t.cars().size(); ++c) {
    const Car& car = t.cars()[c];
    const auto& info = infos[c];
    const DirectedSection d = t.path(car.path).steps[info.first];
    out.push_back({car.index, d.section, info.first, EventKind::Enter,
                   -((car.initial_offset - info.offsets[info.first]) / t.nominal_speed()), info.offsets[info.first]});
  }
  for (const TraceEvent& e : trace.events) {
    if (e.automaton >= sys.car_count()) continue;
    const SwaAutomaton& a = sys.automata()[e.automaton];
    const Transition& tr = a.transitions[e.transition];
    const Location& from = a.locations[tr.source];
    const Location& to = a.locations[tr.target];
    const Car& car = t.car(a.owner);
    const auto& info = infos[e.automaton];
    const Path& path = t.path(car.path);
    if (from.role == LocationRole::Wait && to.role == LocationRole::Driving) {
      const std::size_t k = to.step;
      out.push_back({car.index, path.steps[k - 1].section, k - 1, EventKind::Leave, e.time, info.offsets[k]});
      out.push_back({car.index, path.steps[k].section, k, EventKind::Enter, e.time, info.offsets[k]});
    } else if (to.goal) {
      out.push_back({car.index, path.steps[to.step].section, to.step, EventKind::Leave, e.time,
                     info.offsets[to.step + 1]});
    }
  }
  std::sort(out.begin(), out.end(), [](const ImportantEvent& a, const ImportantEvent& b) {
    return std::tie(a.time, a.car, a.section, a.kind) < std::tie(b.time, b.car, b.section, b.kind);
  });
  return out;
}

std::size_t ConstraintSet::count(Family f) const {
  return static_cast<std::size_t>(
      std::count_if(constraints.begin(), constraints.end(), [&](const Constraint& c) { return c.family == f; }));
}

std::optional<std::size_t> ConstraintSet::first_violation(const std::vector<std::vector<mpq_class>>& speeds) const {
  std::vector<std::vector<mpq_class>> positions(cars);
  for (std::size_t c = 0; c < cars; ++c) {
    positions[c].push_back(initial_offsets[c]);
    for (std::int64_t k = 0; k < steps; ++k) positions[c].push_back(positions[c].back() + speeds[c][static_cast<std::size_t>(k)]);
  }
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const Constraint& c = constraints[i];
    bool premise = std::all_of(c.premises.begin(), c.premises.end(),
                               [&](const Atom& a) { return holds(a, speeds, positions); });
    if (!premise) continue;
    bool conclusion = std::any_of(c.conclusion.begin(), c.conclusion.end(),
                                  [&](const Atom& a) { return holds(a, speeds, positions); });
    if (!conclusion) return i;
  }
  return std::nullopt;
}

ConstraintSet build_constraints(const std::vector<ImportantEvent>& events, const RefinementSpec& spec,
                                const CarTraffic& t, const BuildOptions& options) {
  if (spec.steps < 1) throw HorizonError("refinement needs at least one step");
  const std::int64_t n = spec.steps;
  const auto infos = car_infos(t);
  ConstraintSet cs;
  cs.cars = t.cars().size();
  cs.steps = n;
  for (const auto& info : infos) cs.initial_offsets.push_back(info.init);
  auto& out = cs.constraints;
  auto add_atom = [&](Family f, Atom a) { out.push_back({f, {}, {std::move(a)}, {}}); };

  const mpq_class vmax = to_mpq(spec.max_speed);
  const mpq_class acc = to_mpq(spec.max_accel);
  const mpq_class dec = to_mpq(spec.max_decel);
  for (std::size_t c = 0; c < cs.cars; ++c) {
    add_atom(Family::InitialSpeed, Atom{LinExpr::var(speed_ref(c, 0)).shift(-infos[c].init_speed), Cmp::Eq});
    for (std::int64_t k = 0; k + 1 < n; ++k) {
      LinExpr diff = LinExpr::var(speed_ref(c, k + 1));
      diff.add(speed_ref(c, k), -1);
      add_atom(Family::Acceleration, Atom{LinExpr(diff).shift(dec), Cmp::Ge});
      add_atom(Family::Acceleration, Atom{LinExpr(diff).shift(-acc), Cmp::Le});
    }
    for (std::int64_t k = 0; k < n; ++k) {
      add_atom(Family::SpeedBound, Atom{LinExpr::var(speed_ref(c, k)), Cmp::Ge});
      add_atom(Family::SpeedBound, Atom{LinExpr::var(speed_ref(c, k)).shift(-vmax), Cmp::Le});
    }
  }

  const Windows w = position_windows(events, spec, t, infos, options.with_timing);
  auto slot = [&](const ImportantEvent& e) { return t.car_slot(e.car); };
  auto lo = [&](std::size_t c, std::int64_t k) -> const mpq_class& { return w.lo[c][static_cast<std::size_t>(k)]; };
  auto hi = [&](std::size_t c, std::int64_t k) -> const mpq_class& { return w.hi[c][static_cast<std::size_t>(k)]; };

  for (const auto& [a, b] : order_pairs(events, spec.pair_scope)) {
    const auto& e1 = events[a];
    const auto& e2 = events[b];
    const std::size_t i = slot(e1);
    const std::size_t j = slot(e2);
    const mpq_class p1 = to_mpq(e1.offset);
    const mpq_class p2 = to_mpq(e2.offset);
    for (std::int64_t k = 0; k <= n; ++k) {
      if (options.prune && (lo(i, k) >= p1 || hi(j, k) < p2)) continue;
      out.push_back({Family::EventOrder, {pos_cmp(i, k, Cmp::Lt, p1)}, {pos_cmp(j, k, Cmp::Lt, p2)}, {}});
    }
  }

  const mpq_class d = to_mpq(spec.safety_distance);
  for (const auto& [section, order] : intersection_order(events, t)) {
    for (std::size_t x = 0; x < order.size(); ++x) {
      for (std::size_t y = x + 1; y < order.size(); ++y) {
        const auto& ei = events[order[x]];
        const auto& ej = events[order[y]];
        if (ei.car == ej.car) continue;
        const std::size_t i = slot(ei);
        const std::size_t j = slot(ej);
        const mpq_class i0 = to_mpq(ei.offset);
        const mpq_class i1 = to_mpq(leave_of(events, ei).offset);
        const mpq_class j0 = to_mpq(ej.offset);
        const mpq_class j1 = to_mpq(leave_of(events, ej).offset);
        const std::string note = t.section(section).name() + ": car " + std::to_string(ei.car) + " before car " +
                                 std::to_string(ej.car);
        for (std::int64_t k = 0; k <= n; ++k) {
          if (options.prune && (hi(i, k) < i0 || lo(i, k) > i1 || hi(j, k) < j0 || lo(j, k) > j1)) continue;
          LinExpr gap = LinExpr::var(pos_ref(i, k));
          gap.add(pos_ref(j, k), -1);
          gap.shift(-i0 + j0 - d);
          out.push_back({Family::Intersection,
                         {pos_cmp(i, k, Cmp::Ge, i0), pos_cmp(i, k, Cmp::Le, i1), pos_cmp(j, k, Cmp::Ge, j0),
                          pos_cmp(j, k, Cmp::Le, j1)},
                         {Atom{gap, Cmp::Gt}},
                         note});
        }
      }
    }
  }

  if (options.with_timing) {
    for (const auto& e : events) {
      if (e.kind != EventKind::Enter || is_initial_enter(e, t, infos)) continue;
      add_atom(Family::Timing, pos_cmp(slot(e), deadline_index(e, spec), Cmp::Ge, to_mpq(e.offset)));
    }
  }
  for (std::size_t c = 0; c < cs.cars; ++c) add_atom(Family::Goal, pos_cmp(c, n, Cmp::Ge, infos[c].goal));

  if (options.with_collision) {
    const mpq_class eps = to_mpq(t.epsilon());
    for (std::size_t i = 0; i < cs.cars; ++i) {
      for (std::size_t j = i + 1; j < cs.cars; ++j) {
        const Car& ci = t.cars()[i];
        const Car& cj = t.cars()[j];
        const auto& ii = infos[i];
        const auto& ij = infos[j];
        for (std::size_t a = ii.first; a <= ii.last; ++a) {
          const mpq_class sa = to_mpq(ii.offsets[a]);
          const mpq_class ea = to_mpq(ii.offsets[a + 1]);
          for (std::size_t b = ij.first; b <= ij.last; ++b) {
            const RuleOutcome rule = rule_outcome(t, ci, a, ii, cj, b, ij);
            if (!rule.forbidden && !rule.same_lane && rule.gaps.empty()) continue;
            const mpq_class sb = to_mpq(ij.offsets[b]);
            const mpq_class eb = to_mpq(ij.offsets[b + 1]);
            for (std::int64_t k = 0; k <= n; ++k) {
              if (options.prune && (hi(i, k) < sa || lo(i, k) >= ea || hi(j, k) < sb || lo(j, k) >= eb)) continue;
              std::vector<Atom> inside{pos_cmp(i, k, Cmp::Ge, sa), pos_cmp(i, k, Cmp::Lt, ea),
                                       pos_cmp(j, k, Cmp::Ge, sb), pos_cmp(j, k, Cmp::Lt, eb)};
              // Past the goal a car is gone.
              if (ea > ii.goal) inside.push_back(pos_cmp(i, k, Cmp::Lt, ii.goal));
              if (eb > ij.goal) inside.push_back(pos_cmp(j, k, Cmp::Lt, ij.goal));
              if (rule.forbidden) {
                out.push_back({Family::Collision, inside, {}, {}});
                continue;
              }
              if (rule.same_lane) {
                // (pos_i - sa) - (pos_j - sb) >= eps  or the reverse
                LinExpr ahead = LinExpr::var(pos_ref(i, k));
                ahead.add(pos_ref(j, k), -1);
                LinExpr behind = LinExpr::var(pos_ref(j, k));
                behind.add(pos_ref(i, k), -1);
                ahead.shift(-sa + sb - eps);
                behind.shift(-sb + sa - eps);
                out.push_back({Family::Collision, inside, {Atom{ahead, Cmp::Ge}, Atom{behind, Cmp::Ge}}, {}});
                continue;
              }
              for (const GapTerm& g : rule.gaps) {
                LinExpr gap = LinExpr::var(pos_ref(i, k), g.coef_i);
                gap.add(pos_ref(j, k), g.coef_j);
                gap.shift(g.constant - eps);
                out.push_back({Family::Collision, inside, {Atom{gap, Cmp::Ge}}, {}});
              }
            }
          }
        }
      }
    }
  }
  return cs;
}

mpq_class RefinedPlan::position(const CarTraffic& t, std::size_t slot, std::int64_t k) const {
  mpq_class p = to_mpq(t.cars().at(slot).initial_offset);
  for (std::int64_t l = 0; l < k; ++l) p += speeds.at(slot).at(static_cast<std::size_t>(l));
  return p;
}

std::int64_t completion_step(const RefinedPlan& plan, const CarTraffic& t) {
  for (std::int64_t k = 0; k <= plan.steps; ++k) {
    bool done = true;
    for (std::size_t c = 0; c < t.cars().size() && done; ++c) done = plan.position(t, c, k) >= to_mpq(t.cars()[c].goal_offset);
    if (done) return k;
  }
  return -1;
}

namespace {

// Per-step conditions shared by validate_plan and the lattice search: event
// order (every strictly ordered pair), intersection gaps, deadlines that fall
// on step k, and the collision rules on the snapshot.
class StepChecker {
 public:
  StepChecker(const std::vector<ImportantEvent>& events, const RefinementSpec& spec, const CarTraffic& t)
      : events_(events), spec_(spec), t_(t), infos_(car_infos(t)) {
    pairs_ = order_pairs(events, PairScope::Full);
    for (const auto& [section, order] : intersection_order(events, t)) {
      for (std::size_t x = 0; x < order.size(); ++x) {
        for (std::size_t y = x + 1; y < order.size(); ++y) {
          if (events[order[x]].car != events[order[y]].car) gaps_.push_back({order[x], order[y]});
        }
      }
    }
  }

  // Empty when all hold. `deadlines_up_to`: enter deadlines with index <= k
  // are checked at exactly their index, so pass k itself when stepping.
  std::string check(std::int64_t k, const std::vector<mpq_class>& pos, const std::vector<mpq_class>& speed,
                    bool include_clamped) const {
    auto slot = [&](const ImportantEvent& e) { return t_.car_slot(e.car); };
    for (const auto& [a, b] : pairs_) {
      const auto& e1 = events_[a];
      const auto& e2 = events_[b];
      if (pos[slot(e1)] < to_mpq(e1.offset) && !(pos[slot(e2)] < to_mpq(e2.offset))) {
        return "event order at step " + std::to_string(k) + ": car " + std::to_string(e2.car) + " passes " +
               e2.offset.str() + " before car " + std::to_string(e1.car) + " passes " + e1.offset.str();
      }
    }
    const mpq_class d = to_mpq(spec_.safety_distance);
    for (const auto& [x, y] : gaps_) {
      const auto& ei = events_[x];
      const auto& ej = events_[y];
      const mpq_class& pi = pos[slot(ei)];
      const mpq_class& pj = pos[slot(ej)];
      const mpq_class i0 = to_mpq(ei.offset);
      const mpq_class j0 = to_mpq(ej.offset);
      const bool in_i = i0 <= pi && pi <= to_mpq(leave_of(events_, ei).offset);
      const bool in_j = j0 <= pj && pj <= to_mpq(leave_of(events_, ej).offset);
      if (in_i && in_j && !((pi - i0) - (pj - j0) > d)) {
        return "intersection " + t_.section(ei.section).name() + " at step " + std::to_string(k) + ": car " +
               std::to_string(ej.car) + " within " + d.get_str() + " of car " + std::to_string(ei.car);
      }
    }
    for (const auto& e : events_) {
      if (e.kind != EventKind::Enter || is_initial_enter(e, t_, infos_)) continue;
      const std::int64_t idx = std::max<std::int64_t>(0, e.time.floor()) + spec_.slack;
      const bool due = idx == k || (include_clamped && idx > k);
      if (due && pos[slot(e)] < to_mpq(e.offset)) {
        return "timing: car " + std::to_string(e.car) + " enters " + t_.section(e.section).name() + " after step " +
               std::to_string(k);
      }
    }
    BasicWorldSnapshot<mpq_class> snap;
    for (std::size_t c = 0; c < t_.cars().size(); ++c) {
      if (auto p = place_car<mpq_class>(t_, t_.cars()[c].index, pos[c], speed[c])) snap.cars.push_back(*p);
    }
    auto v = check_collision_rules(snap, t_);
    if (!v.empty()) {
      return "collision rule " + std::to_string(static_cast<int>(v[0].rule)) + " at step " + std::to_string(k) +
             " between cars " + std::to_string(v[0].first) + " and " + std::to_string(v[0].second);
    }
    return {};
  }

 private:
  const std::vector<ImportantEvent>& events_;
  const RefinementSpec& spec_;
  const CarTraffic& t_;
  std::vector<CarInfo> infos_;
  std::vector<std::pair<std::size_t, std::size_t>> pairs_;
  std::vector<std::pair<std::size_t, std::size_t>> gaps_;
};

}  // namespace

PlanCheck validate_plan(const RefinedPlan& plan, const std::vector<ImportantEvent>& events,
                        const RefinementSpec& spec, const CarTraffic& t) {
  PlanCheck r;
  auto fail = [&](std::string why) {
    r.ok = false;
    r.diagnostic = std::move(why);
    return r;
  };
  const std::size_t cars = t.cars().size();
  const std::int64_t n = plan.steps;
  if (n != spec.steps || n < 1) return fail("plan has " + std::to_string(n) + " steps, spec " + std::to_string(spec.steps));
  if (plan.speeds.size() != cars) return fail("plan covers " + std::to_string(plan.speeds.size()) + " cars");
  for (const auto& row : plan.speeds) {
    if (row.size() != static_cast<std::size_t>(n)) return fail("speed row length differs from the horizon");
  }
  const mpq_class vmax = to_mpq(spec.max_speed);
  const mpq_class acc = to_mpq(spec.max_accel);
  const mpq_class dec = to_mpq(spec.max_decel);
  for (std::size_t c = 0; c < cars; ++c) {
    const auto& v = plan.speeds[c];
    const std::string who = "car " + std::to_string(t.cars()[c].index);
    if (v[0] != to_mpq(t.cars()[c].initial_speed)) return fail(who + ": first speed differs from the initial speed");
    for (std::int64_t k = 0; k < n; ++k) {
      const auto& x = v[static_cast<std::size_t>(k)];
      if (x < 0 || x > vmax) return fail(who + ": speed " + x.get_str() + " out of [0, V] at step " + std::to_string(k));
      if (k + 1 < n) {
        const mpq_class dv = v[static_cast<std::size_t>(k) + 1] - x;
        if (dv > acc || -dv > dec) return fail(who + ": speed change " + dv.get_str() + " at step " + std::to_string(k));
      }
    }
    if (plan.position(t, c, n) < to_mpq(t.cars()[c].goal_offset)) return fail(who + ": goal not reached by step N");
  }
  StepChecker checker(events, spec, t);
  std::vector<mpq_class> pos(cars);
  std::vector<mpq_class> speed(cars);
  for (std::size_t c = 0; c < cars; ++c) pos[c] = to_mpq(t.cars()[c].initial_offset);
  for (std::int64_t k = 0; k <= n; ++k) {
    for (std::size_t c = 0; c < cars; ++c) speed[c] = plan.speeds[c][static_cast<std::size_t>(std::min(k, n - 1))];
    if (auto err = checker.check(k, pos, speed, k == n); !err.empty()) return fail(err);
    if (k < n) {
      for (std::size_t c = 0; c < cars; ++c) pos[c] += plan.speeds[c][static_cast<std::size_t>(k)];
    }
  }
  return r;
}

std::int64_t dynamic_lower_bound(const CarTraffic& t, const RefinementSpec& spec) {
  std::int64_t worst = 1;
  const mpq_class vmax = to_mpq(spec.max_speed);
  const mpq_class acc = to_mpq(spec.max_accel);
  for (const Car& c : t.cars()) {
    mpq_class pos = to_mpq(c.initial_offset);
    mpq_class v = to_mpq(c.initial_speed);
    const mpq_class goal = to_mpq(c.goal_offset);
    std::int64_t k = 0;
    while (pos < goal) {
      pos += v;
      v = std::min<mpq_class>(vmax, v + acc);
      ++k;
      if (vmax <= 0 || k > 1000000) throw HorizonError("goal unreachable with the speed bound");
    }
    worst = std::max(worst, k);
  }
  return worst;
}

std::optional<std::int64_t> lattice_min_horizon(const std::vector<ImportantEvent>& events,
                                                const RefinementSpec& spec, const CarTraffic& t,
                                                std::int64_t max_steps, std::optional<Rational> unit) {
  const Rational u = unit.value_or(spec.max_accel);
  auto levels = [&](const Rational& r) -> std::int64_t {
    Rational q = r / u;
    if (!q.is_integer()) throw std::invalid_argument("lattice unit must divide " + r.str());
    return q.num();
  };
  const std::int64_t vtop = (spec.max_speed / u).floor();
  const std::int64_t up = (spec.max_accel / u).floor();
  const std::int64_t down = (spec.max_decel / u).floor();
  const std::size_t cars = t.cars().size();
  using State = std::vector<std::int64_t>;  // per car: position steps of u, then speed level
  State s0;
  for (const Car& c : t.cars()) {
    s0.push_back(0);
    s0.push_back(levels(c.initial_speed));
  }
  StepChecker checker(events, spec, t);
  const mpq_class um = to_mpq(u);
  auto decode = [&](const State& s, std::vector<mpq_class>& pos, std::vector<mpq_class>& speed) {
    for (std::size_t c = 0; c < cars; ++c) {
      pos[c] = to_mpq(t.cars()[c].initial_offset) + um * s[2 * c];
      speed[c] = um * s[2 * c + 1];
    }
  };
  std::vector<mpq_class> pos(cars);
  std::vector<mpq_class> speed(cars);
  std::set<State> layer{s0};
  for (std::int64_t k = 0; k <= max_steps && !layer.empty(); ++k) {
    std::set<State> kept;
    for (const State& s : layer) {
      decode(s, pos, speed);
      if (!checker.check(k, pos, speed, false).empty()) continue;
      kept.insert(s);
    }
    if (k >= 1) {
      for (const State& s : kept) {
        decode(s, pos, speed);
        bool done = true;
        for (std::size_t c = 0; c < cars && done; ++c) done = pos[c] >= to_mpq(t.cars()[c].goal_offset);
        if (done) return k;
      }
    }
    std::set<State> next;
    for (const State& s : kept) {
      State n = s;
      for (std::size_t c = 0; c < cars; ++c) n[2 * c] += s[2 * c + 1];
      // Enumerate every combination of next speed levels.
      std::vector<std::int64_t> lo(cars);
      std::vector<std::int64_t> hi(cars);
      for (std::size_t c = 0; c < cars; ++c) {
        lo[c] = std::max<std::int64_t>(0, s[2 * c + 1] - down);
        hi[c] = std::min<std::int64_t>(vtop, s[2 * c + 1] + up);
        n[2 * c + 1] = lo[c];
      }
      for (;;) {
        next.insert(n);
        std::size_t c = 0;
        while (c < cars && n[2 * c + 1] == hi[c]) {
          n[2 * c + 1] = lo[c];
          ++c;
        }
        if (c == cars) break;
        ++n[2 * c + 1];
      }
      if (next.size() > 5000000) throw std::length_error("lattice search too large");
    }
    layer = std::move(next);
  }
  return std::nullopt;
}

RefineResult solve_refinement(const SwaSystem& sys, const Trace& trace, RefinementSpec spec, SmtSolver& solver,
                              const RefineOptions& options) {
  using clock = std::chrono::steady_clock;
  const auto started = clock::now();
  const auto events = extract_events(sys, trace);
  const CarTraffic& t = sys.traffic();
  RefineResult result;
  std::int64_t first = dynamic_lower_bound(t, spec);
  if (options.start == SearchStart::TraceTime) {
    Rational end{0};
    for (const auto& e : trace.events) end = max(end, e.time);
    first = std::max<std::int64_t>(first, end.ceil());
  }
  for (std::int64_t n = first; n <= options.horizon_cap; ++n) {
    std::optional<std::chrono::duration<double>> budget;
    if (options.time_limit) {
      budget = *options.time_limit - (clock::now() - started);
      if (budget->count() <= 0) {
        result.timed_out = true;
        break;
      }
    }
    spec.steps = n;
    const ConstraintSet cs = build_constraints(events, spec, t, options.build);
    const auto call_start = clock::now();
    SmtAnswer answer = solver.check(emit_smtlib(cs), budget);
    const double secs = std::chrono::duration<double>(clock::now() - call_start).count();
    if (answer.status == SmtAnswer::Sat) {
      RefinedPlan plan = plan_from_answer(answer, cs);
      plan.trace_hash = trace_hash(sys, trace);
      if (auto bad = cs.first_violation(plan.speeds)) {
        throw SolverTransportError("solver model violates constraint #" + std::to_string(*bad) + " (" +
                                   to_string(cs.constraints[*bad].family) + ")");
      }
      result.attempts.push_back({n, RefineStatus::Sat, secs});
      result.plan = std::move(plan);
      break;
    }
    if (answer.status == SmtAnswer::Unsat) {
      result.attempts.push_back({n, RefineStatus::Unsat, secs});
      continue;
    }
    result.attempts.push_back({n, RefineStatus::Timeout, secs});
    result.timed_out = true;
    break;
  }
  return result;
}

json plan_to_json(const RefinedPlan& plan, const RefinementSpec& spec, const CarTraffic& t) {
  json doc;
  doc["format"] = "tsynth-plan";
  doc["version"] = kPlanFormatVersion;
  doc["instance_hash"] = traffic_hash(t);
  doc["trace_hash"] = plan.trace_hash;
  doc["spec"] = {{"steps", spec.steps},
                 {"max_speed", rational_to_json(spec.max_speed)},
                 {"max_accel", rational_to_json(spec.max_accel)},
                 {"max_decel", rational_to_json(spec.max_decel)},
                 {"slack", spec.slack},
                 {"safety_distance", rational_to_json(spec.safety_distance)},
                 {"pair_scope", spec.pair_scope == PairScope::Full ? "full" : "consecutive"}};
  json cars = json::array();
  for (std::size_t c = 0; c < plan.speeds.size(); ++c) {
    json speeds = json::array();
    for (const auto& v : plan.speeds[c]) speeds.push_back(v.get_str());
    cars.push_back({{"car", t.cars().at(c).index}, {"speeds", speeds}});
  }
  doc["cars"] = cars;
  return doc;
}

PlanDocument plan_from_json(const json& doc, const CarTraffic& t) {
  try {
    if (doc.at("format") != "tsynth-plan") throw TraceFormatError("not a plan document");
    if (doc.at("version") != kPlanFormatVersion) throw TraceFormatError("unsupported plan version");
    if (doc.at("instance_hash").get<std::uint64_t>() != traffic_hash(t)) {
      throw TraceFormatError("plan was made for a different instance");
    }
    PlanDocument out;
    const json& s = doc.at("spec");
    out.spec.steps = s.at("steps").get<std::int64_t>();
    out.spec.max_speed = rational_from_json(s.at("max_speed"));
    out.spec.max_accel = rational_from_json(s.at("max_accel"));
    out.spec.max_decel = rational_from_json(s.at("max_decel"));
    out.spec.slack = s.at("slack").get<std::int64_t>();
    out.spec.safety_distance = rational_from_json(s.at("safety_distance"));
    out.spec.pair_scope = s.value("pair_scope", "consecutive") == "full" ? PairScope::Full : PairScope::Consecutive;
    out.plan.steps = out.spec.steps;
    out.plan.trace_hash = doc.value("trace_hash", std::uint64_t{0});
    out.plan.speeds.assign(t.cars().size(), {});
    for (const json& c : doc.at("cars")) {
      const std::size_t slot = t.car_slot(c.at("car").get<CarId>());
      for (const json& v : c.at("speeds")) {
        mpq_class q(v.get<std::string>());
        q.canonicalize();
        out.plan.speeds[slot].push_back(q);
      }
    }
    return out;
  } catch (const json::exception& e) {
    throw TraceFormatError(std::string("malformed plan: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw TraceFormatError(std::string("malformed plan: ") + e.what());
  }
}

void write_plan(const std::filesystem::path& file, const RefinedPlan& plan, const RefinementSpec& spec,
                const CarTraffic& t) {
  std::ofstream out(file);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << plan_to_json(plan, spec, t).dump(1) << "\n";
}

PlanDocument read_plan(const std::filesystem::path& file, const CarTraffic& t) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw TraceFormatError(std::string("malformed plan: ") + e.what());
  }
  return plan_from_json(doc, t);
}

}  // namespace tsynth
