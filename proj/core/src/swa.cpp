#include "tsynth/swa.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace tsynth {

bool satisfies(const ClockAtom& atom, const Rational& value) {
  switch (atom.relation) {
    case Relation::Eq: return value == atom.constant;
    case Relation::Le: return value <= atom.constant;
    case Relation::Lt: return value < atom.constant;
    case Relation::Ge: return value >= atom.constant;
    case Relation::Gt: return value > atom.constant;
  }
  return false;
}

void SwaAutomaton::index_transitions() {
  outgoing.assign(locations.size(), {});
  for (std::size_t i = 0; i < transitions.size(); ++i) outgoing.at(transitions[i].source).push_back(i);
}

std::optional<LocationIndex> SwaAutomaton::find_location(const std::string& n) const {
  for (LocationIndex i = 0; i < locations.size(); ++i) {
    if (locations[i].name == n) return i;
  }
  return std::nullopt;
}

SystemLayout::SystemLayout(const CarTraffic& traffic)
    : intersections_(traffic.intersections()), car_count_(traffic.cars().size()) {
  clocks_.push_back({"t", ClockKind::GlobalTime});
  for (const Car& c : traffic.cars()) car_ids_.push_back(c.index);
  for (const Car& c : traffic.cars()) clocks_.push_back({"x_car" + std::to_string(c.index), ClockKind::CarProgress});
  for (SectionId s : intersections_) clocks_.push_back({"x_" + traffic.section(s).name(), ClockKind::Intersection});
  auto used = traffic.used_directed_sections();
  channels_.assign(used.begin(), used.end());
  capacity_.assign(channels_.size(), 0);
  for (const Car& c : traffic.cars()) {
    for (const DirectedSection& d : traffic.path(c.path).steps) ++capacity_[channel(d)];
  }
}

std::size_t SystemLayout::car_slot(CarId car) const {
  auto it = std::lower_bound(car_ids_.begin(), car_ids_.end(), car);
  if (it == car_ids_.end() || *it != car) throw InstanceError("unknown car " + std::to_string(car));
  return static_cast<std::size_t>(it - car_ids_.begin());
}

ClockIndex SystemLayout::car_clock(CarId car) const { return 1 + car_slot(car); }

std::size_t SystemLayout::intersection_slot(SectionId section) const {
  auto it = std::lower_bound(intersections_.begin(), intersections_.end(), section);
  if (it == intersections_.end() || *it != section) {
    throw InstanceError("section #" + std::to_string(section) + " is not an intersection");
  }
  return static_cast<std::size_t>(it - intersections_.begin());
}

ClockIndex SystemLayout::intersection_clock(SectionId section) const {
  return 1 + car_count_ + intersection_slot(section);
}

ChannelIndex SystemLayout::channel(DirectedSection d) const {
  auto it = std::lower_bound(channels_.begin(), channels_.end(), d);
  if (it == channels_.end() || *it != d) {
    throw InstanceError("directed section #" + std::to_string(d.section) + " is not on any path");
  }
  return static_cast<ChannelIndex>(it - channels_.begin());
}

SyncId SystemLayout::sync_label(SectionId intersection, CarId car) const {
  return intersection_slot(intersection) * car_count_ + car_slot(car);
}

namespace {

std::string sync_name(const CarTraffic& t, SectionId s, CarId c) {
  return "enter_" + t.section(s).name() + "_car" + std::to_string(c);
}

// First and last traversed steps of a car; the goal must sit on a node.
std::pair<std::size_t, std::size_t> traversed_steps(const Car& car, const CarTraffic& traffic) {
  auto offsets = traffic.step_offsets(car.path);
  std::size_t first = traffic.step_at(car.path, car.initial_offset);
  auto it = std::find(offsets.begin() + 1, offsets.end(), car.goal_offset);
  if (it == offsets.end()) {
    throw InstanceError("car " + std::to_string(car.index) + ": goal offset " + car.goal_offset.str() +
                        " is not at the end of a section");
  }
  return {first, static_cast<std::size_t>(it - offsets.begin()) - 1};
}

}  // namespace

SwaAutomaton build_car_automaton(const Car& car, const CarTraffic& traffic) {
  SystemLayout layout(traffic);
  const ClockIndex x = layout.car_clock(car.index);
  const Path& path = traffic.path(car.path);
  const auto offsets = traffic.step_offsets(car.path);
  const auto [first, last] = traversed_steps(car, traffic);
  const Rational v = traffic.nominal_speed();

  SwaAutomaton a;
  a.name = "car" + std::to_string(car.index);
  a.kind = AutomatonKind::Car;
  a.owner = car.index;
  a.clocks = {x};
  a.initial_values = {{x, car.initial_offset / v}};

  auto add_location = [&](LocationRole role, std::size_t k) {
    Location loc;
    const char* tag = role == LocationRole::Wait ? "wait" : role == LocationRole::Driving ? "driving" : "arrived";
    loc.name = std::string(tag) + "[" + traffic.name(path.steps[k]) + "]";
    loc.role = role;
    loc.step = k;
    loc.direction = path.steps[k].direction;
    if (role == LocationRole::Wait) loc.stopped = {x};
    a.locations.push_back(std::move(loc));
    return a.locations.size() - 1;
  };
  auto eq = [&](const Rational& c) { return Guard{{ClockAtom{x, Relation::Eq, c}}}; };

  LocationIndex previous_arrived = 0;
  for (std::size_t k = first; k <= last; ++k) {
    const Rational start = offsets[k] / v;
    const Rational end = offsets[k + 1] / v;
    LocationIndex driving;
    if (k == first) {
      driving = add_location(LocationRole::Driving, k);
      a.initial = driving;
    } else {
      LocationIndex wait = add_location(LocationRole::Wait, k);
      Transition enter;
      enter.source = previous_arrived;
      enter.target = wait;
      enter.guard = eq(start);
      enter.resets = {{x, start}};
      if (traffic.is_intersection(path.steps[k].section)) {
        enter.sync = layout.sync_label(path.steps[k].section, car.index);
        enter.label = sync_name(traffic, path.steps[k].section, car.index);
        a.alphabet.push_back(enter.label);
      } else {
        enter.label = "enter";
      }
      a.transitions.push_back(enter);

      driving = add_location(LocationRole::Driving, k);
      Transition go;
      go.source = wait;
      go.target = driving;
      go.guard = eq(start);
      go.channel_op = ChannelOp::Pop;
      go.channel = layout.channel(path.steps[k]);
      go.symbol = static_cast<int>(traffic.car_slot(car.index));
      go.resets = {{x, start}};
      go.label = "go";
      a.transitions.push_back(go);
    }
    a.locations[driving].invariant = Guard{{ClockAtom{x, Relation::Le, end}}};

    LocationIndex arrived = add_location(LocationRole::Arrived, k);
    Transition reach;
    reach.source = driving;
    reach.target = arrived;
    reach.guard = eq(end);
    reach.resets = {{x, end}};
    reach.label = "reach";
    if (k < last) {
      reach.channel_op = ChannelOp::Push;
      reach.channel = layout.channel(path.steps[k + 1]);
      reach.symbol = static_cast<int>(traffic.car_slot(car.index));
    } else {
      a.locations[arrived].goal = true;
    }
    a.locations[arrived].stopped = {x};
    a.transitions.push_back(reach);
    previous_arrived = arrived;
  }
  a.index_transitions();
  return a;
}

SwaAutomaton build_intersection_automaton(SectionId section, const CarTraffic& traffic) {
  SystemLayout layout(traffic);
  const ClockIndex x = layout.intersection_clock(section);
  const Rational v = traffic.nominal_speed();
  const Rational eps_time = traffic.epsilon() / v;
  const Rational clear_time = (traffic.section(section).length + traffic.epsilon()) / v;

  struct Entry {
    CarId car;
    Direction direction;
  };
  std::vector<Entry> entries;
  std::set<Direction> directions;
  std::optional<std::pair<Rational, Direction>> inside;  // closest-to-start occupant at time 0
  for (const Car& c : traffic.cars()) {
    const Path& path = traffic.path(c.path);
    const auto offsets = traffic.step_offsets(c.path);
    const auto [first, last] = traversed_steps(c, traffic);
    for (std::size_t k = first; k <= last; ++k) {
      if (path.steps[k].section != section) continue;
      directions.insert(path.steps[k].direction);
      if (k == first) {
        Rational rel = c.initial_offset - offsets[k];
        if (!inside || rel < inside->first) inside = std::make_pair(rel, path.steps[k].direction);
      } else {
        entries.push_back({c.index, path.steps[k].direction});
      }
    }
  }

  SwaAutomaton a;
  a.name = "int[" + traffic.section(section).name() + "]";
  a.kind = AutomatonKind::Intersection;
  a.owner = static_cast<int>(section);
  a.clocks = {x};

  Location free;
  free.name = "free";
  free.role = LocationRole::Free;
  free.stopped = {x};
  a.locations.push_back(free);
  std::map<Direction, std::pair<LocationIndex, LocationIndex>> by_dir;
  for (Direction d : directions) {
    Location blocked;
    blocked.name = std::string("blocked_") + to_string(d);
    blocked.role = LocationRole::Blocked;
    blocked.direction = d;
    blocked.invariant = Guard{{ClockAtom{x, Relation::Le, eps_time}}};
    Location semi;
    semi.name = std::string("semifree_") + to_string(d);
    semi.role = LocationRole::SemiFree;
    semi.direction = d;
    semi.invariant = Guard{{ClockAtom{x, Relation::Le, clear_time}}};
    a.locations.push_back(blocked);
    a.locations.push_back(semi);
    by_dir[d] = {a.locations.size() - 2, a.locations.size() - 1};
  }

  for (const Entry& e : entries) {
    const auto [blocked, semi] = by_dir.at(e.direction);
    const std::string label = sync_name(traffic, section, e.car);
    a.alphabet.push_back(label);
    for (LocationIndex from : {LocationIndex{0}, semi}) {
      Transition t;
      t.source = from;
      t.target = blocked;
      t.sync = layout.sync_label(section, e.car);
      t.resets = {{x, Rational(0)}};
      t.label = label;
      a.transitions.push_back(t);
    }
  }
  for (const auto& [d, locs] : by_dir) {
    Transition semifree;
    semifree.source = locs.first;
    semifree.target = locs.second;
    semifree.guard = Guard{{ClockAtom{x, Relation::Eq, eps_time}}};
    semifree.resets = {{x, eps_time}};
    semifree.label = "semifree";
    a.transitions.push_back(semifree);
    Transition release;
    release.source = locs.second;
    release.target = 0;
    release.guard = Guard{{ClockAtom{x, Relation::Eq, clear_time}}};
    release.resets = {{x, Rational(0)}};
    release.label = "release";
    a.transitions.push_back(release);
  }

  if (inside) {
    const auto [blocked, semi] = by_dir.at(inside->second);
    Rational elapsed = inside->first / v;
    a.initial = elapsed < eps_time ? blocked : semi;
    a.initial_values = {{x, elapsed}};
  } else {
    a.initial = 0;
    a.initial_values = {{x, Rational(0)}};
  }
  a.index_transitions();
  return a;
}

bool is_initialized(const SwaAutomaton& a) {
  for (const Transition& t : a.transitions) {
    const auto& before = a.locations.at(t.source).stopped;
    const auto& after = a.locations.at(t.target).stopped;
    for (ClockIndex c : a.clocks) {
      bool stopped_before = std::find(before.begin(), before.end(), c) != before.end();
      bool stopped_after = std::find(after.begin(), after.end(), c) != after.end();
      if (stopped_before == stopped_after) continue;
      bool reset = std::any_of(t.resets.begin(), t.resets.end(), [&](const Reset& r) { return r.clock == c; });
      if (!reset) return false;
    }
  }
  return true;
}

}  // namespace tsynth
