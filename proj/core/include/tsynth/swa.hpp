#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsynth/rational.hpp"
#include "tsynth/traffic.hpp"

namespace tsynth {

using ClockIndex = std::size_t;
using LocationIndex = std::size_t;
using ChannelIndex = std::size_t;
using SyncId = std::size_t;

enum class ClockKind : std::uint8_t { CarProgress, Intersection, GlobalTime };

struct Clock {
  std::string name;
  ClockKind kind;
};

enum class Relation : std::uint8_t { Eq, Le, Lt, Ge, Gt };

struct ClockAtom {
  ClockIndex clock;
  Relation relation;
  Rational constant;
};

struct Guard {
  std::vector<ClockAtom> atoms;  // conjunction; empty means true
};

bool satisfies(const ClockAtom& atom, const Rational& value);

enum class LocationRole : std::uint8_t { Wait, Driving, Arrived, Free, Blocked, SemiFree };

struct Location {
  std::string name;
  LocationRole role;
  std::size_t step = 0;                 // car locations: index into the car's path
  Direction direction = Direction::Up;  // blocked / semi-free locations
  std::vector<ClockIndex> stopped;      // stopwatch set
  Guard invariant;
  bool goal = false;
};

enum class ChannelOp : std::uint8_t { None, Push, Pop };

struct Reset {
  ClockIndex clock;
  Rational value;  // equality-preserving resets assign the guard constant
};

struct Transition {
  LocationIndex source;
  LocationIndex target;
  Guard guard;
  std::optional<SyncId> sync;  // two-party handshake label
  ChannelOp channel_op = ChannelOp::None;
  ChannelIndex channel = 0;
  int symbol = 0;  // car slot pushed or popped
  std::vector<Reset> resets;
  std::string label;
};

enum class AutomatonKind : std::uint8_t { Car, Intersection };

struct SwaAutomaton {
  std::string name;
  AutomatonKind kind;
  int owner = 0;  // car index or section id
  std::vector<Location> locations;
  LocationIndex initial = 0;
  std::vector<ClockIndex> clocks;
  std::vector<std::pair<ClockIndex, Rational>> initial_values;
  std::vector<Transition> transitions;
  std::vector<std::string> alphabet;
  std::vector<std::vector<std::size_t>> outgoing;  // transition indices per location

  void index_transitions();
  std::optional<LocationIndex> find_location(const std::string& name) const;
};

// Fixed numbering of clocks, channels and synchronisation labels derived from
// a traffic: clock 0 is global time, then one progress clock per car (in car
// order), then one clock per intersection; one channel per used directed
// section in sorted order.
class SystemLayout {
 public:
  explicit SystemLayout(const CarTraffic& traffic);

  static constexpr ClockIndex kGlobalClock = 0;
  ClockIndex car_clock(CarId car) const;
  ClockIndex intersection_clock(SectionId section) const;
  std::size_t intersection_slot(SectionId section) const;
  ChannelIndex channel(DirectedSection d) const;
  SyncId sync_label(SectionId intersection, CarId car) const;

  const std::vector<Clock>& clocks() const { return clocks_; }
  const std::vector<DirectedSection>& channels() const { return channels_; }
  const std::vector<std::size_t>& channel_capacity() const { return capacity_; }
  std::size_t sync_count() const { return intersections_.size() * car_count_; }

 private:
  std::size_t car_slot(CarId car) const;

  std::vector<CarId> car_ids_;
  std::vector<Clock> clocks_;
  std::vector<SectionId> intersections_;
  std::vector<DirectedSection> channels_;
  std::vector<std::size_t> capacity_;
  std::size_t car_count_;
};

// Wait / driving / arrived per directed section from the car's initial
// section to its goal section; the progress clock counts time spent driving
// at nominal speed and all guards are equalities on it.
SwaAutomaton build_car_automaton(const Car& car, const CarTraffic& traffic);

// Free plus blocked / semi-free per direction actually used. Entries reset the
// section clock; a car already inside at time 0 determines the initial
// location and clock value.
SwaAutomaton build_intersection_automaton(SectionId section, const CarTraffic& traffic);

bool is_initialized(const SwaAutomaton& automaton);

}  // namespace tsynth
