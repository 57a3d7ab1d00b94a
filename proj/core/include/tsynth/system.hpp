#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tsynth/swa.hpp"

namespace tsynth {

// Point valuation of every clock plus the discrete configuration. Channel
// contents are stored flattened; channel c occupies the slice starting at
// SwaSystem::channel_offset(c).
struct SystemState {
  std::vector<std::uint16_t> locations;
  std::vector<Rational> clocks;  // clocks[0] is global time
  std::vector<std::uint8_t> channel_length;
  std::vector<std::uint8_t> channel_data;

  const Rational& global_time() const { return clocks[0]; }

  friend bool operator==(const SystemState&, const SystemState&) = default;
};

// A discrete step preceded by a delay: one transition, or a handshake pair
// (car transition, intersection transition).
struct Move {
  Rational delay;
  std::uint16_t automaton = 0;
  std::uint16_t transition = 0;
  std::int32_t partner = -1;
  std::uint16_t partner_transition = 0;
};

class SwaSystem {
 public:
  explicit SwaSystem(CarTraffic traffic);

  const CarTraffic& traffic() const { return traffic_; }
  const SystemLayout& layout() const { return layout_; }
  const std::vector<SwaAutomaton>& automata() const { return automata_; }
  std::size_t car_count() const { return car_count_; }
  // Car automata occupy [0, car_count()), intersections follow.
  const SwaAutomaton& car_automaton(std::size_t slot) const { return automata_.at(slot); }
  std::optional<std::size_t> find_automaton(const std::string& name) const;

  const SystemState& initial_state() const { return initial_; }
  bool is_final(const SystemState& s) const;

  std::size_t channel_offset(ChannelIndex c) const { return channel_offset_[c]; }
  std::size_t channel_capacity(ChannelIndex c) const { return layout_.channel_capacity()[c]; }

  // Every discrete step enabled from `s` after the minimal delay that enables
  // it, in deterministic order: car transitions by car, then intersection
  // transitions by section. A car in a wait location keeps waiting in every
  // successor produced by another automaton, so no pure-delay successor is
  // generated.
  std::vector<Move> moves(const SystemState& s) const;
  SystemState apply(const SystemState& s, const Move& m) const;

  // Resumable successor enumeration; the cursor indexes moves(s).
  std::optional<std::pair<SystemState, std::size_t>> succ(const SystemState& s, std::size_t cursor) const;

  // Goal offset over nominal speed, per car slot.
  const Rational& goal_progress(std::size_t slot) const { return goal_progress_[slot]; }

 private:
  std::uint64_t stopped_mask(const SystemState& s) const;
  bool target_invariant_holds(const SystemState& s, const Move& m, std::uint64_t stopped) const;

  CarTraffic traffic_;
  SystemLayout layout_;
  std::vector<SwaAutomaton> automata_;
  std::size_t car_count_;
  std::vector<std::size_t> channel_offset_;
  std::vector<Rational> goal_progress_;
  SystemState initial_;
};

// a ⊑ b: same locations, channels and non-global clocks, and a is not
// earlier than b; any continuation of a is then a continuation of b shifted
// earlier.
bool subsumes(const SystemState& a, const SystemState& b);

// Compact byte key over everything except global time.
std::string state_key(const SystemState& s);

}  // namespace tsynth
