#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tsynth/system.hpp"

namespace tsynth {

struct TraceFormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ChannelRecord {
  ChannelOp op = ChannelOp::None;
  ChannelIndex channel = 0;
  int symbol = 0;
};

struct TraceEvent {
  Rational time;  // absolute global time at which the transition fires
  std::size_t automaton = 0;
  std::size_t transition = 0;
  std::optional<std::pair<std::size_t, std::size_t>> partner;
  std::optional<ChannelRecord> channel;  // as recorded; checked against the transition on replay
};

struct Trace {
  std::vector<TraceEvent> events;
};

Trace trace_from_moves(const SwaSystem& sys, const std::vector<Move>& moves);

struct TraceCheck {
  bool ok = true;
  std::size_t failed_event = 0;
  std::string diagnostic;
  std::vector<SystemState> states;  // states[0] initial, states[i + 1] after event i (prefix on failure)

  explicit operator bool() const { return ok; }
};

// Replays the trace through the product semantics: delays must respect every
// invariant, guards and handshakes must hold, channel operations must match
// the FIFO contents, and the last state must be final.
TraceCheck validate_trace(const SwaSystem& sys, const Trace& trace);

struct IntersectionEntry {
  SectionId section;
  CarId car;
  Direction direction;
  Rational time;  // occupants at time 0 enter at -(relative offset)/v
};

std::vector<IntersectionEntry> intersection_entries(const SwaSystem& sys, const Trace& trace);

// Same-direction entries at least epsilon apart, opposite-direction entries at
// least section length + epsilon apart (in time at nominal speed). Returns
// the first offending pair described in words, or nullopt.
std::optional<std::string> check_intersection_spacing(const SwaSystem& sys, const Trace& trace);

// For every directed section, cars start driving in the order they were
// pushed onto its channel.
std::optional<std::string> check_fifo_order(const SwaSystem& sys, const Trace& trace);

inline constexpr int kTraceFormatVersion = 1;

nlohmann::json trace_to_json(const SwaSystem& sys, const Trace& trace, std::optional<Rational> optimal_time = {});
Trace trace_from_json(const SwaSystem& sys, const nlohmann::json& doc);
void write_trace(const std::filesystem::path& file, const SwaSystem& sys, const Trace& trace,
                 std::optional<Rational> optimal_time = {});
Trace read_trace(const std::filesystem::path& file, const SwaSystem& sys);
std::uint64_t trace_hash(const SwaSystem& sys, const Trace& trace);

}  // namespace tsynth
