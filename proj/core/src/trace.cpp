#include "tsynth/trace.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "tsynth/instance_io.hpp"

namespace tsynth {

using nlohmann::json;

Trace trace_from_moves(const SwaSystem& sys, const std::vector<Move>& moves) {
  Trace trace;
  Rational now = sys.initial_state().global_time();
  for (const Move& m : moves) {
    now += m.delay;
    TraceEvent e;
    e.time = now;
    e.automaton = m.automaton;
    e.transition = m.transition;
    if (m.partner >= 0) e.partner = std::make_pair(static_cast<std::size_t>(m.partner), std::size_t{m.partner_transition});
    const Transition& t = sys.automata()[m.automaton].transitions[m.transition];
    if (t.channel_op != ChannelOp::None) e.channel = ChannelRecord{t.channel_op, t.channel, t.symbol};
    trace.events.push_back(e);
  }
  return trace;
}

namespace {

std::string describe(const SwaSystem& sys, std::size_t automaton, std::size_t transition) {
  const SwaAutomaton& a = sys.automata().at(automaton);
  const Transition& t = a.transitions.at(transition);
  return a.name + ":" + a.locations[t.source].name + "->" + a.locations[t.target].name;
}

std::string channel_name(const SwaSystem& sys, ChannelIndex c) {
  return sys.traffic().name(sys.layout().channels().at(c));
}

std::string car_name(const SwaSystem& sys, int slot) {
  return "car" + std::to_string(sys.traffic().cars().at(static_cast<std::size_t>(slot)).index);
}

std::uint64_t stopped_mask(const SwaSystem& sys, const SystemState& s) {
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < sys.automata().size(); ++i) {
    for (ClockIndex c : sys.automata()[i].locations[s.locations[i]].stopped) mask |= std::uint64_t{1} << c;
  }
  return mask;
}

// Empty when fine, otherwise what went wrong.
std::string check_event(const SwaSystem& sys, const SystemState& s, const TraceEvent& e) {
  const auto& automata = sys.automata();
  if (e.automaton >= automata.size()) return "unknown automaton #" + std::to_string(e.automaton);
  if (e.transition >= automata[e.automaton].transitions.size()) {
    return "unknown transition #" + std::to_string(e.transition) + " of " + automata[e.automaton].name;
  }
  const Rational delay = e.time - s.global_time();
  if (delay < Rational(0)) return "time goes backwards to " + e.time.str();

  const std::uint64_t stopped = stopped_mask(sys, s);
  auto value_after_delay = [&](ClockIndex c) {
    return (stopped >> c & 1U) ? s.clocks[c] : s.clocks[c] + delay;
  };
  for (std::size_t i = 0; i < automata.size(); ++i) {
    const Location& loc = automata[i].locations[s.locations[i]];
    for (const ClockAtom& atom : loc.invariant.atoms) {
      if (!satisfies(atom, value_after_delay(atom.clock))) {
        return "delay " + delay.str() + " violates the invariant of " + automata[i].name + " in " + loc.name;
      }
    }
  }

  auto check_one = [&](std::size_t automaton, std::size_t transition) -> std::string {
    const SwaAutomaton& a = automata[automaton];
    const Transition& t = a.transitions[transition];
    if (s.locations[automaton] != t.source) {
      return a.name + " is in " + a.locations[s.locations[automaton]].name + ", not " + a.locations[t.source].name;
    }
    for (const ClockAtom& atom : t.guard.atoms) {
      if (!satisfies(atom, value_after_delay(atom.clock))) {
        return "guard of " + describe(sys, automaton, transition) + " fails at time " + e.time.str() + " (" +
               sys.layout().clocks()[atom.clock].name + " = " + value_after_delay(atom.clock).str() + ")";
      }
    }
    if (t.channel_op == ChannelOp::Pop) {
      const std::size_t len = s.channel_length[t.channel];
      if (len == 0) return "FIFO: channel " + channel_name(sys, t.channel) + " is empty when " + a.name + " pops";
      const int head = s.channel_data[sys.channel_offset(t.channel)];
      if (head != t.symbol) {
        return "FIFO: channel " + channel_name(sys, t.channel) + " head is " + car_name(sys, head) + ", " + a.name +
               " cannot pop";
      }
    } else if (t.channel_op == ChannelOp::Push) {
      if (s.channel_length[t.channel] >= sys.channel_capacity(t.channel)) {
        return "channel " + channel_name(sys, t.channel) + " is full";
      }
    }
    return {};
  };

  const Transition& t = automata[e.automaton].transitions[e.transition];
  if (auto err = check_one(e.automaton, e.transition); !err.empty()) return err;
  if (t.sync) {
    if (!e.partner) return describe(sys, e.automaton, e.transition) + " needs a handshake partner";
    const auto [pa, pt] = *e.partner;
    if (pa >= automata.size() || pa == e.automaton || pt >= automata[pa].transitions.size()) {
      return "invalid handshake partner";
    }
    if (automata[pa].transitions[pt].sync != t.sync) return "handshake labels differ";
    if (auto err = check_one(pa, pt); !err.empty()) return err;
  } else if (e.partner) {
    return describe(sys, e.automaton, e.transition) + " takes no handshake";
  }
  if (e.channel) {
    if (e.channel->op != t.channel_op || (t.channel_op != ChannelOp::None &&
                                          (e.channel->channel != t.channel || e.channel->symbol != t.symbol))) {
      return "recorded channel operation does not match " + describe(sys, e.automaton, e.transition);
    }
  }
  return {};
}

}  // namespace

TraceCheck validate_trace(const SwaSystem& sys, const Trace& trace) {
  TraceCheck check;
  check.states.push_back(sys.initial_state());
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    const TraceEvent& e = trace.events[i];
    const SystemState& s = check.states.back();
    std::string err = check_event(sys, s, e);
    if (err.empty()) {
      Move m;
      m.delay = e.time - s.global_time();
      m.automaton = static_cast<std::uint16_t>(e.automaton);
      m.transition = static_cast<std::uint16_t>(e.transition);
      if (e.partner) {
        m.partner = static_cast<std::int32_t>(e.partner->first);
        m.partner_transition = static_cast<std::uint16_t>(e.partner->second);
      }
      SystemState next = sys.apply(s, m);
      for (std::size_t a = 0; a < sys.automata().size() && err.empty(); ++a) {
        const Location& loc = sys.automata()[a].locations[next.locations[a]];
        for (const ClockAtom& atom : loc.invariant.atoms) {
          if (!satisfies(atom, next.clocks[atom.clock])) {
            err = "invariant of " + loc.name + " in " + sys.automata()[a].name + " fails after the transition";
            break;
          }
        }
      }
      if (err.empty()) {
        check.states.push_back(std::move(next));
        continue;
      }
    }
    check.ok = false;
    check.failed_event = i;
    check.diagnostic = "event " + std::to_string(i) + ": " + err;
    return check;
  }
  const SystemState& last = check.states.back();
  if (!sys.is_final(last)) {
    for (std::size_t c = 0; c < sys.car_count(); ++c) {
      const SwaAutomaton& a = sys.car_automaton(c);
      if (!a.locations[last.locations[c]].goal) {
        check.ok = false;
        check.failed_event = trace.events.size();
        check.diagnostic = "final state not reached: " + a.name + " ends in " + a.locations[last.locations[c]].name;
        return check;
      }
    }
  }
  return check;
}

std::vector<IntersectionEntry> intersection_entries(const SwaSystem& sys, const Trace& trace) {
  const CarTraffic& traffic = sys.traffic();
  std::vector<IntersectionEntry> out;
  for (SectionId s : traffic.intersections()) {
    for (const Car& c : traffic.cars()) {
      const std::size_t k = traffic.step_at(c.path, c.initial_offset);
      const DirectedSection d = traffic.path(c.path).steps[k];
      if (d.section != s) continue;
      const Rational rel = c.initial_offset - traffic.step_offsets(c.path)[k];
      out.push_back({s, c.index, d.direction, -(rel / traffic.nominal_speed())});
    }
  }
  for (const TraceEvent& e : trace.events) {
    std::size_t automaton = e.automaton;
    std::size_t transition = e.transition;
    if (sys.automata().at(automaton).kind != AutomatonKind::Car) {
      if (!e.partner) continue;
      std::tie(automaton, transition) = *e.partner;
    }
    const SwaAutomaton& a = sys.automata().at(automaton);
    if (a.kind != AutomatonKind::Car) continue;
    const Transition& t = a.transitions.at(transition);
    if (!t.sync) continue;
    const Location& target = a.locations[t.target];
    const DirectedSection d = traffic.path_of(a.owner).steps[target.step];
    out.push_back({d.section, a.owner, d.direction, e.time});
  }
  return out;
}

std::optional<std::string> check_intersection_spacing(const SwaSystem& sys, const Trace& trace) {
  const CarTraffic& traffic = sys.traffic();
  auto entries = intersection_entries(sys, trace);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const auto& a = entries[i];
      const auto& b = entries[j];
      if (a.section != b.section) continue;
      Rational gap = a.time < b.time ? b.time - a.time : a.time - b.time;
      Rational needed = traffic.epsilon();
      if (a.direction != b.direction) needed += traffic.section(a.section).length;
      needed /= traffic.nominal_speed();
      if (gap < needed) {
        std::ostringstream os;
        os << "cars " << a.car << " and " << b.car << " enter " << traffic.section(a.section).name() << " "
           << gap << " apart, need " << needed;
        return os.str();
      }
    }
  }
  return std::nullopt;
}

std::optional<std::string> check_fifo_order(const SwaSystem& sys, const Trace& trace) {
  std::map<ChannelIndex, std::vector<int>> pushes;
  std::map<ChannelIndex, std::vector<int>> pops;
  for (const TraceEvent& e : trace.events) {
    const Transition& t = sys.automata().at(e.automaton).transitions.at(e.transition);
    if (t.channel_op == ChannelOp::Push) pushes[t.channel].push_back(t.symbol);
    if (t.channel_op == ChannelOp::Pop) pops[t.channel].push_back(t.symbol);
  }
  for (const auto& [c, seq] : pops) {
    const auto& in = pushes[c];
    for (std::size_t i = 0; i < seq.size(); ++i) {
      if (i >= in.size() || in[i] != seq[i]) {
        return "channel " + channel_name(sys, c) + ": " + car_name(sys, seq[i]) + " starts driving out of order";
      }
    }
  }
  return std::nullopt;
}

json trace_to_json(const SwaSystem& sys, const Trace& trace, std::optional<Rational> optimal_time) {
  json doc;
  doc["format"] = "tsynth-trace";
  doc["version"] = kTraceFormatVersion;
  doc["instance_hash"] = traffic_hash(sys.traffic());
  doc["optimal_time"] = optimal_time ? rational_to_json(*optimal_time) : json(nullptr);
  json events = json::array();
  for (const TraceEvent& e : trace.events) {
    const SwaAutomaton& a = sys.automata().at(e.automaton);
    const Transition& t = a.transitions.at(e.transition);
    json ev{{"time", rational_to_json(e.time)},
            {"automaton", a.name},
            {"transition", e.transition},
            {"label", a.locations[t.source].name + " -> " + a.locations[t.target].name}};
    if (e.partner) {
      ev["partner"] = {{"automaton", sys.automata().at(e.partner->first).name}, {"transition", e.partner->second}};
    }
    if (e.channel && e.channel->op != ChannelOp::None) {
      ev["channel"] = {{"op", e.channel->op == ChannelOp::Push ? "push" : "pop"},
                       {"section", channel_name(sys, e.channel->channel)},
                       {"car", sys.traffic().cars().at(static_cast<std::size_t>(e.channel->symbol)).index}};
    }
    events.push_back(std::move(ev));
  }
  doc["events"] = std::move(events);
  return doc;
}

Trace trace_from_json(const SwaSystem& sys, const json& doc) {
  try {
    if (doc.value("format", std::string{}) != "tsynth-trace") throw TraceFormatError("not a trace document");
    if (doc.at("version").get<int>() != kTraceFormatVersion) {
      throw TraceFormatError("unsupported trace version " + doc.at("version").dump());
    }
    if (doc.contains("instance_hash") && doc.at("instance_hash").get<std::uint64_t>() != traffic_hash(sys.traffic())) {
      throw TraceFormatError("trace was produced for a different instance");
    }
    auto automaton_index = [&](const json& name) {
      auto idx = sys.find_automaton(name.get<std::string>());
      if (!idx) throw TraceFormatError("unknown automaton " + name.dump());
      return *idx;
    };
    Trace trace;
    for (const auto& ev : doc.at("events")) {
      TraceEvent e;
      e.time = rational_from_json(ev.at("time"));
      e.automaton = automaton_index(ev.at("automaton"));
      e.transition = ev.at("transition").get<std::size_t>();
      if (ev.contains("partner")) {
        e.partner = std::make_pair(automaton_index(ev.at("partner").at("automaton")),
                                   ev.at("partner").at("transition").get<std::size_t>());
      }
      if (ev.contains("channel")) {
        const auto& ch = ev.at("channel");
        ChannelRecord r;
        const auto op = ch.at("op").get<std::string>();
        if (op != "push" && op != "pop") throw TraceFormatError("unknown channel op '" + op + "'");
        r.op = op == "push" ? ChannelOp::Push : ChannelOp::Pop;
        const auto section = ch.at("section").get<std::string>();
        bool found = false;
        for (ChannelIndex c = 0; c < sys.layout().channels().size(); ++c) {
          if (channel_name(sys, c) == section) {
            r.channel = c;
            found = true;
          }
        }
        if (!found) throw TraceFormatError("unknown channel " + section);
        const CarId car = ch.at("car").get<CarId>();
        if (!sys.traffic().has_car(car)) throw TraceFormatError("unknown car " + std::to_string(car));
        r.symbol = static_cast<int>(sys.traffic().car_slot(car));
        e.channel = r;
      } else {
        e.channel = ChannelRecord{};
      }
      trace.events.push_back(e);
    }
    return trace;
  } catch (const json::exception& e) {
    throw TraceFormatError(std::string("malformed trace: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw TraceFormatError(std::string("malformed trace: ") + e.what());
  }
}

void write_trace(const std::filesystem::path& file, const SwaSystem& sys, const Trace& trace,
                 std::optional<Rational> optimal_time) {
  std::ofstream out(file);
  if (!out) throw TraceFormatError("cannot write " + file.string());
  out << trace_to_json(sys, trace, optimal_time).dump(2) << '\n';
}

Trace read_trace(const std::filesystem::path& file, const SwaSystem& sys) {
  std::ifstream in(file);
  if (!in) throw TraceFormatError("cannot read " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw TraceFormatError(file.string() + ": " + e.what());
  }
  return trace_from_json(sys, doc);
}

std::uint64_t trace_hash(const SwaSystem& sys, const Trace& trace) {
  return fnv1a(trace_to_json(sys, trace).dump());
}

}  // namespace tsynth
