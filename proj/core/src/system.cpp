#include "tsynth/system.hpp"

#include <algorithm>

namespace tsynth {

namespace {

struct Window {
  Rational lo{0};
  std::optional<Rational> hi;
  bool hi_strict = false;

  bool admits(const Rational& d) const { return !hi || d < *hi || (!hi_strict && d == *hi); }
};

void tighten_upper(Window& w, const Rational& bound, bool strict) {
  if (!w.hi || bound < *w.hi || (bound == *w.hi && strict)) {
    w.hi = bound;
    w.hi_strict = strict;
  }
}

// Delays d >= 0 for which `atom` holds once the clock advanced by d (rate 0 or 1).
bool restrict_window(Window& w, const ClockAtom& atom, const Rational& value, bool running) {
  if (!running) return satisfies(atom, value);
  const Rational gap = atom.constant - value;
  switch (atom.relation) {
    case Relation::Eq:
      if (gap < Rational(0)) return false;
      w.lo = max(w.lo, gap);
      tighten_upper(w, gap, false);
      break;
    case Relation::Le:
      if (gap < Rational(0)) return false;
      tighten_upper(w, gap, false);
      break;
    case Relation::Lt:
      if (gap <= Rational(0)) return false;
      tighten_upper(w, gap, true);
      break;
    case Relation::Ge:
      w.lo = max(w.lo, gap);
      break;
    case Relation::Gt:
      throw std::logic_error("strict lower bounds have no minimal enabling delay");
  }
  return w.admits(w.lo);
}

}  // namespace

SwaSystem::SwaSystem(CarTraffic traffic)
    : traffic_(std::move(traffic)), layout_(traffic_), car_count_(traffic_.cars().size()) {
  if (layout_.clocks().size() > 64) throw InstanceError("too many clocks for the stopwatch mask");
  for (const Car& c : traffic_.cars()) {
    automata_.push_back(build_car_automaton(c, traffic_));
    goal_progress_.push_back(c.goal_offset / traffic_.nominal_speed());
  }
  for (SectionId s : traffic_.intersections()) automata_.push_back(build_intersection_automaton(s, traffic_));

  std::size_t offset = 0;
  for (std::size_t c = 0; c < layout_.channels().size(); ++c) {
    channel_offset_.push_back(offset);
    offset += layout_.channel_capacity()[c];
  }
  if (offset > 255 || car_count_ > 255) throw InstanceError("traffic too large for byte-sized channels");

  initial_.clocks.assign(layout_.clocks().size(), Rational(0));
  for (const SwaAutomaton& a : automata_) {
    initial_.locations.push_back(static_cast<std::uint16_t>(a.initial));
    for (const auto& [clock, value] : a.initial_values) initial_.clocks[clock] = value;
  }
  initial_.channel_length.assign(layout_.channels().size(), 0);
  initial_.channel_data.assign(offset, 0);
}

std::optional<std::size_t> SwaSystem::find_automaton(const std::string& name) const {
  for (std::size_t i = 0; i < automata_.size(); ++i) {
    if (automata_[i].name == name) return i;
  }
  return std::nullopt;
}

bool SwaSystem::is_final(const SystemState& s) const {
  for (std::size_t i = 0; i < car_count_; ++i) {
    if (!automata_[i].locations[s.locations[i]].goal) return false;
  }
  return true;
}

std::uint64_t SwaSystem::stopped_mask(const SystemState& s) const {
  std::uint64_t mask = 0;
  for (std::size_t i = 0; i < automata_.size(); ++i) {
    for (ClockIndex c : automata_[i].locations[s.locations[i]].stopped) mask |= std::uint64_t{1} << c;
  }
  return mask;
}

bool SwaSystem::target_invariant_holds(const SystemState& s, const Move& m, std::uint64_t stopped) const {
  auto check = [&](std::size_t automaton, std::size_t transition, const Transition* other) {
    const Transition& t = automata_[automaton].transitions[transition];
    for (const ClockAtom& atom : automata_[automaton].locations[t.target].invariant.atoms) {
      std::optional<Rational> value;
      for (const Transition* tr : {&t, other}) {
        if (tr == nullptr) continue;
        for (const Reset& r : tr->resets) {
          if (r.clock == atom.clock) value = r.value;
        }
      }
      if (!value) value = (stopped >> atom.clock & 1U) ? s.clocks[atom.clock] : s.clocks[atom.clock] + m.delay;
      if (!satisfies(atom, *value)) return false;
    }
    return true;
  };
  const Transition* partner =
      m.partner >= 0 ? &automata_[static_cast<std::size_t>(m.partner)].transitions[m.partner_transition] : nullptr;
  const Transition* own = &automata_[m.automaton].transitions[m.transition];
  if (!check(m.automaton, m.transition, partner)) return false;
  return m.partner < 0 || check(static_cast<std::size_t>(m.partner), m.partner_transition, own);
}

std::vector<Move> SwaSystem::moves(const SystemState& s) const {
  const std::uint64_t stopped = stopped_mask(s);

  // Longest delay every current invariant tolerates.
  Window limit;
  for (std::size_t i = 0; i < automata_.size(); ++i) {
    for (const ClockAtom& atom : automata_[i].locations[s.locations[i]].invariant.atoms) {
      Window w;
      if (!restrict_window(w, atom, s.clocks[atom.clock], (stopped >> atom.clock & 1U) == 0)) return {};
      if (w.hi) tighten_upper(limit, *w.hi, w.hi_strict);
    }
  }

  auto window_of = [&](const Guard& g) {
    Window w;
    for (const ClockAtom& atom : g.atoms) {
      if (!restrict_window(w, atom, s.clocks[atom.clock], (stopped >> atom.clock & 1U) == 0)) {
        return std::optional<Window>{};
      }
    }
    return std::optional<Window>{w};
  };

  std::vector<Move> out;
  for (std::size_t i = 0; i < automata_.size(); ++i) {
    const SwaAutomaton& a = automata_[i];
    for (std::size_t ti : a.outgoing[s.locations[i]]) {
      const Transition& t = a.transitions[ti];
      if (t.sync && a.kind == AutomatonKind::Intersection) continue;
      if (t.channel_op == ChannelOp::Pop) {
        if (s.channel_length[t.channel] == 0 || s.channel_data[channel_offset_[t.channel]] != t.symbol) continue;
      } else if (t.channel_op == ChannelOp::Push) {
        if (s.channel_length[t.channel] >= channel_capacity(t.channel)) continue;
      }
      auto w = window_of(t.guard);
      if (!w) continue;

      auto emit = [&](const Window& win, std::int32_t partner, std::size_t pt) {
        if (!win.admits(win.lo) || !limit.admits(win.lo)) return;
        Move m{win.lo, static_cast<std::uint16_t>(i), static_cast<std::uint16_t>(ti), partner,
               static_cast<std::uint16_t>(pt)};
        if (target_invariant_holds(s, m, stopped)) out.push_back(m);
      };

      if (!t.sync) {
        emit(*w, -1, 0);
        continue;
      }
      const std::size_t p = car_count_ + *t.sync / car_count_;
      const SwaAutomaton& pa = automata_[p];
      for (std::size_t pt : pa.outgoing[s.locations[p]]) {
        const Transition& u = pa.transitions[pt];
        if (u.sync != t.sync) continue;
        auto pw = window_of(u.guard);
        if (!pw) continue;
        Window both = *w;
        both.lo = max(both.lo, pw->lo);
        if (pw->hi) tighten_upper(both, *pw->hi, pw->hi_strict);
        emit(both, static_cast<std::int32_t>(p), pt);
      }
    }
  }
  return out;
}

SystemState SwaSystem::apply(const SystemState& s, const Move& m) const {
  const std::uint64_t stopped = stopped_mask(s);
  SystemState n = s;
  if (m.delay != Rational(0)) {
    for (ClockIndex c = 0; c < n.clocks.size(); ++c) {
      if ((stopped >> c & 1U) == 0) n.clocks[c] += m.delay;
    }
  }
  auto fire = [&](std::size_t automaton, std::size_t transition) {
    const Transition& t = automata_[automaton].transitions[transition];
    const std::size_t off = channel_offset_[t.channel];
    if (t.channel_op == ChannelOp::Pop) {
      auto begin = n.channel_data.begin() + static_cast<std::ptrdiff_t>(off);
      std::rotate(begin, begin + 1, begin + n.channel_length[t.channel]);
      --n.channel_length[t.channel];
      n.channel_data[off + n.channel_length[t.channel]] = 0;
    } else if (t.channel_op == ChannelOp::Push) {
      n.channel_data[off + n.channel_length[t.channel]] = static_cast<std::uint8_t>(t.symbol);
      ++n.channel_length[t.channel];
    }
    for (const Reset& r : t.resets) n.clocks[r.clock] = r.value;
    n.locations[automaton] = static_cast<std::uint16_t>(t.target);
  };
  fire(m.automaton, m.transition);
  if (m.partner >= 0) fire(static_cast<std::size_t>(m.partner), m.partner_transition);
  return n;
}

std::optional<std::pair<SystemState, std::size_t>> SwaSystem::succ(const SystemState& s, std::size_t cursor) const {
  auto ms = moves(s);
  if (cursor >= ms.size()) return std::nullopt;
  return std::make_pair(apply(s, ms[cursor]), cursor + 1);
}

bool subsumes(const SystemState& a, const SystemState& b) {
  if (a.locations != b.locations || a.channel_length != b.channel_length || a.channel_data != b.channel_data) {
    return false;
  }
  if (a.clocks.size() != b.clocks.size()) return false;
  for (std::size_t c = 1; c < a.clocks.size(); ++c) {
    if (a.clocks[c] != b.clocks[c]) return false;
  }
  return a.clocks[0] >= b.clocks[0];
}

namespace {

void put_varint(std::string& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<char>((v & 0x7f) | 0x80));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
}

std::uint64_t zigzag(std::int64_t v) {
  return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

}  // namespace

std::string state_key(const SystemState& s) {
  std::string out;
  out.reserve(s.locations.size() + 3 * s.clocks.size() + s.channel_data.size());
  for (auto l : s.locations) put_varint(out, l);
  for (std::size_t c = 1; c < s.clocks.size(); ++c) {
    put_varint(out, zigzag(s.clocks[c].num()));
    put_varint(out, static_cast<std::uint64_t>(s.clocks[c].den()));
  }
  for (std::size_t c = 0; c < s.channel_length.size(); ++c) out.push_back(static_cast<char>(s.channel_length[c]));
  for (auto d : s.channel_data) out.push_back(static_cast<char>(d));
  return out;
}

}  // namespace tsynth
