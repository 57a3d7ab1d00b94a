#include "tsynth/render.hpp"

#include <iomanip>
#include <sstream>

namespace tsynth {

namespace {

void number(std::ostream& out, double v) { out << std::setprecision(12) << v; }

void car_header(std::ostream& out, const CarTraffic& t) {
  for (const Car& c : t.cars()) out << ",car" << c.index << "_offset,car" << c.index << "_speed";
}

}  // namespace

std::string render_episode_csv(const Episode& e, const MdpModel& model) {
  const CarTraffic& roster = model.roster();
  std::ostringstream out;
  out << "step,reward,terminated,cause";
  car_header(out, roster);
  out << '\n';
  auto row = [&](std::size_t k, const MdpState& s, const TransitionRecord* r) {
    out << k << ',';
    if (r) {
      number(out, r->reward);
      out << ',' << (r->terminated ? 1 : 0) << ',' << to_string(r->cause);
    } else {
      out << ",0,none";
    }
    std::vector<const CarPosition<double>*> by_slot(roster.cars().size(), nullptr);
    const DoubleSnapshot w = model.decode(s);
    for (const auto& p : w.cars) by_slot[roster.car_slot(p.car)] = &p;
    for (const auto* p : by_slot) {
      out << ',';
      if (p) {
        number(out, model.path_offset(*p));
        out << ',';
        number(out, p->speed);
      } else {
        out << ',';
      }
    }
    out << '\n';
  };
  if (!e.records.empty()) row(0, e.records.front().state, nullptr);
  for (std::size_t k = 0; k < e.records.size(); ++k) row(k + 1, e.records[k].next, &e.records[k]);
  return out.str();
}

std::string render_plan_csv(const RefinedPlan& plan, const CarTraffic& traffic) {
  std::ostringstream out;
  out << "step";
  car_header(out, traffic);
  out << '\n';
  for (std::int64_t k = 0; k <= plan.steps; ++k) {
    out << k;
    for (std::size_t c = 0; c < traffic.cars().size(); ++c) {
      out << ',';
      number(out, plan.position(traffic, c, k).get_d());
      out << ',';
      if (k < plan.steps) number(out, plan.speeds[c][static_cast<std::size_t>(k)].get_d());
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace tsynth
