#include "tsynth/traffic.hpp"

#include <algorithm>
#include <map>

namespace tsynth {

const char* to_string(Direction d) { return d == Direction::Up ? "up" : "down"; }

CarTraffic::CarTraffic(std::vector<Section> sections, std::vector<Path> paths, std::vector<Car> cars,
                       Rational epsilon, Rational nominal_speed)
    : sections_(std::move(sections)),
      paths_(std::move(paths)),
      cars_(std::move(cars)),
      epsilon_(epsilon),
      nominal_speed_(nominal_speed) {
  if (!(epsilon_ > Rational(0))) throw InstanceError("security distance must be positive");
  if (!(nominal_speed_ > Rational(0))) throw InstanceError("nominal speed must be positive");
  for (const Section& s : sections_) {
    if (!(s.length > Rational(0))) throw InstanceError("section " + s.name() + " has non-positive length");
    if (s.begin == s.end) throw InstanceError("section " + s.name() + " is a loop");
  }
  for (const Path& p : paths_) {
    if (p.steps.empty()) throw InstanceError("path '" + p.name + "' is empty");
    std::set<SectionId> seen;
    for (std::size_t k = 0; k < p.steps.size(); ++k) {
      if (p.steps[k].section >= sections_.size()) {
        throw InstanceError("path '" + p.name + "' references an unknown section");
      }
      if (!seen.insert(p.steps[k].section).second) {
        throw InstanceError("path '" + p.name + "' visits section " + sections_[p.steps[k].section].name() +
                            " twice");
      }
      if (k > 0 && end_node(p.steps[k - 1]) != begin_node(p.steps[k])) {
        throw InstanceError("path '" + p.name + "': " + name(p.steps[k]) + " is not a successor of " +
                            name(p.steps[k - 1]));
      }
    }
  }
  std::sort(cars_.begin(), cars_.end(), [](const Car& a, const Car& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < cars_.size(); ++i) {
    const Car& c = cars_[i];
    if (i > 0 && cars_[i - 1].index == c.index) {
      throw InstanceError("duplicate car index " + std::to_string(c.index));
    }
    if (c.path >= paths_.size()) throw InstanceError("car " + std::to_string(c.index) + " has an unknown path");
    Rational total = path_length(c.path);
    if (c.initial_offset < Rational(0) || !(c.initial_offset < c.goal_offset) || total < c.goal_offset) {
      throw InstanceError("car " + std::to_string(c.index) + " needs 0 <= initial < goal <= path length");
    }
    if (c.initial_speed < Rational(0)) throw InstanceError("car " + std::to_string(c.index) + " has negative speed");
  }

  std::map<SectionId, std::set<PathId>> users;
  for (const Car& c : cars_) {
    for (const DirectedSection& d : paths_[c.path].steps) users[d.section].insert(c.path);
  }
  for (const auto& [s, ps] : users) {
    if (ps.size() >= 2) intersections_.push_back(s);
  }
}

const Car& CarTraffic::car(CarId index) const { return cars_.at(car_slot(index)); }

bool CarTraffic::has_car(CarId index) const {
  auto it = std::lower_bound(cars_.begin(), cars_.end(), index,
                             [](const Car& c, CarId i) { return c.index < i; });
  return it != cars_.end() && it->index == index;
}

std::size_t CarTraffic::car_slot(CarId index) const {
  auto it = std::lower_bound(cars_.begin(), cars_.end(), index,
                             [](const Car& c, CarId i) { return c.index < i; });
  if (it == cars_.end() || it->index != index) {
    throw InstanceError("unknown car " + std::to_string(index));
  }
  return static_cast<std::size_t>(it - cars_.begin());
}

const std::string& CarTraffic::begin_node(DirectedSection d) const {
  const Section& s = section(d.section);
  return d.direction == Direction::Up ? s.begin : s.end;
}

const std::string& CarTraffic::end_node(DirectedSection d) const {
  const Section& s = section(d.section);
  return d.direction == Direction::Up ? s.end : s.begin;
}

std::string CarTraffic::name(DirectedSection d) const { return begin_node(d) + "->" + end_node(d); }

std::optional<SectionId> CarTraffic::find_section(const std::string& a, const std::string& b) const {
  for (SectionId i = 0; i < sections_.size(); ++i) {
    const Section& s = sections_[i];
    if ((s.begin == a && s.end == b) || (s.begin == b && s.end == a)) return i;
  }
  return std::nullopt;
}

std::vector<Rational> CarTraffic::step_offsets(PathId p) const {
  const Path& path = paths_.at(p);
  std::vector<Rational> out;
  out.reserve(path.steps.size() + 1);
  Rational acc{0};
  for (const DirectedSection& d : path.steps) {
    out.push_back(acc);
    acc += sections_[d.section].length;
  }
  out.push_back(acc);
  return out;
}

Rational CarTraffic::path_length(PathId p) const { return step_offsets(p).back(); }

std::size_t CarTraffic::step_at(PathId p, const Rational& offset) const {
  auto offsets = step_offsets(p);
  for (std::size_t k = 0; k + 1 < offsets.size(); ++k) {
    if (offset < offsets[k + 1]) return k;
  }
  return offsets.size() - 2;
}

std::set<DirectedSection> CarTraffic::used_directed_sections() const {
  std::set<DirectedSection> out;
  for (const Car& c : cars_) {
    for (const DirectedSection& d : paths_[c.path].steps) out.insert(d);
  }
  return out;
}

std::vector<SectionId> CarTraffic::intersections() const { return intersections_; }

bool CarTraffic::is_intersection(SectionId s) const {
  return std::binary_search(intersections_.begin(), intersections_.end(), s);
}

std::vector<DirectedSection> CarTraffic::neighbours(DirectedSection d) const {
  auto used = used_directed_sections();
  if (!used.contains(d)) throw InstanceError("directed section " + name(d) + " is not on any path");
  std::vector<DirectedSection> out;
  for (const DirectedSection& o : used) {
    if (o == d) continue;
    if (begin_node(o) == end_node(d) || end_node(o) == begin_node(d)) out.push_back(o);
  }
  return out;
}

CarTraffic CarTraffic::with_cars(std::vector<Car> cars) const {
  return CarTraffic(sections_, paths_, std::move(cars), epsilon_, nominal_speed_);
}

WorldSnapshot initial_snapshot(const CarTraffic& traffic) {
  WorldSnapshot w;
  for (const Car& c : traffic.cars()) {
    if (auto p = place_car<Rational>(traffic, c.index, c.initial_offset, c.initial_speed)) w.cars.push_back(*p);
  }
  return w;
}

}  // namespace tsynth
