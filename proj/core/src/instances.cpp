#include <algorithm>
#include <random>

#include "tsynth/traffic.hpp"

namespace tsynth {
namespace {

struct NetworkBuilder {
  std::vector<Section> sections;

  DirectedSection step(const std::string& from, const std::string& to, Rational length) {
    for (SectionId i = 0; i < sections.size(); ++i) {
      const Section& s = sections[i];
      if (s.begin == from && s.end == to) return {i, Direction::Up};
      if (s.begin == to && s.end == from) return {i, Direction::Down};
    }
    sections.push_back({from, to, length});
    return {sections.size() - 1, Direction::Up};
  }
};

// Start node, then `start'` and `start''` two security distances apart, then
// the shared middle, then `goal'` and `goal''` before the final node.
Path make_path(NetworkBuilder& net, const std::string& name, const std::vector<std::string>& nodes,
               const std::vector<Rational>& middle_lengths, const Defaults& d) {
  const Rational two_eps = d.epsilon * Rational(2);
  const Rational rest = d.section_length - two_eps * Rational(2);
  const std::string& first = nodes.front();
  const std::string& last = nodes.back();
  Path p{name, {}};
  p.steps.push_back(net.step(first, first + "'", two_eps));
  p.steps.push_back(net.step(first + "'", first + "''", two_eps));
  p.steps.push_back(net.step(first + "''", nodes[1], rest));
  for (std::size_t k = 1; k + 2 < nodes.size(); ++k) {
    p.steps.push_back(net.step(nodes[k], nodes[k + 1], middle_lengths.at(k - 1)));
  }
  const std::string& before_goal = nodes[nodes.size() - 2];
  p.steps.push_back(net.step(before_goal, last + "'", rest));
  p.steps.push_back(net.step(last + "'", last + "''", two_eps));
  p.steps.push_back(net.step(last + "''", last, two_eps));
  return p;
}

}  // namespace

CarTraffic running_example(const Defaults& d) {
  if (!(d.epsilon * Rational(4) < d.section_length)) {
    throw InstanceError("running example needs 4*epsilon < section length");
  }
  const Rational l = d.section_length;
  const Rational diag = d.diagonal_length;
  NetworkBuilder net;
  std::vector<Path> paths;
  paths.push_back(make_path(net, "P0", {"n0", "n1", "n3", "n4", "n6", "n11"}, {l, diag, l}, d));
  paths.push_back(make_path(net, "P1", {"n2", "n1", "n3", "n5", "n8", "n10"}, {l, diag, l}, d));
  paths.push_back(make_path(net, "P2", {"n7", "n6", "n4", "n5", "n8", "n9"}, {l, l, l}, d));

  std::vector<Car> cars;
  CarId index = 1;
  for (PathId p = 0; p < paths.size(); ++p) {
    Rational total{0};
    for (const auto& s : paths[p].steps) total += net.sections[s.section].length;
    for (int k = 0; k < 3; ++k) {
      Rational lead = d.epsilon * Rational(2 * k);
      cars.push_back({index++, p, lead, total - d.epsilon * Rational(4) + lead, Rational(0)});
    }
  }
  return CarTraffic(std::move(net.sections), std::move(paths), std::move(cars), d.epsilon, d.nominal_speed);
}

RandomInstance random_instance(std::uint64_t seed, const Defaults& d) {
  const CarTraffic base = running_example(d);
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution present(d.presence_probability);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Car> chosen;
  for (const Car& c : base.cars()) {
    if (present(rng)) chosen.push_back(c);
  }

  for (;;) {
    std::vector<Car> cars = chosen;
    for (PathId p = 0; p < base.paths().size(); ++p) {
      const double span = (base.path_length(p) * Rational(2, 3)).to_double();
      std::vector<Rational> offsets;
      for (const Car& c : cars) {
        if (c.path != p) continue;
        double u = unit(rng) * span;
        auto grid = static_cast<std::int64_t>(u * static_cast<double>(d.position_grid));
        offsets.emplace_back(grid, d.position_grid);
      }
      // Rear positions go to lower indices so no car has to overtake to reach its goal.
      std::sort(offsets.begin(), offsets.end());
      std::size_t next = 0;
      for (Car& c : cars) {
        if (c.path == p) c.initial_offset = offsets[next++];
      }
    }
    for (Car& c : cars) {
      auto level = static_cast<std::int64_t>(std::llround(unit(rng) * static_cast<double>(d.speed_grid)));
      c.initial_speed = d.max_speed * Rational(level, d.speed_grid);
    }
    CarTraffic traffic = base.with_cars(cars);
    WorldSnapshot snapshot = initial_snapshot(traffic);
    if (check_collision_rules(snapshot, traffic).empty()) {
      return RandomInstance{std::move(traffic), std::move(snapshot), seed};
    }
  }
}

}  // namespace tsynth
