#pragma once

// Random tree-shaped networks with at most four sections and at most two
// cars, integer lengths and offsets, unit nominal speed.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "tsynth/traffic.hpp"

namespace oracle {

using tsynth::Car;
using tsynth::CarTraffic;
using tsynth::Path;
using tsynth::Rational;
using tsynth::Section;

inline std::vector<std::size_t> tree_route(const std::vector<std::size_t>& parent, std::size_t from,
                                           std::size_t to) {
  auto ancestors = [&](std::size_t n) {
    std::vector<std::size_t> out{n};
    while (n != 0) out.push_back(n = parent[n]);
    return out;
  };
  auto up = ancestors(from);
  auto down = ancestors(to);
  while (up.size() >= 2 && down.size() >= 2 && up[up.size() - 2] == down[down.size() - 2]) {
    up.pop_back();
    down.pop_back();
  }
  std::vector<std::size_t> route(up.begin(), up.end());
  for (auto it = down.rbegin() + 1; it != down.rend(); ++it) route.push_back(*it);
  return route;
}

inline CarTraffic small_instance(std::uint64_t seed, std::size_t max_cars = 2) {
  std::mt19937_64 rng(seed * 7919 + 17);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  for (;;) {
    const auto edges = static_cast<std::size_t>(pick(0, 5) == 0 ? 1 : pick(2, 4));
    std::vector<std::size_t> parent(edges + 1, 0);
    std::vector<Section> sections;
    for (std::size_t n = 1; n <= edges; ++n) {
      parent[n] = static_cast<std::size_t>(pick(0, static_cast<std::int64_t>(n) - 1));
      sections.push_back({"n" + std::to_string(parent[n]), "n" + std::to_string(n), Rational(pick(6, 16))});
    }
    const Rational eps(pick(2, 5));

    std::vector<Path> paths;
    std::vector<Car> cars;
    const auto car_count = pick(0, 7) == 0 ? std::size_t{1} : max_cars;
    bool shared_path = pick(0, 5) == 0;
    for (std::size_t i = 0; i < car_count; ++i) {
      if (!(shared_path && i > 0)) {
        std::size_t from = static_cast<std::size_t>(pick(0, static_cast<std::int64_t>(edges)));
        std::size_t to = from;
        while (to == from) to = static_cast<std::size_t>(pick(0, static_cast<std::int64_t>(edges)));
        auto route = tree_route(parent, from, to);
        Path p{"P" + std::to_string(paths.size()), {}};
        for (std::size_t k = 0; k + 1 < route.size(); ++k) {
          std::size_t a = route[k];
          std::size_t b = route[k + 1];
          if (parent[b] == a) {
            p.steps.push_back({b - 1, tsynth::Direction::Up});
          } else {
            p.steps.push_back({a - 1, tsynth::Direction::Down});
          }
        }
        paths.push_back(std::move(p));
      }
      const std::size_t path = paths.size() - 1;
      std::vector<std::int64_t> offsets{0};
      for (const auto& d : paths[path].steps) offsets.push_back(offsets.back() + sections[d.section].length.num());
      std::int64_t init = pick(0, 1) == 0 ? pick(0, offsets[1] - 1) : pick(0, offsets.back() - 1);
      // Half of the time, time the second car to reach the first shared
      // section about when the first car does.
      if (i == 1 && !shared_path && pick(0, 1) == 0) {
        const Path& first = paths[cars[0].path];
        std::int64_t start0 = 0;
        for (const auto& d0 : first.steps) {
          std::int64_t start1 = 0;
          bool found = false;
          for (const auto& d1 : paths[path].steps) {
            if (d1.section == d0.section) {
              found = true;
              break;
            }
            start1 += sections[d1.section].length.num();
          }
          if (found) {
            const std::int64_t lead = start0 - cars[0].initial_offset.num();
            if (lead >= 0) init = std::clamp<std::int64_t>(start1 - lead + pick(-eps.num(), eps.num()), 0, start1);
            break;
          }
          start0 += sections[d0.section].length.num();
        }
        if (init >= offsets.back()) init = offsets.back() - 1;
      }
      std::vector<std::int64_t> goals;
      for (std::int64_t o : offsets) {
        if (o > init) goals.push_back(o);
      }
      const std::int64_t goal = pick(0, 2) == 0 ? goals[static_cast<std::size_t>(
                                                      pick(0, static_cast<std::int64_t>(goals.size()) - 1))]
                                                : goals.back();
      cars.push_back({static_cast<int>(i + 1), path, Rational(init), Rational(goal), Rational(0)});
    }
    try {
      CarTraffic t(sections, paths, cars, eps, Rational(1));
      if (!tsynth::check_collision_rules(tsynth::initial_snapshot(t), t).empty()) continue;
      // Mostly keep instances where the two routes actually meet.
      if (car_count > 1 && !shared_path && t.intersections().empty() && pick(0, 5) != 0) continue;
      return t;
    } catch (const tsynth::InstanceError&) {
      continue;
    }
  }
}

}  // namespace oracle
