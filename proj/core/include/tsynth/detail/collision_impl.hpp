#pragma once

// Template bodies for traffic.hpp; included at its end.

#include <algorithm>
#include <cmath>

namespace tsynth {

// Arithmetic glue so snapshots can be checked with doubles (the MDP), exact
// 64-bit rationals (instances, stage 1) or arbitrary-precision rationals
// (refined plans).
template <class T>
struct ScalarTraits;

template <>
struct ScalarTraits<double> {
  static double from(const Rational& r) { return r.to_double(); }
  static double to_double(double v) { return v; }
};

template <>
struct ScalarTraits<Rational> {
  static Rational from(const Rational& r) { return r; }
  static double to_double(const Rational& v) { return v.to_double(); }
};

template <class T>
std::optional<CarPosition<T>> place_car(const CarTraffic& traffic, CarId car, const T& offset,
                                        const T& speed) {
  using S = ScalarTraits<T>;
  const Car& c = traffic.car(car);
  if (!(offset < S::from(c.goal_offset))) return std::nullopt;
  const Path& path = traffic.path(c.path);
  T start = S::from(Rational(0));
  for (std::size_t k = 0; k < path.steps.size(); ++k) {
    T end = start + S::from(traffic.section(path.steps[k].section).length);
    if (offset < end || k + 1 == path.steps.size()) {
      CarPosition<T> p;
      p.car = car;
      p.step = k;
      p.relative = offset - start;
      p.speed = speed;
      return p;
    }
    start = end;
  }
  return std::nullopt;
}

namespace detail {

// Exact comparison when no tolerance is requested.
template <class T>
bool below_epsilon(const T& gap, const T& eps, double tolerance) {
  if (tolerance == 0.0) return gap < eps;
  return ScalarTraits<T>::to_double(gap - eps) < -tolerance;
}

template <class T>
void check_ordered_pair(const CarPosition<T>& a, const CarPosition<T>& b, const CarTraffic& traffic,
                        double tolerance, std::vector<Violation>& out) {
  using S = ScalarTraits<T>;
  const T eps = S::from(traffic.epsilon());
  const DirectedSection da = traffic.path_of(a.car).steps.at(a.step);
  const Path& path_b = traffic.path_of(b.car);
  const std::size_t k = b.step;
  auto below = [&](const T& gap) { return below_epsilon<T>(gap, eps, tolerance); };

  // b ahead of a: a on s', b on the successor of s' along b's path.
  if (k >= 1) {
    const DirectedSection prev = path_b.steps[k - 1];
    if (prev.section == da.section && prev.direction == da.direction) {
      T gap = S::from(traffic.section(da.section).length) - a.relative + b.relative;
      if (below(gap)) out.push_back({CollisionRule::Neighbouring, a.car, b.car, S::to_double(gap)});
    }
  }
  // b approaching s' head-on from its predecessor while a drives on s'.
  if (k + 1 < path_b.steps.size()) {
    const DirectedSection next = path_b.steps[k + 1];
    if (next.section == da.section && next.direction != da.direction) {
      const DirectedSection db = path_b.steps[k];
      T gap = S::from(traffic.section(da.section).length) - a.relative +
              S::from(traffic.section(db.section).length) - b.relative;
      if (below(gap)) out.push_back({CollisionRule::Neighbouring, a.car, b.car, S::to_double(gap)});
    }
  }
}

}  // namespace detail

template <class T>
std::vector<Violation> check_collision_rules(const BasicWorldSnapshot<T>& world,
                                             const CarTraffic& traffic, double tolerance) {
  using S = ScalarTraits<T>;
  std::vector<Violation> out;
  const T eps = S::from(traffic.epsilon());
  const auto& cars = world.cars;
  for (std::size_t i = 0; i < cars.size(); ++i) {
    for (std::size_t j = i + 1; j < cars.size(); ++j) {
      const auto& a = cars[i];
      const auto& b = cars[j];
      const DirectedSection da = traffic.path_of(a.car).steps.at(a.step);
      const DirectedSection db = traffic.path_of(b.car).steps.at(b.step);
      CarId lo = std::min(a.car, b.car);
      CarId hi = std::max(a.car, b.car);
      if (da.section == db.section) {
        if (da.direction != db.direction) {
          out.push_back({CollisionRule::OppositeDirection, lo, hi, 0.0});
        } else {
          T gap = a.relative < b.relative ? b.relative - a.relative : a.relative - b.relative;
          if (detail::below_epsilon<T>(gap, eps, tolerance)) {
            out.push_back({CollisionRule::SameDirectedSection, lo, hi, S::to_double(gap)});
          }
        }
        continue;
      }
      detail::check_ordered_pair(a, b, traffic, tolerance, out);
      detail::check_ordered_pair(b, a, traffic, tolerance, out);
    }
  }
  for (auto& v : out) {
    if (v.first > v.second) std::swap(v.first, v.second);
  }
  return out;
}

}  // namespace tsynth
