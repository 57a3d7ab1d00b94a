#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsynth/config.hpp"
#include "tsynth/rational.hpp"

namespace tsynth {

struct InstanceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using SectionId = std::size_t;
using PathId = std::size_t;
using CarId = int;

enum class Direction : std::uint8_t { Up, Down };

inline Direction opposite(Direction d) { return d == Direction::Up ? Direction::Down : Direction::Up; }
const char* to_string(Direction d);

struct Section {
  std::string begin;
  std::string end;
  Rational length;

  std::string name() const { return begin + "-" + end; }
};

struct DirectedSection {
  SectionId section = 0;
  Direction direction = Direction::Up;

  friend bool operator==(const DirectedSection&, const DirectedSection&) = default;
  friend auto operator<=>(const DirectedSection&, const DirectedSection&) = default;
};

struct Path {
  std::string name;
  std::vector<DirectedSection> steps;
};

struct Car {
  CarId index = 0;
  PathId path = 0;
  Rational initial_offset;
  Rational goal_offset;
  Rational initial_speed;
};

// Road network, named paths over it and the fleet. Immutable once built; the
// constructor rejects anything that breaks path chaining or car bounds.
class CarTraffic {
 public:
  CarTraffic(std::vector<Section> sections, std::vector<Path> paths, std::vector<Car> cars,
             Rational epsilon, Rational nominal_speed);

  const std::vector<Section>& sections() const { return sections_; }
  const std::vector<Path>& paths() const { return paths_; }
  const std::vector<Car>& cars() const { return cars_; }
  const Rational& epsilon() const { return epsilon_; }
  const Rational& nominal_speed() const { return nominal_speed_; }

  const Section& section(SectionId id) const { return sections_.at(id); }
  const Path& path(PathId id) const { return paths_.at(id); }
  const Car& car(CarId index) const;
  const Path& path_of(CarId index) const { return path(car(index).path); }
  bool has_car(CarId index) const;
  // Position of `index` in cars(); cars are kept sorted by index.
  std::size_t car_slot(CarId index) const;

  const std::string& begin_node(DirectedSection d) const;
  const std::string& end_node(DirectedSection d) const;
  std::string name(DirectedSection d) const;
  std::optional<SectionId> find_section(const std::string& a, const std::string& b) const;

  // Distance from the path start to the beginning of each step, plus the total
  // length as the last element.
  std::vector<Rational> step_offsets(PathId path) const;
  Rational path_length(PathId path) const;
  // Step containing `offset`, half-open [start, end); the final end is
  // attributed to the last step.
  std::size_t step_at(PathId path, const Rational& offset) const;

  // Directed sections occurring in at least one path that carries a car.
  std::set<DirectedSection> used_directed_sections() const;
  // Sections used (in any direction) by two or more distinct paths that carry
  // cars. Sorted by section id.
  std::vector<SectionId> intersections() const;
  bool is_intersection(SectionId s) const;
  // Successors and predecessors of `d` among the used directed sections.
  std::vector<DirectedSection> neighbours(DirectedSection d) const;

  CarTraffic with_cars(std::vector<Car> cars) const;

 private:
  std::vector<Section> sections_;
  std::vector<Path> paths_;
  std::vector<Car> cars_;
  Rational epsilon_;
  Rational nominal_speed_;
  std::vector<SectionId> intersections_;
};

// Position of one car inside the network at some instant.
template <class T>
struct CarPosition {
  CarId car = 0;
  std::size_t step = 0;  // index into the car's path
  T relative;            // distance travelled inside the directed section
  T speed;
};

template <class T>
struct BasicWorldSnapshot {
  std::vector<CarPosition<T>> cars;  // only cars that have not reached their goal
};

using WorldSnapshot = BasicWorldSnapshot<Rational>;

enum class CollisionRule : std::uint8_t { SameDirectedSection = 1, Neighbouring = 2, OppositeDirection = 3 };

struct Violation {
  CollisionRule rule;
  CarId first;
  CarId second;
  double gap;
};

// Snapshot of the initial configuration of `traffic` (cars at their initial
// offsets and speeds; cars already at their goal are omitted).
WorldSnapshot initial_snapshot(const CarTraffic& traffic);

// Places a car at path offset `offset`; nullopt once the goal is reached.
template <class T>
std::optional<CarPosition<T>> place_car(const CarTraffic& traffic, CarId car, const T& offset,
                                        const T& speed);

template <class T>
std::vector<Violation> check_collision_rules(const BasicWorldSnapshot<T>& world,
                                             const CarTraffic& traffic, double tolerance = 0.0);

// The three-path, nine-car network with dedicated initial and goal nodes.
CarTraffic running_example(const Defaults& defaults = {});

struct RandomInstance {
  CarTraffic traffic;
  WorldSnapshot snapshot;
  std::uint64_t seed;
};

// Each running-example car is present with the configured probability;
// positions are drawn in the first two thirds of the path and speeds in [0, V],
// resampling until the snapshot satisfies every collision rule.
RandomInstance random_instance(std::uint64_t seed, const Defaults& defaults = {});

}  // namespace tsynth

#include "tsynth/detail/collision_impl.hpp"
