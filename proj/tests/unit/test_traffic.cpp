#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "tsynth/instance_io.hpp"
#include "tsynth/traffic.hpp"

using namespace tsynth;

namespace {

DirectedSection directed(const CarTraffic& t, const std::string& from, const std::string& to) {
  for (SectionId i = 0; i < t.sections().size(); ++i) {
    const Section& s = t.section(i);
    if (s.begin == from && s.end == to) return {i, Direction::Up};
    if (s.begin == to && s.end == from) return {i, Direction::Down};
  }
  throw std::runtime_error("no section " + from + "-" + to);
}

bool contains(const std::vector<DirectedSection>& v, DirectedSection d) {
  return std::find(v.begin(), v.end(), d) != v.end();
}

CarTraffic line(std::size_t sections, std::vector<Car> cars, int eps = 5) {
  std::vector<Section> s;
  Path p{"P", {}};
  for (std::size_t i = 0; i < sections; ++i) {
    s.push_back({"a" + std::to_string(i), "a" + std::to_string(i + 1), Rational(30)});
    p.steps.push_back({i, Direction::Up});
  }
  return CarTraffic(s, {p}, std::move(cars), Rational(eps), Rational(1));
}

}  // namespace

TEST(RunningExample, Shape) {
  CarTraffic t = running_example();
  EXPECT_EQ(t.cars().size(), 9u);
  EXPECT_EQ(t.paths().size(), 3u);
  EXPECT_EQ(t.sections().size(), 24u);
  for (const Path& p : t.paths()) {
    for (std::size_t k = 0; k + 1 < p.steps.size(); ++k) EXPECT_EQ(t.end_node(p.steps[k]), t.begin_node(p.steps[k + 1]));
  }
}

TEST(RunningExample, DiagonalAndOffsets) {
  CarTraffic t = running_example();
  EXPECT_EQ(t.section(directed(t, "n3", "n5").section).length, Rational(85, 2));
  EXPECT_EQ(t.section(directed(t, "n3", "n4").section).length, Rational(85, 2));
  EXPECT_EQ(t.section(directed(t, "n1", "n3").section).length, Rational(30));
  const Car& c2 = t.car(2);
  EXPECT_EQ(c2.initial_offset, t.epsilon() * Rational(2));
  EXPECT_EQ(t.begin_node(t.path(c2.path).steps.front()), "n0");
  EXPECT_EQ(c2.goal_offset, t.path_length(c2.path) - t.epsilon() * Rational(2));
}

TEST(RunningExample, Intersections) {
  CarTraffic t = running_example();
  std::set<std::string> names;
  for (SectionId s : t.intersections()) names.insert(t.section(s).name());
  EXPECT_EQ(names, (std::set<std::string>{"n1-n3", "n4-n6", "n5-n8"}));
}

TEST(Intersections, MatchBruteForceOverPathPairs) {
  CarTraffic t = running_example();
  std::set<SectionId> expected;
  for (PathId a = 0; a < t.paths().size(); ++a) {
    for (PathId b = a + 1; b < t.paths().size(); ++b) {
      for (const auto& da : t.path(a).steps) {
        for (const auto& db : t.path(b).steps) {
          if (da.section == db.section) expected.insert(da.section);
        }
      }
    }
  }
  auto got = t.intersections();
  EXPECT_EQ(std::set<SectionId>(got.begin(), got.end()), expected);
}

TEST(Intersections, OneCarHasNone) {
  CarTraffic t = line(3, {{1, 0, Rational(0), Rational(90), Rational(0)}});
  EXPECT_TRUE(t.intersections().empty());
}

TEST(Intersections, TwoIdenticalPathsShareEverySection) {
  std::vector<Section> s{{"a", "b", Rational(30)}, {"b", "c", Rational(30)}};
  Path p{"P", {{0, Direction::Up}, {1, Direction::Up}}};
  Path q{"Q", p.steps};
  CarTraffic t(s, {p, q},
               {{1, 0, Rational(0), Rational(60), Rational(0)}, {2, 1, Rational(10), Rational(60), Rational(0)}},
               Rational(5), Rational(1));
  EXPECT_EQ(t.intersections(), (std::vector<SectionId>{0, 1}));
}

TEST(Neighbours, ReversedAndForwardMeetAtSharedNode) {
  CarTraffic t = running_example();
  DirectedSection n6n4 = directed(t, "n6", "n4");
  ASSERT_EQ(n6n4.direction, Direction::Down);
  DirectedSection n4n5 = directed(t, "n4", "n5");
  DirectedSection n4n6 = directed(t, "n4", "n6");
  EXPECT_TRUE(contains(t.neighbours(n6n4), n4n5));
  EXPECT_FALSE(contains(t.neighbours(n4n6), n4n5));
}

TEST(Neighbours, SingleSectionHasNone) {
  CarTraffic t = line(1, {{1, 0, Rational(0), Rational(30), Rational(0)}});
  EXPECT_TRUE(t.neighbours({0, Direction::Up}).empty());
  EXPECT_THROW(t.neighbours({0, Direction::Down}), InstanceError);
}

TEST(Traffic, RejectsBrokenInput) {
  std::vector<Section> s{{"a", "b", Rational(30)}, {"c", "d", Rational(30)}};
  Path broken{"P", {{0, Direction::Up}, {1, Direction::Up}}};
  EXPECT_THROW(CarTraffic(s, {broken}, {}, Rational(5), Rational(1)), InstanceError);
  EXPECT_THROW(line(1, {{1, 0, Rational(20), Rational(10), Rational(0)}}), InstanceError);
  EXPECT_THROW(line(1, {{1, 0, Rational(0), Rational(31), Rational(0)}}), InstanceError);
  EXPECT_THROW(line(1, {{1, 0, Rational(0), Rational(30), Rational(0)}, {1, 0, Rational(5), Rational(30), Rational(0)}}),
               InstanceError);
}

TEST(CollisionRules, SameDirectedSectionGapEpsilonIsFine) {
  CarTraffic t = line(1, {{1, 0, Rational(0), Rational(30), Rational(0)}, {2, 0, Rational(5), Rational(30), Rational(0)}});
  EXPECT_TRUE(check_collision_rules(initial_snapshot(t), t).empty());
  CarTraffic closer = line(1, {{1, 0, Rational(0), Rational(30), Rational(0)}, {2, 0, Rational(4), Rational(30), Rational(0)}});
  auto v = check_collision_rules(initial_snapshot(closer), closer);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, CollisionRule::SameDirectedSection);
  EXPECT_DOUBLE_EQ(v[0].gap, 4.0);
}

TEST(CollisionRules, OppositeDirectionAlwaysViolates) {
  std::vector<Section> s{{"a", "b", Rational(100)}};
  Path up{"U", {{0, Direction::Up}}};
  Path down{"D", {{0, Direction::Down}}};
  CarTraffic t(s, {up, down},
               {{1, 0, Rational(0), Rational(100), Rational(0)}, {2, 1, Rational(0), Rational(100), Rational(0)}},
               Rational(5), Rational(1));
  auto v = check_collision_rules(initial_snapshot(t), t);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, CollisionRule::OppositeDirection);
}

TEST(CollisionRules, NeighbouringSectionsGapAcrossNode) {
  const Rational eps(5);
  CarTraffic t = line(2, {{1, 0, Rational(0), Rational(60), Rational(0)}, {2, 0, Rational(0), Rational(60), Rational(0)}});
  WorldSnapshot w;
  w.cars.push_back(*place_car<Rational>(t, 1, Rational(30) - eps / Rational(4), Rational(0)));
  w.cars.push_back(*place_car<Rational>(t, 2, Rational(30) + eps / Rational(4), Rational(0)));
  ASSERT_NE(w.cars[0].step, w.cars[1].step);
  auto v = check_collision_rules(w, t);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rule, CollisionRule::Neighbouring);
  EXPECT_DOUBLE_EQ(v[0].gap, 2.5);
}

TEST(CollisionRules, SymmetricUnderCarRenaming) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    CarTraffic t = random_instance(seed).traffic;
    // Push everyone onto the same spot in turn to get violations, then rename.
    std::vector<Car> cars = t.cars();
    for (Car& c : cars) c.initial_offset = Rational((c.index * 7) % 40);
    CarTraffic crowded = t.with_cars(cars);
    std::vector<Car> renamed = cars;
    for (Car& c : renamed) c.index = 100 - c.index;
    CarTraffic mirrored = t.with_cars(renamed);
    auto a = check_collision_rules(initial_snapshot(crowded), crowded);
    auto b = check_collision_rules(initial_snapshot(mirrored), mirrored);
    std::multiset<std::tuple<int, int, int, double>> sa;
    std::multiset<std::tuple<int, int, int, double>> sb;
    for (auto& x : a) sa.insert({static_cast<int>(x.rule), 100 - x.second, 100 - x.first, x.gap});
    for (auto& x : b) sb.insert({static_cast<int>(x.rule), x.first, x.second, x.gap});
    EXPECT_EQ(sa, sb) << "seed " << seed;
  }
}

TEST(RandomInstance, Deterministic) {
  auto a = random_instance(42);
  auto b = random_instance(42);
  EXPECT_EQ(instance_to_json(a.traffic), instance_to_json(b.traffic));
}

TEST(RandomInstance, SnapshotsAreSafeAndInsideTwoThirds) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    auto r = random_instance(seed);
    EXPECT_TRUE(check_collision_rules(r.snapshot, r.traffic).empty()) << seed;
    for (const Car& c : r.traffic.cars()) {
      EXPECT_LT(c.initial_offset, r.traffic.path_length(c.path) * Rational(2, 3));
      EXPECT_GE(c.initial_speed, Rational(0));
      EXPECT_LE(c.initial_speed, Defaults{}.max_speed);
    }
  }
}

TEST(RandomInstance, PresenceFraction) {
  std::size_t present = 0;
  const std::size_t runs = 10000;
  for (std::uint64_t seed = 0; seed < runs; ++seed) present += random_instance(seed).traffic.cars().size();
  double fraction = static_cast<double>(present) / static_cast<double>(9 * runs);
  EXPECT_NEAR(fraction, 0.80, 0.02);
}

TEST(InstanceIo, JsonRoundTrip) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto r = random_instance(seed);
    auto doc = instance_from_json(instance_to_json(r.traffic, seed));
    EXPECT_EQ(instance_to_json(doc.traffic, doc.seed), instance_to_json(r.traffic, seed));
    EXPECT_EQ(traffic_hash(doc.traffic), traffic_hash(r.traffic));
    EXPECT_EQ(doc.seed, seed);
  }
  EXPECT_THROW(instance_from_json(nlohmann::json{{"format", "nope"}}), std::exception);
}
