#include "tsynth/instance_io.hpp"

#include <fstream>
#include <map>
#include <set>

namespace tsynth {

using nlohmann::json;

json rational_to_json(const Rational& r) { return r.str(); }

Rational rational_from_json(const json& j) {
  if (j.is_string()) return Rational::parse(j.get<std::string>());
  if (j.is_number_integer()) return Rational(j.get<std::int64_t>());
  throw InstanceError("expected a rational, got " + j.dump());
}

json instance_to_json(const CarTraffic& traffic, std::optional<std::uint64_t> seed) {
  json doc;
  doc["format"] = "tsynth-instance";
  doc["version"] = kInstanceFormatVersion;
  std::set<std::string> node_set;
  json sections = json::array();
  for (const Section& s : traffic.sections()) {
    node_set.insert(s.begin);
    node_set.insert(s.end);
    sections.push_back({{"begin", s.begin}, {"end", s.end}, {"length", rational_to_json(s.length)}});
  }
  doc["nodes"] = std::vector<std::string>(node_set.begin(), node_set.end());
  doc["sections"] = std::move(sections);
  json paths = json::array();
  for (const Path& p : traffic.paths()) {
    std::vector<std::string> nodes{traffic.begin_node(p.steps.front())};
    for (const DirectedSection& d : p.steps) nodes.push_back(traffic.end_node(d));
    paths.push_back({{"name", p.name}, {"nodes", nodes}});
  }
  doc["paths"] = std::move(paths);
  json cars = json::array();
  for (const Car& c : traffic.cars()) {
    cars.push_back({{"index", c.index},
                    {"path", traffic.path(c.path).name},
                    {"initial_offset", rational_to_json(c.initial_offset)},
                    {"goal_offset", rational_to_json(c.goal_offset)},
                    {"initial_speed", rational_to_json(c.initial_speed)}});
  }
  doc["cars"] = std::move(cars);
  doc["epsilon"] = rational_to_json(traffic.epsilon());
  doc["nominal_speed"] = rational_to_json(traffic.nominal_speed());
  doc["seed"] = seed ? json(*seed) : json(nullptr);
  return doc;
}

InstanceDocument instance_from_json(const json& doc) {
  try {
    if (doc.value("format", std::string{}) != "tsynth-instance") throw InstanceError("not an instance document");
    if (doc.at("version").get<int>() != kInstanceFormatVersion) {
      throw InstanceError("unsupported instance version " + doc.at("version").dump());
    }
    std::set<std::string> nodes;
    for (const auto& n : doc.at("nodes")) nodes.insert(n.get<std::string>());

    std::vector<Section> sections;
    for (const auto& s : doc.at("sections")) {
      Section sec{s.at("begin").get<std::string>(), s.at("end").get<std::string>(),
                  rational_from_json(s.at("length"))};
      if (!nodes.contains(sec.begin) || !nodes.contains(sec.end)) {
        throw InstanceError("section " + sec.name() + " uses an undeclared node");
      }
      sections.push_back(std::move(sec));
    }

    std::vector<Path> paths;
    std::map<std::string, PathId> path_ids;
    for (const auto& p : doc.at("paths")) {
      Path path{p.at("name").get<std::string>(), {}};
      auto names = p.at("nodes").get<std::vector<std::string>>();
      if (names.size() < 2) throw InstanceError("path '" + path.name + "' needs at least two nodes");
      for (std::size_t k = 0; k + 1 < names.size(); ++k) {
        bool found = false;
        for (SectionId i = 0; i < sections.size() && !found; ++i) {
          if (sections[i].begin == names[k] && sections[i].end == names[k + 1]) {
            path.steps.push_back({i, Direction::Up});
            found = true;
          } else if (sections[i].end == names[k] && sections[i].begin == names[k + 1]) {
            path.steps.push_back({i, Direction::Down});
            found = true;
          }
        }
        if (!found) throw InstanceError("path '" + path.name + "': no section " + names[k] + "-" + names[k + 1]);
      }
      if (!path_ids.emplace(path.name, paths.size()).second) {
        throw InstanceError("duplicate path name '" + path.name + "'");
      }
      paths.push_back(std::move(path));
    }

    std::vector<Car> cars;
    for (const auto& c : doc.at("cars")) {
      auto name = c.at("path").get<std::string>();
      auto it = path_ids.find(name);
      if (it == path_ids.end()) throw InstanceError("car references unknown path '" + name + "'");
      Car car;
      car.index = c.at("index").get<int>();
      car.path = it->second;
      car.initial_offset = rational_from_json(c.at("initial_offset"));
      car.goal_offset = rational_from_json(c.at("goal_offset"));
      car.initial_speed = c.contains("initial_speed") ? rational_from_json(c.at("initial_speed")) : Rational(0);
      cars.push_back(car);
    }
    std::optional<std::uint64_t> seed;
    if (doc.contains("seed") && !doc.at("seed").is_null()) seed = doc.at("seed").get<std::uint64_t>();
    return InstanceDocument{CarTraffic(std::move(sections), std::move(paths), std::move(cars),
                                       rational_from_json(doc.at("epsilon")),
                                       rational_from_json(doc.at("nominal_speed"))),
                            seed};
  } catch (const json::exception& e) {
    throw InstanceError(std::string("malformed instance: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw InstanceError(std::string("malformed instance: ") + e.what());
  }
}

void write_instance(const std::filesystem::path& file, const CarTraffic& traffic, std::optional<std::uint64_t> seed) {
  std::ofstream out(file);
  if (!out) throw InstanceError("cannot write " + file.string());
  out << instance_to_json(traffic, seed).dump(2) << '\n';
}

InstanceDocument read_instance(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InstanceError("cannot read " + file.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw InstanceError(file.string() + ": " + e.what());
  }
  return instance_from_json(doc);
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t traffic_hash(const CarTraffic& traffic) { return fnv1a(instance_to_json(traffic).dump()); }

}  // namespace tsynth
