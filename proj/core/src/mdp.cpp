#include "tsynth/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tsynth {

MdpConfig MdpConfig::from_defaults(const Defaults& d) {
  MdpConfig c;
  c.max_speed = d.max_speed.to_double();
  c.epsilon = d.epsilon.to_double();
  c.episode_cap = d.episode_cap;
  c.reward_success = d.reward_success;
  c.reward_failure = d.reward_failure;
  c.speed_coeff = d.speed_coeff;
  c.distance_coeff = d.distance_coeff;
  c.clamp_factor = d.clamp_factor;
  return c;
}

const char* to_string(StepCause c) {
  switch (c) {
    case StepCause::None: return "none";
    case StepCause::Success: return "success";
    case StepCause::Collision: return "collision";
    case StepCause::OppositeDirection: return "opposite-direction";
  }
  return "?";
}

MdpModel::MdpModel(CarTraffic roster, MdpConfig config) : roster_(std::move(roster)), config_(config) {
  if (roster_.cars().size() > kMaxCars) throw EncodingError("at most 9 cars can be encoded");
  for (const Car& c : roster_.cars()) {
    std::vector<double> starts;
    for (const Rational& r : roster_.step_offsets(c.path)) starts.push_back(r.to_double());
    step_starts_.push_back(std::move(starts));
  }
}

std::array<double, 2> MdpModel::car_code(CarId car) const {
  const auto k = static_cast<int>(roster_.car_slot(car));
  return {static_cast<double>(k / 3 - 1), static_cast<double>(k % 3 - 1)};
}

double MdpModel::path_offset(const CarPosition<double>& p) const {
  return step_starts_[roster_.car_slot(p.car)][p.step] + p.relative;
}

MdpState MdpModel::encode(const DoubleSnapshot& w) const {
  MdpState s(state_size(), 0.0);
  std::vector<std::vector<const CarPosition<double>*>> by_section(roster_.sections().size());
  for (const auto& p : w.cars) {
    by_section.at(roster_.path_of(p.car).steps.at(p.step).section).push_back(&p);
  }
  for (std::size_t sec = 0; sec < by_section.size(); ++sec) {
    auto& list = by_section[sec];
    if (list.size() > kSlotsPerSection) {
      throw EncodingError("section " + roster_.section(sec).name() + " holds " + std::to_string(list.size()) +
                          " cars");
    }
    std::sort(list.begin(), list.end(), [](const auto* a, const auto* b) {
      if (a->relative != b->relative) return a->relative > b->relative;
      return a->car < b->car;
    });
    for (std::size_t j = 0; j < list.size(); ++j) {
      double* t = &s[(sec * kSlotsPerSection + j) * kTupleSize];
      const auto code = car_code(list[j]->car);
      t[0] = list[j]->relative;
      t[1] = list[j]->speed / config_.max_speed;
      t[2] = code[0];
      t[3] = code[1];
      t[4] = 1.0;
    }
  }
  return s;
}

DoubleSnapshot MdpModel::decode(const MdpState& s) const {
  if (s.size() != state_size()) {
    throw EncodingError("state has " + std::to_string(s.size()) + " entries, expected " +
                        std::to_string(state_size()));
  }
  DoubleSnapshot w;
  for (std::size_t sec = 0; sec < roster_.sections().size(); ++sec) {
    for (std::size_t j = 0; j < kSlotsPerSection; ++j) {
      const double* t = &s[(sec * kSlotsPerSection + j) * kTupleSize];
      if (t[4] == 0.0) continue;
      if (t[4] != 1.0) throw EncodingError("presence flag must be 0 or 1");
      const auto a = static_cast<int>(std::lround(t[2])) + 1;
      const auto b = static_cast<int>(std::lround(t[3])) + 1;
      const auto slot = static_cast<std::size_t>(3 * a + b);
      if (a < 0 || a > 2 || b < 0 || b > 2 || slot >= roster_.cars().size()) {
        throw EncodingError("unknown car identifier");
      }
      const Car& car = roster_.cars()[slot];
      const Path& path = roster_.path(car.path);
      auto it = std::find_if(path.steps.begin(), path.steps.end(),
                             [&](const DirectedSection& d) { return d.section == sec; });
      if (it == path.steps.end()) {
        throw EncodingError("car " + std::to_string(car.index) + " is not routed over " + roster_.section(sec).name());
      }
      CarPosition<double> p;
      p.car = car.index;
      p.step = static_cast<std::size_t>(it - path.steps.begin());
      p.relative = t[0];
      p.speed = t[1] * config_.max_speed;
      w.cars.push_back(p);
    }
  }
  std::sort(w.cars.begin(), w.cars.end(), [](const auto& x, const auto& y) { return x.car < y.car; });
  return w;
}

double MdpModel::clamped_min_gap(const DoubleSnapshot& w) const {
  const double clamp = config_.clamp_distance();
  double best = clamp;
  const auto& cars = w.cars;
  auto ordered = [&](const CarPosition<double>& a, const CarPosition<double>& b) {
    const DirectedSection da = roster_.path_of(a.car).steps[a.step];
    const Path& pb = roster_.path_of(b.car);
    const double la = roster_.section(da.section).length.to_double();
    if (b.step >= 1 && pb.steps[b.step - 1] == da) best = std::min(best, la - a.relative + b.relative);
    if (b.step + 1 < pb.steps.size()) {
      const DirectedSection next = pb.steps[b.step + 1];
      if (next.section == da.section && next.direction != da.direction) {
        best = std::min(best, la - a.relative + roster_.section(pb.steps[b.step].section).length.to_double() -
                                  b.relative);
      }
    }
  };
  for (std::size_t i = 0; i < cars.size(); ++i) {
    for (std::size_t j = i + 1; j < cars.size(); ++j) {
      const DirectedSection da = roster_.path_of(cars[i].car).steps[cars[i].step];
      const DirectedSection db = roster_.path_of(cars[j].car).steps[cars[j].step];
      if (da.section == db.section) {
        best = std::min(best, da.direction == db.direction ? std::abs(cars[i].relative - cars[j].relative) : 0.0);
        continue;
      }
      ordered(cars[i], cars[j]);
      ordered(cars[j], cars[i]);
    }
  }
  return std::max(best, 0.0);
}

double MdpModel::shaping_reward(const DoubleSnapshot& w) const {
  double mean = 0;
  for (const auto& p : w.cars) mean += p.speed;
  if (!w.cars.empty()) mean /= static_cast<double>(w.cars.size());
  return config_.speed_coeff * mean / config_.max_speed +
         config_.distance_coeff * clamped_min_gap(w) / config_.clamp_distance();
}

StepOutcome MdpModel::step(const MdpState& s, const MdpAction& a) const {
  if (a.size() != action_size()) {
    throw EncodingError("action has " + std::to_string(a.size()) + " entries, expected " +
                        std::to_string(action_size()));
  }
  const DoubleSnapshot w = decode(s);
  DoubleSnapshot next;
  for (const auto& p : w.cars) {
    const std::size_t slot = roster_.car_slot(p.car);
    const double offset = path_offset(p) + p.speed;
    double accel = a[slot];
    if (!std::isfinite(accel)) accel = 0.0;
    const double speed = std::clamp(p.speed + accel, 0.0, config_.max_speed);
    const Car& car = roster_.cars()[slot];
    if (offset >= car.goal_offset.to_double() - config_.tolerance) continue;
    if (auto placed = place_car<double>(roster_, p.car, offset, speed)) next.cars.push_back(*placed);
  }
  StepOutcome out;
  out.next = encode(next);
  if (next.cars.empty()) {
    out.reward = config_.reward_success;
    out.terminated = true;
    out.cause = StepCause::Success;
    return out;
  }
  auto violations = check_collision_rules(next, roster_, config_.tolerance);
  if (!violations.empty()) {
    const bool opposite = std::any_of(violations.begin(), violations.end(), [](const Violation& v) {
      return v.rule == CollisionRule::OppositeDirection;
    });
    out.reward = config_.reward_failure;
    out.terminated = true;
    out.cause = opposite ? StepCause::OppositeDirection : StepCause::Collision;
    return out;
  }
  out.reward = shaping_reward(next);
  return out;
}

DoubleSnapshot to_double_snapshot(const WorldSnapshot& w) {
  DoubleSnapshot out;
  for (const auto& p : w.cars) out.cars.push_back({p.car, p.step, p.relative.to_double(), p.speed.to_double()});
  return out;
}

double Episode::cumulative_reward() const {
  double total = 0;
  for (const auto& r : records) total += r.reward;
  return total;
}

bool shares_network(const CarTraffic& instance, const CarTraffic& roster) {
  const auto& a = instance.sections();
  const auto& b = roster.sections();
  if (a.size() != b.size() || instance.paths().size() != roster.paths().size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].begin != b[i].begin || a[i].end != b[i].end || a[i].length != b[i].length) return false;
  }
  for (std::size_t p = 0; p < instance.paths().size(); ++p) {
    if (instance.paths()[p].steps != roster.paths()[p].steps) return false;
  }
  for (const Car& c : instance.cars()) {
    if (!roster.has_car(c.index)) return false;
    const Car& r = roster.car(c.index);
    if (r.path != c.path || r.goal_offset != c.goal_offset) return false;
  }
  return true;
}

Episode plan_to_episode(const RefinedPlan& plan, const CarTraffic& instance, const MdpModel& model,
                        std::uint64_t seed) {
  if (!shares_network(instance, model.roster())) {
    throw PlanConversionError("instance does not use the MDP's network and car roster");
  }
  const std::int64_t length = completion_step(plan, instance);
  if (length < 0) throw PlanConversionError("plan does not bring every car to its goal");
  if (length > model.config().episode_cap) {
    throw PlanConversionError("plan needs " + std::to_string(length) + " steps, the episode cap is " +
                              std::to_string(model.config().episode_cap));
  }
  Episode e;
  e.seed = seed;
  e.source = EpisodeSource::SwaSmt;
  MdpState s = model.encode(to_double_snapshot(initial_snapshot(instance)));
  for (std::int64_t k = 0; k < length; ++k) {
    MdpAction a(model.action_size(), 0.0);
    for (std::size_t c = 0; c < instance.cars().size(); ++c) {
      if (k + 1 < plan.steps) {
        const auto& v = plan.speeds[c];
        a[model.roster().car_slot(instance.cars()[c].index)] =
            mpq_class(v[static_cast<std::size_t>(k) + 1] - v[static_cast<std::size_t>(k)]).get_d();
      }
    }
    StepOutcome out = model.step(s, a);
    if (out.terminated && out.cause != StepCause::Success) {
      throw PlanConversionError(std::string("episode ends in ") + to_string(out.cause) + " at step " +
                                std::to_string(k + 1));
    }
    if (out.terminated != (k + 1 == length)) {
      throw PlanConversionError(std::string(out.terminated ? "episode ends" : "episode still running") + " at step " +
                                std::to_string(k + 1) + " but the plan completes at " + std::to_string(length));
    }
    // The doubles must track the exact plan.
    for (const auto& p : model.decode(out.next).cars) {
      const std::size_t c = instance.car_slot(p.car);
      const double exact = plan.position(instance, c, k + 1).get_d();
      if (std::abs(model.path_offset(p) - exact) > 1e-6) {
        throw PlanConversionError("car " + std::to_string(p.car) + " drifts from the plan at step " +
                                  std::to_string(k + 1));
      }
    }
    e.records.push_back({s, a, out.reward, out.next, out.terminated, out.cause});
    s = out.next;
  }
  return e;
}

bool replays_exactly(const Episode& e, const MdpModel& model) {
  if (e.records.empty()) return true;
  MdpState s = e.records.front().state;
  for (const auto& r : e.records) {
    if (r.state != s) return false;
    StepOutcome out = model.step(s, r.action);
    if (out.next != r.next || out.reward != r.reward || out.terminated != r.terminated || out.cause != r.cause) {
      return false;
    }
    s = out.next;
  }
  return true;
}

Environment::Environment(const MdpModel& model, Defaults defaults) : model_(model), defaults_(std::move(defaults)) {}

const MdpState& Environment::reset(std::uint64_t seed) {
  RandomInstance inst = random_instance(seed, defaults_);
  reset_to(model_.encode(to_double_snapshot(inst.snapshot)));
  return state_;
}

void Environment::reset_to(MdpState s) {
  model_.decode(s);
  state_ = std::move(s);
  steps_ = 0;
  done_ = false;
}

Environment::Result Environment::step(const MdpAction& a) {
  if (done_) throw std::logic_error("episode is over; call reset");
  Result r;
  r.outcome = model_.step(state_, a);
  state_ = r.outcome.next;
  r.steps = ++steps_;
  if (r.outcome.terminated) {
    done_ = true;
  } else if (steps_ >= model_.config().episode_cap) {
    r.truncated = true;
    done_ = true;
  }
  return r;
}

}  // namespace tsynth
