#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsynth/config.hpp"
#include "tsynth/refinement.hpp"
#include "tsynth/traffic.hpp"

namespace tsynth {

inline constexpr std::size_t kSlotsPerSection = 6;
inline constexpr std::size_t kTupleSize = 5;  // position, speed / V, id pair, presence
inline constexpr std::size_t kMaxCars = 9;

struct EncodingError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct MdpConfig {
  double max_speed = 1.0;  // V
  double epsilon = 5.0;
  std::int64_t episode_cap = 85;
  double reward_success = 2000.0;
  double reward_failure = -100.0;
  double speed_coeff = 10.0;     // c_v * V
  double distance_coeff = 10.0;  // c_d * d_clamp
  double clamp_factor = 2.0;
  double tolerance = 1e-9;  // goal and safety comparisons on doubles

  double clamp_distance() const { return clamp_factor * epsilon; }
  // Largest reward a run can collect without the success bonus.
  double non_terminal_ceiling() const { return static_cast<double>(episode_cap) * (speed_coeff + distance_coeff); }

  static MdpConfig from_defaults(const Defaults& d);
};

using MdpState = std::vector<double>;
using MdpAction = std::vector<double>;
using DoubleSnapshot = BasicWorldSnapshot<double>;

enum class StepCause : std::uint8_t { None = 0, Success = 1, Collision = 2, OppositeDirection = 3 };
const char* to_string(StepCause c);

struct StepOutcome {
  MdpState next;
  double reward = 0;
  bool terminated = false;
  StepCause cause = StepCause::None;
};

// The MDP over a fixed network and car roster (the cars of `roster`; their
// offsets are irrelevant). Car k of the roster (by index order) owns action
// component k and the k-th point of {-1,0,1}^2.
class MdpModel {
 public:
  MdpModel(CarTraffic roster, MdpConfig config);

  const CarTraffic& roster() const { return roster_; }
  const MdpConfig& config() const { return config_; }
  std::size_t state_size() const { return roster_.sections().size() * kSlotsPerSection * kTupleSize; }
  std::size_t action_size() const { return roster_.cars().size(); }
  std::array<double, 2> car_code(CarId car) const;

  // Cars sorted by relative position (descending) inside each section.
  MdpState encode(const DoubleSnapshot& w) const;
  DoubleSnapshot decode(const MdpState& s) const;

  StepOutcome step(const MdpState& s, const MdpAction& a) const;
  // Per-step reward of a snapshot that is neither terminal nor in violation.
  double shaping_reward(const DoubleSnapshot& w) const;
  // Smallest gap between two cars related by the collision rules, clamped.
  double clamped_min_gap(const DoubleSnapshot& w) const;

  double path_offset(const CarPosition<double>& p) const;

 private:
  CarTraffic roster_;
  MdpConfig config_;
  std::vector<std::vector<double>> step_starts_;  // per roster slot
};

// The initial snapshot of an instance as doubles.
DoubleSnapshot to_double_snapshot(const WorldSnapshot& w);

enum class EpisodeSource : std::uint8_t { SwaSmt = 0, Policy = 1 };

struct TransitionRecord {
  MdpState state;
  MdpAction action;
  double reward = 0;
  MdpState next;
  bool terminated = false;
  StepCause cause = StepCause::None;
};

struct Episode {
  std::uint64_t seed = 0;
  EpisodeSource source = EpisodeSource::SwaSmt;
  std::vector<TransitionRecord> records;

  double cumulative_reward() const;
  bool successful() const { return !records.empty() && records.back().cause == StepCause::Success; }
};

struct PlanConversionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Same sections, paths and goals, with every car of `instance` in `roster`.
bool shares_network(const CarTraffic& instance, const CarTraffic& roster);

// Runs step from the instance's initial state with the plan's speed changes
// as actions until the success terminal. Throws if the run ends otherwise,
// drifts from the exact plan positions or exceeds the episode cap.
Episode plan_to_episode(const RefinedPlan& plan, const CarTraffic& instance, const MdpModel& model,
                        std::uint64_t seed = 0);

// Replays the episode's actions from its first state; true when every
// record is reproduced bit for bit.
bool replays_exactly(const Episode& e, const MdpModel& model);

// Stateful wrapper with the step counter and truncation at the episode cap.
class Environment {
 public:
  Environment(const MdpModel& model, Defaults defaults);

  const MdpState& reset(std::uint64_t seed);
  void reset_to(MdpState s);

  struct Result {
    StepOutcome outcome;
    bool truncated = false;
    std::int64_t steps = 0;
  };
  Result step(const MdpAction& a);

  const MdpState& state() const { return state_; }
  bool done() const { return done_; }
  std::int64_t steps() const { return steps_; }

 private:
  const MdpModel& model_;
  Defaults defaults_;
  MdpState state_;
  std::int64_t steps_ = 0;
  bool done_ = true;
};

}  // namespace tsynth
