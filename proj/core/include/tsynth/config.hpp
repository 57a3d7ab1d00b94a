#pragma once

#include <cstdint>
#include <string>

#include "tsynth/rational.hpp"

namespace tsynth {

// Every numeric default that the model needs but that has no published value
// lives here. The CLI layers a JSON config file and then flags on top of it.
struct Defaults {
  // Road network and cars.
  Rational epsilon{5};                // security distance
  Rational nominal_speed{1};          // abstract driving speed, distance per time unit
  Rational section_length{30};
  Rational diagonal_length{85, 2};    // stands in for 30*sqrt(2)

  // Refinement.
  Rational max_speed{1};              // V
  Rational max_accel{1, 4};           // A
  Rational max_decel{1, 4};           // B
  std::int64_t timing_slack = 4;      // Delta, in steps
  std::int64_t horizon_cap = 85;      // largest N tried by the linear search

  // MDP.
  std::int64_t episode_cap = 85;
  double reward_success = 2000.0;
  double reward_failure = -100.0;
  double speed_coeff = 10.0;          // c_v * V
  double distance_coeff = 10.0;       // c_d * d_clamp
  double clamp_factor = 2.0;          // d_clamp = clamp_factor * epsilon

  // Random instances.
  double presence_probability = 0.8;
  std::int64_t position_grid = 4;     // positions are multiples of 1/position_grid
  std::int64_t speed_grid = 64;       // speeds are multiples of V/speed_grid

  // Stage-1 budget per instance.
  double solve_timeout_seconds = 900.0;
  std::uint64_t solve_node_cap = 0;   // 0 = unlimited
};

}  // namespace tsynth
