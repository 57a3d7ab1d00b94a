#pragma once

#include <string>

#include "tsynth/mdp.hpp"
#include "tsynth/refinement.hpp"

namespace tsynth {

// Plot-friendly CSV: one row per step (the initial state is step 0), one
// offset/speed column pair per roster car; absent cars leave both empty.
std::string render_episode_csv(const Episode& e, const MdpModel& model);

// Same layout for a refined plan: rows k = 0..N with exact positions printed
// as decimals; the speed column of the last row is empty.
std::string render_plan_csv(const RefinedPlan& plan, const CarTraffic& traffic);

}  // namespace tsynth
