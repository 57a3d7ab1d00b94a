#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "tsynth/mdp.hpp"

namespace tsynth {

// Binary episode container; the byte layout is documented in
// docs/dataset-format.md.
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetIntegrityError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  std::uint32_t state_size = 0;
  std::uint32_t action_size = 0;
  std::uint64_t traffic_hash = 0;
  std::uint64_t episode_count = 0;
  std::uint64_t transition_count = 0;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Episode> episodes;
};

// Hash chaining record k of an episode to record k-1 (seeded by the
// episode's seed and initial state).
std::uint64_t record_chain_hash(std::uint64_t previous, const TransitionRecord& r);
std::uint64_t episode_chain_seed(const Episode& e);

void write_dataset(std::ostream& out, const std::vector<Episode>& episodes, const MdpModel& model);
Dataset read_dataset(std::istream& in);
void export_dataset(const std::filesystem::path& file, const std::vector<Episode>& episodes, const MdpModel& model);
Dataset import_dataset(const std::filesystem::path& file);

}  // namespace tsynth
