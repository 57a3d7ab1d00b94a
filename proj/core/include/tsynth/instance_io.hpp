#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "tsynth/traffic.hpp"

namespace tsynth {

inline constexpr int kInstanceFormatVersion = 1;

struct InstanceDocument {
  CarTraffic traffic;
  std::optional<std::uint64_t> seed;
};

// Rationals travel as JSON strings ("85/2", "-3", "0.25"); plain JSON
// integers are accepted on input.
nlohmann::json rational_to_json(const Rational& r);
Rational rational_from_json(const nlohmann::json& j);

nlohmann::json instance_to_json(const CarTraffic& traffic, std::optional<std::uint64_t> seed = std::nullopt);
InstanceDocument instance_from_json(const nlohmann::json& j);

void write_instance(const std::filesystem::path& file, const CarTraffic& traffic,
                    std::optional<std::uint64_t> seed = std::nullopt);
InstanceDocument read_instance(const std::filesystem::path& file);

// 64-bit FNV-1a of the canonical instance text; identifies a network in
// dataset headers.
std::uint64_t traffic_hash(const CarTraffic& traffic);
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace tsynth
