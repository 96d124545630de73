#pragma once

#include <string>

#include <json.hpp>

#include "cfms/encompass.hpp"
#include "cfms/identify.hpp"
#include "cfms/marglik.hpp"

namespace cfms::report {

inline constexpr const char* kVersion = "0.1.0";

nlohmann::json to_json(const sampler::ChainConfig& config);
nlohmann::json to_json(const sampler::PriorSpec& prior);
nlohmann::json to_json(const marglik::RegularityThresholds& thresholds);
nlohmann::json to_json(const marglik::RegularityReport& report);
nlohmann::json to_json(const marglik::MarglikEstimate& estimate);
nlohmann::json to_json(const marglik::DimensionalitySelection& selection);
nlohmann::json to_json(const ident::IdentificationReport& report);
nlohmann::json to_json(const encompass::Type2Report& report);

// Deterministic pretty-printed JSON with a trailing newline.
void write_json_file(const nlohmann::json& j, const std::string& path);

}  // namespace cfms::report
