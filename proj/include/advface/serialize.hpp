#pragma once

// JSON mappings for the toolkit's artifacts (nlohmann/json, found via ADL).

#include <filesystem>

#include "json.hpp"

#include "advface/detector.hpp"
#include "advface/distortions.hpp"
#include "advface/image.hpp"
#include "advface/mitigator.hpp"
#include "advface/synthface.hpp"

namespace advface {

void to_json(nlohmann::json& j, const Point& p);
void from_json(const nlohmann::json& j, Point& p);
void to_json(nlohmann::json& j, const Polygon& p);
void from_json(const nlohmann::json& j, Polygon& p);
void to_json(nlohmann::json& j, const LandmarkSet& lm);
void from_json(const nlohmann::json& j, LandmarkSet& lm);

/// {"kind":"xmsb","phi":[..],"seed":42}, {"kind":"grids","rho_grids":10,"seed":1},
/// {"kind":"ero","psi":6}, {"kind":"fhbo"}, {"kind":"beard"}. Missing fields take defaults.
void to_json(nlohmann::json& j, const DistortionSpec& spec);
void from_json(const nlohmann::json& j, DistortionSpec& spec);
void to_json(nlohmann::json& j, const DistortionRecord& rec);

void to_json(nlohmann::json& j, const DetectorModel& det);
void from_json(const nlohmann::json& j, DetectorModel& det);

void to_json(nlohmann::json& j, const SensitivityTable& t);
void from_json(const nlohmann::json& j, SensitivityTable& t);
void to_json(nlohmann::json& j, const MitigationPlan& plan);
void from_json(const nlohmann::json& j, MitigationPlan& plan);

nlohmann::json read_json(const std::filesystem::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace advface
