#pragma once

#include <nlohmann/json.hpp>

#include "mixforge/forest.hpp"

namespace mixforge {

nlohmann::json forest_to_json_value(const ForestModel& m);
ForestModel forest_from_json_value(const nlohmann::json& j);

}  // namespace mixforge
