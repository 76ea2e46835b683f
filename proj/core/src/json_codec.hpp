#pragma once

// JSON conversions shared by the forest file format and protocol envelopes.

#include <json.hpp>

#include "fedransom/forest.hpp"

namespace fedransom::detail {

nlohmann::json forest_to_json(const Forest& forest);
/// Throws ForestFormatError (schema, version, structure).
Forest forest_from_json(const nlohmann::json& j);

}  // namespace fedransom::detail
