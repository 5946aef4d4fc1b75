#pragma once

#include <stdexcept>
#include <string>

#include "json.hpp"
#include "ohda/geometry.hpp"

namespace ohda {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void to_json(json& j, const Vec3& v) { j = json::array({v.x, v.y, v.z}); }
inline void from_json(const json& j, Vec3& v) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("expected a 3-element array");
  v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}
inline void to_json(json& j, const Aabb& b) { j = json{{"center", b.center}, {"size", b.size}}; }
inline void from_json(const json& j, Aabb& b) {
  b.center = j.at("center").get<Vec3>();
  b.size = j.at("size").get<Vec3>();
}

/// Throws ConfigError naming the first key of `patch` that has no counterpart in
/// `reference`. Objects are checked recursively; arrays are taken as opaque values.
inline void reject_unknown_keys(const json& reference, const json& patch, const std::string& path = "") {
  if (!patch.is_object()) return;
  if (!reference.is_object()) throw ConfigError("config key '" + path + "' is not a section");
  for (const auto& [key, value] : patch.items()) {
    const std::string where = path.empty() ? key : path + "." + key;
    if (!reference.contains(key)) throw ConfigError("unknown config key '" + where + "'");
    if (value.is_object() && reference.at(key).is_object()) {
      reject_unknown_keys(reference.at(key), value, where);
    }
  }
}

/// Overlays `patch` on the serialized defaults of T and parses the result.
template <typename T>
T parse_with_defaults(const json& patch, const T& defaults = T{}) {
  json merged = defaults;
  reject_unknown_keys(merged, patch);
  merged.merge_patch(patch);
  try {
    return merged.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
}

}  // namespace ohda
