#pragma once

// Small file and JSON helpers shared by the module serializers.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoi/geometry.hpp"

namespace hoi::io {

nlohmann::json pose_to_json(const Posed& p);  ///< 16 numbers, row-major 4x4
Posed pose_from_json(const nlohmann::json& j);

nlohmann::json vec3_to_json(const Vec3& v);
Vec3 vec3_from_json(const nlohmann::json& j);

nlohmann::json rot_to_json(const Rot3d& r);  ///< [w, x, y, z]
Rot3d rot_from_json(const nlohmann::json& j);

/// Throws IoFailure with the path in the message.
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
std::string dump(const nlohmann::json& j);

std::vector<char> read_bytes(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_text(const std::filesystem::path& path, const std::string& text);

/// Member lookup that throws ParseError instead of nlohmann exceptions.
inline const nlohmann::json& field(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  return j.at(key);
}

/// Field access that turns nlohmann exceptions into ParseError.
template <typename T>
T get(const nlohmann::json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  return get<T>(j, key);
}

}  // namespace hoi::io
