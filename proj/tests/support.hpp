#pragma once

#include <cmath>
#include <random>

#include <json.hpp>

#include "hoi/geometry.hpp"

namespace hoi::test {

inline Vec3 random_vec(std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  return Vec3(u(rng), u(rng), u(rng));
}

inline Rot3d random_rot(std::mt19937_64& rng, double max_angle = 3.0) {
  std::uniform_real_distribution<double> a(0, max_angle);
  Vec3 axis = random_vec(rng);
  while (axis.norm() < 1e-3) axis = random_vec(rng);
  return Rot3d::from_axis_angle(axis, a(rng));
}

inline Posed random_pose(std::mt19937_64& rng, double max_angle = 3.0, double max_t = 2.0) {
  return Posed(random_rot(rng, max_angle), random_vec(rng, -max_t, max_t));
}

inline double pose_error_angle(const Posed& a, const Posed& b) { return rotation_distance(a.rotation(), b.rotation()); }
inline double pose_error_translation(const Posed& a, const Posed& b) {
  return (a.translation() - b.translation()).norm();
}

// Structural equality with numbers compared to an absolute tolerance.
inline bool json_near(const nlohmann::json& a, const nlohmann::json& b, double tol) {
  if (a.is_number() && b.is_number()) return std::abs(a.get<double>() - b.get<double>()) <= tol;
  if (a.type() != b.type() || a.size() != b.size()) return false;
  if (a.is_array()) {
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!json_near(a[i], b[i], tol)) return false;
    return true;
  }
  if (a.is_object()) {
    for (auto it = a.begin(); it != a.end(); ++it)
      if (!b.contains(it.key()) || !json_near(it.value(), b[it.key()], tol)) return false;
    return true;
  }
  return a == b;
}

}  // namespace hoi::test
