#include "hoi/io.hpp"

#include <fstream>
#include <iterator>
#include <sstream>

namespace hoi::io {

nlohmann::json pose_to_json(const Posed& p) {
  const Mat4 m = p.matrix();
  nlohmann::json arr = nlohmann::json::array();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) arr.push_back(m(r, c));
  return arr;
}

Posed pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 16) throw Error(ErrorCode::ParseError, "pose must be 16 numbers");
  Mat4 m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      const auto& v = j[r * 4 + c];
      if (!v.is_number()) throw Error(ErrorCode::ParseError, "pose entries must be numbers");
      m(r, c) = v.get<double>();
    }
  try {
    return Posed::from_matrix(m);
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

nlohmann::json vec3_to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, "expected 3-vector");
  try {
    return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

nlohmann::json rot_to_json(const Rot3d& r) {
  const auto& q = r.quaternion();
  return nlohmann::json::array({q.w(), q.x(), q.y(), q.z()});
}

Rot3d rot_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(ErrorCode::ParseError, "expected quaternion [w,x,y,z]");
  try {
    const Eigen::Quaterniond q(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>());
    if (!(q.norm() > 0.5)) throw Error(ErrorCode::ParseError, "quaternion not normalized");
    return Rot3d(q);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

std::string dump(const nlohmann::json& j) { return j.dump(1) + "\n"; }

void write_json(const std::filesystem::path& path, const nlohmann::json& j) { write_text(path, dump(j)); }

std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_bytes(const std::filesystem::path& path, const std::vector<char>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoFailure, "write failed: " + path.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, std::vector<char>(text.begin(), text.end()));
}

}  // namespace hoi::io
