#include "hoi/skeleton.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "hoi/io.hpp"

namespace hoi {

namespace {

AnalyticSdf build_proxy(const std::vector<Bone>& bones) {
  std::vector<AnalyticSdf> caps;
  caps.reserve(bones.size());
  for (const Bone& b : bones)
    caps.push_back(AnalyticSdf::transformed(b.rest, AnalyticSdf::capsule(Vec3::Zero(), Vec3(b.length, 0, 0), b.radius)));
  return AnalyticSdf::make_union(std::move(caps));
}

Vec3 closest_on_segment(const Vec3& a, const Vec3& b, const Vec3& x) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double h = len2 > 0 ? std::clamp((x - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return a + h * ab;
}

}  // namespace

Skeleton::Skeleton(std::vector<Bone> bones, SdfGrid canonical_sdf, double sigma_skin, int hand_bone)
    : bones_(std::move(bones)),
      canonical_sdf_(std::move(canonical_sdf)),
      proxy_(build_proxy(bones_)),
      sigma_skin_(sigma_skin),
      hand_bone_(hand_bone) {
  require(!bones_.empty(), ErrorCode::InvalidArgument, "skeleton needs at least one bone");
  require(bones_[0].parent == -1, ErrorCode::InvalidArgument, "bone 0 must be the root");
  for (std::size_t b = 1; b < bones_.size(); ++b)
    require(bones_[b].parent >= 0 && bones_[b].parent < static_cast<int>(b), ErrorCode::InvalidArgument,
            "bone parents must precede their children");
  for (const Bone& b : bones_)
    require(b.length > 0 && b.radius > 0, ErrorCode::InvalidArgument, "bone length and radius must be positive");
  require(sigma_skin > 0, ErrorCode::InvalidArgument, "sigma_skin must be positive");
  require(hand_bone >= -1 && hand_bone < static_cast<int>(bones_.size()), ErrorCode::InvalidArgument,
          "hand bone index out of range");
}

Skeleton Skeleton::from_proxy(std::vector<Bone> bones, double spacing, double sigma_skin, int hand_bone) {
  // Placeholder grid so the proxy can be built before baking.
  Skeleton s(std::move(bones), SdfGrid(Vec3::Zero(), Vec3::Ones(), {2, 2, 2}, std::vector<float>(8, 1.0f)),
             sigma_skin, hand_bone);
  const auto [lo, hi] = s.proxy_bounds(std::max(4 * spacing, 0.04));
  s.canonical_sdf_ = bake_box(s.proxy_, lo, hi, spacing);
  return s;
}

std::pair<Vec3, Vec3> Skeleton::proxy_bounds(double pad) const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int b = 0; b < static_cast<int>(bones_.size()); ++b) {
    const Vec3 r = Vec3::Constant(bones_[b].radius + pad);
    for (const Vec3& p : {bone_start(b), bone_end(b)}) {
      lo = lo.cwiseMin(p - r);
      hi = hi.cwiseMax(p + r);
    }
  }
  return {lo, hi};
}

bool Skeleton::in_subtree(int b, int ancestor) const {
  for (; b >= 0; b = bones_[b].parent)
    if (b == ancestor) return true;
  return false;
}

SkinWeights skin_weights(const Skeleton& skel, const Vec3& x) {
  const std::size_t n = skel.size();
  SkinWeights out{std::vector<double>(n), std::vector<Vec3>(n)};
  const double inv_s2 = 1.0 / (skel.sigma_skin() * skel.sigma_skin());
  std::vector<double> e(n);
  std::vector<Vec3> g(n);  // gradient of the exponent
  double emax = -std::numeric_limits<double>::infinity();
  for (std::size_t b = 0; b < n; ++b) {
    const Vec3 d = x - closest_on_segment(skel.bone_start(b), skel.bone_end(b), x);
    e[b] = -d.squaredNorm() * inv_s2;
    g[b] = -2.0 * inv_s2 * d;
    emax = std::max(emax, e[b]);
  }
  double z = 0;
  for (std::size_t b = 0; b < n; ++b) z += (out.w[b] = std::exp(e[b] - emax));
  Vec3 gbar = Vec3::Zero();
  for (std::size_t b = 0; b < n; ++b) {
    out.w[b] /= z;
    gbar += out.w[b] * g[b];
  }
  for (std::size_t b = 0; b < n; ++b) out.dw[b] = out.w[b] * (g[b] - gbar);
  return out;
}

std::vector<Posed> bone_world(const Skeleton& skel, const BodyPose& pose) {
  require(pose.local.size() == skel.size(), ErrorCode::DimensionMismatch, "body pose bone count mismatch");
  const auto& bones = skel.bones();
  std::vector<Posed> world(bones.size());
  for (std::size_t b = 0; b < bones.size(); ++b) {
    const Posed local(pose.local[b], Vec3::Zero());
    if (bones[b].parent < 0) {
      world[b] = pose.root() * bones[b].rest * local;
    } else {
      const auto p = static_cast<std::size_t>(bones[b].parent);
      world[b] = world[p] * bones[p].rest.inverse() * bones[b].rest * local;
    }
  }
  return world;
}

std::vector<Posed> bone_transforms(const Skeleton& skel, const BodyPose& pose) {
  std::vector<Posed> t = bone_world(skel, pose);
  for (std::size_t b = 0; b < t.size(); ++b) t[b] = t[b] * skel.bones()[b].rest.inverse();
  return t;
}

BodyPose apply_pose_delta(const BodyPose& pose, const Eigen::VectorXd& delta) {
  require(delta.size() == 6 + 3 * static_cast<Eigen::Index>(pose.local.size()), ErrorCode::DimensionMismatch,
          "pose delta size mismatch");
  BodyPose out = pose;
  const Posed root = Posed::exp(delta.head<6>()) * pose.root();
  out.root_rotation = root.rotation();
  out.root_translation = root.translation();
  for (std::size_t b = 0; b < pose.local.size(); ++b)
    out.local[b] = pose.local[b] * Rot3d::exp(delta.segment<3>(6 + 3 * static_cast<Eigen::Index>(b)));
  return out;
}

PosedSkeleton::PosedSkeleton(const Skeleton& skel, const BodyPose& pose)
    : skel_(&skel), pose_(pose), world_(bone_world(skel, pose)), skinning_(bone_transforms(skel, pose)) {}

Vec3 PosedSkeleton::forward(const Vec3& x) const {
  const SkinWeights sw = skin_weights(*skel_, x);
  Vec3 y = Vec3::Zero();
  for (std::size_t b = 0; b < skinning_.size(); ++b) y += sw.w[b] * (skinning_[b] * x);
  return y;
}

Mat3 PosedSkeleton::jacobian(const Vec3& x) const {
  const SkinWeights sw = skin_weights(*skel_, x);
  Mat3 j = Mat3::Zero();
  for (std::size_t b = 0; b < skinning_.size(); ++b)
    j += sw.w[b] * skinning_[b].rotation().matrix() + (skinning_[b] * x) * sw.dw[b].transpose();
  return j;
}

PoseJacobian PosedSkeleton::pose_jacobian(const Vec3& x) const {
  const SkinWeights sw = skin_weights(*skel_, x);
  const std::size_t n = skinning_.size();
  PoseJacobian jac = PoseJacobian::Zero(3, pose_dof(*skel_));
  std::vector<Vec3> y(n);
  Vec3 blended = Vec3::Zero();
  for (std::size_t b = 0; b < n; ++b) {
    y[b] = skinning_[b] * x;
    blended += sw.w[b] * y[b];
  }
  // Root: left world twist moves every blended point rigidly.
  jac.block<3, 3>(0, 0) = -hat(blended);
  jac.block<3, 3>(0, 3) = Mat3::Identity();
  // Joint j: rotation about the joint origin, world axis R_j * omega, moving
  // every bone in j's subtree.
  for (std::size_t j = 0; j < n; ++j) {
    const Vec3 c = world_[j].translation();
    const Mat3 r = world_[j].rotation().matrix();
    Vec3 moved = Vec3::Zero();
    for (std::size_t b = 0; b < n; ++b)
      if (skel_->in_subtree(static_cast<int>(b), static_cast<int>(j))) moved += sw.w[b] * (y[b] - c);
    jac.block<3, 3>(0, 6 + 3 * static_cast<Eigen::Index>(j)) = -hat(moved) * r;
  }
  return jac;
}

std::optional<PosedSkeleton::Inverse> PosedSkeleton::inverse(const Vec3& x_world, const SdfGrid& canonical,
                                                             int max_iter) const {
  std::optional<Inverse> best;
  std::vector<Vec3> seen;
  for (const Posed& t : skinning_) {
    Vec3 x = t.inverse() * x_world;
    bool ok = false;
    for (int it = 0; it < max_iter; ++it) {
      const Vec3 r = forward(x) - x_world;
      if (r.norm() < 1e-10) {
        ok = true;
        break;
      }
      const Eigen::PartialPivLU<Mat3> lu(jacobian(x));
      if (!(std::abs(lu.determinant()) > 1e-12)) break;
      Vec3 step = lu.solve(r);
      // Cap the step so a far-off seed cannot jump across the body.
      const double sn = step.norm();
      if (sn > 0.25) step *= 0.25 / sn;
      x -= step;
    }
    if (!ok && (forward(x) - x_world).norm() < 1e-8) ok = true;
    if (!ok) continue;
    bool dup = false;
    for (const Vec3& s : seen) dup = dup || (s - x).norm() < 1e-7;
    if (dup) continue;
    seen.push_back(x);
    const double v = canonical.query(x).value;
    if (!best || std::abs(v) < std::abs(best->sdf)) best = Inverse{x, v};
  }
  return best;
}

PoseJacobian PosedSkeleton::inverse_pose_jacobian(const Vec3& x) const {
  const Eigen::PartialPivLU<Mat3> lu(jacobian(x));
  return -lu.solve(pose_jacobian(x));
}

Vec3 lbs_forward(const Skeleton& skel, const BodyPose& pose, const Vec3& x) { return PosedSkeleton(skel, pose).forward(x); }

std::optional<Vec3> lbs_inverse(const Skeleton& skel, const BodyPose& pose, const Vec3& x_world, int max_iter) {
  const auto r = PosedSkeleton(skel, pose).inverse(x_world, max_iter);
  if (!r) return std::nullopt;
  return r->canonical;
}

const BodyPose& HumanMotion::at(int frame) const {
  const auto it = std::lower_bound(index.begin(), index.end(), frame);
  require(it != index.end() && *it == frame, ErrorCode::InvalidArgument,
          "no body pose for frame " + std::to_string(frame));
  return poses[static_cast<std::size_t>(it - index.begin())];
}

void write_skeleton(const std::filesystem::path& json_path, const Skeleton& skel) {
  nlohmann::json bones = nlohmann::json::array();
  for (const Bone& b : skel.bones())
    bones.push_back({{"parent", b.parent}, {"rest", io::pose_to_json(b.rest)}, {"length", b.length}, {"radius", b.radius}});
  const std::string grid_name = json_path.stem().string() + ".sdfg";
  io::write_json(json_path, {{"bones", bones},
                             {"sigma_skin", skel.sigma_skin()},
                             {"hand_bone", skel.hand_bone()},
                             {"sdf", grid_name}});
  write_grid(json_path.parent_path() / grid_name, skel.canonical_sdf());
}

Skeleton read_skeleton(const std::filesystem::path& json_path) {
  const nlohmann::json j = io::read_json(json_path);
  std::vector<Bone> bones;
  for (const auto& b : io::field(j, "bones")) {
    bones.push_back(Bone{io::get<int>(b, "parent"), io::pose_from_json(io::field(b, "rest")),
                         io::get<double>(b, "length"), io::get<double>(b, "radius")});
  }
  SdfGrid grid = read_grid(json_path.parent_path() / io::get<std::string>(j, "sdf"));
  try {
    return Skeleton(std::move(bones), std::move(grid), io::get<double>(j, "sigma_skin"),
                    io::get_or<int>(j, "hand_bone", -1));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, json_path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const BodyPose& p) {
  nlohmann::json local = nlohmann::json::array();
  for (const Rot3d& r : p.local) local.push_back(io::rot_to_json(r));
  return {{"root_rotation", io::rot_to_json(p.root_rotation)},
          {"root_translation", io::vec3_to_json(p.root_translation)},
          {"local", local}};
}

BodyPose body_pose_from_json(const nlohmann::json& j, std::size_t bones) {
  BodyPose p;
  p.root_rotation = io::rot_from_json(io::field(j, "root_rotation"));
  p.root_translation = io::vec3_from_json(io::field(j, "root_translation"));
  for (const auto& r : io::field(j, "local")) p.local.push_back(io::rot_from_json(r));
  require(p.local.size() == bones, ErrorCode::ParseError, "body pose has the wrong number of bones");
  return p;
}

nlohmann::json to_json(const HumanMotion& m) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t k = 0; k < m.index.size(); ++k) {
    nlohmann::json f = to_json(m.poses[k]);
    f["i"] = m.index[k];
    frames.push_back(f);
  }
  return {{"frames", frames}};
}

HumanMotion human_motion_from_json(const nlohmann::json& j, std::size_t bones) {
  HumanMotion m;
  for (const auto& f : io::field(j, "frames")) {
    m.index.push_back(io::get<int>(f, "i"));
    m.poses.push_back(body_pose_from_json(f, bones));
  }
  for (std::size_t k = 1; k < m.index.size(); ++k)
    require(m.index[k] > m.index[k - 1], ErrorCode::ParseError, "human motion frame indices must increase");
  return m;
}

}  // namespace hoi
