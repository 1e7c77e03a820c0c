#pragma once

// Articulated capsule proxy for the human, warped between canonical and
// world space by linear blend skinning.
//
// Each bone is a capsule along its local +x axis, from the bone origin to
// `length`. Forward kinematics:
//
//   W_0 = Root * Rest_0 * Rot(local_0)
//   W_b = W_parent * Rest_parent^-1 * Rest_b * Rot(local_b)
//
// and the skinning transform is T_b = W_b * Rest_b^-1, so the rest pose maps
// every point to itself.

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "hoi/sdf.hpp"

namespace hoi {

struct Bone {
  int parent = -1;  ///< -1 for the root (bone 0 only)
  Posed rest;       ///< bone-local to canonical
  double length = 0;
  double radius = 0;
};

struct BodyPose {
  Rot3d root_rotation;
  Vec3 root_translation = Vec3::Zero();
  std::vector<Rot3d> local;  ///< one per bone

  static BodyPose rest(std::size_t bones) { return BodyPose{Rot3d(), Vec3::Zero(), std::vector<Rot3d>(bones)}; }
  Posed root() const { return Posed(root_rotation, root_translation); }
};

class Skeleton {
 public:
  Skeleton(std::vector<Bone> bones, SdfGrid canonical_sdf, double sigma_skin = 0.05, int hand_bone = -1);

  /// Builds the skeleton and bakes its canonical grid from the capsule proxy.
  static Skeleton from_proxy(std::vector<Bone> bones, double spacing, double sigma_skin = 0.05, int hand_bone = -1);

  const std::vector<Bone>& bones() const { return bones_; }
  std::size_t size() const { return bones_.size(); }
  const SdfGrid& canonical_sdf() const { return canonical_sdf_; }
  void set_canonical_sdf(SdfGrid g) { canonical_sdf_ = std::move(g); }
  SdfGrid& mutable_canonical_sdf() { return canonical_sdf_; }
  const AnalyticSdf& capsule_proxy() const { return proxy_; }
  double sigma_skin() const { return sigma_skin_; }
  int hand_bone() const { return hand_bone_; }

  /// Canonical endpoints of a bone's axis segment.
  Vec3 bone_start(int b) const { return bones_[b].rest.translation(); }
  Vec3 bone_end(int b) const { return bones_[b].rest * Vec3(bones_[b].length, 0, 0); }

  /// Canonical bounding box of the proxy, padded.
  std::pair<Vec3, Vec3> proxy_bounds(double pad) const;

  /// Whether bone `b` is `ancestor` or one of its descendants.
  bool in_subtree(int b, int ancestor) const;

 private:
  std::vector<Bone> bones_;
  SdfGrid canonical_sdf_;
  AnalyticSdf proxy_;
  double sigma_skin_;
  int hand_bone_;
};

/// Normalized Gaussian weights over distances to the bone axis segments.
struct SkinWeights {
  std::vector<double> w;
  std::vector<Vec3> dw;  ///< d w_b / d x
};
SkinWeights skin_weights(const Skeleton& skel, const Vec3& x_canonical);

/// Skinning transforms T_b = W_b * Rest_b^-1.
std::vector<Posed> bone_transforms(const Skeleton& skel, const BodyPose& pose);
/// World transforms W_b.
std::vector<Posed> bone_world(const Skeleton& skel, const BodyPose& pose);

/// Number of pose parameters: root twist (6) plus a rotation vector per bone.
inline int pose_dof(const Skeleton& skel) { return 6 + 3 * static_cast<int>(skel.size()); }
using PoseJacobian = Eigen::Matrix<double, 3, Eigen::Dynamic>;

/// Applies a parameter step: Root <- exp(d_root) * Root, local_b <- local_b * exp(d_b).
BodyPose apply_pose_delta(const BodyPose& pose, const Eigen::VectorXd& delta);

/// A skeleton frozen at one pose, caching transforms for repeated warps.
class PosedSkeleton {
 public:
  PosedSkeleton(const Skeleton& skel, const BodyPose& pose);

  const Skeleton& skeleton() const { return *skel_; }
  const std::vector<Posed>& skinning() const { return skinning_; }

  Vec3 forward(const Vec3& x_canonical) const;
  /// d forward / d x_canonical.
  Mat3 jacobian(const Vec3& x_canonical) const;
  /// d forward / d pose parameters (see apply_pose_delta), 3 x pose_dof.
  PoseJacobian pose_jacobian(const Vec3& x_canonical) const;

  struct Inverse {
    Vec3 canonical;
    double sdf = 0;  ///< canonical-grid value at the solution
  };
  /// Multi-candidate Newton inversion; nullopt when no candidate converges.
  std::optional<Inverse> inverse(const Vec3& x_world, const SdfGrid& canonical, int max_iter = 20) const;
  std::optional<Inverse> inverse(const Vec3& x_world, int max_iter = 20) const {
    return inverse(x_world, skel_->canonical_sdf(), max_iter);
  }

  /// d x_canonical / d pose for an inverse-warped point held fixed in world.
  PoseJacobian inverse_pose_jacobian(const Vec3& x_canonical) const;

 private:
  const Skeleton* skel_;
  BodyPose pose_;
  std::vector<Posed> world_;
  std::vector<Posed> skinning_;
};

Vec3 lbs_forward(const Skeleton& skel, const BodyPose& pose, const Vec3& x_canonical);
std::optional<Vec3> lbs_inverse(const Skeleton& skel, const BodyPose& pose, const Vec3& x_world, int max_iter = 20);

/// Per-frame body poses.
struct HumanMotion {
  std::vector<int> index;
  std::vector<BodyPose> poses;
  const BodyPose& at(int frame) const;
};

// Skeleton file: {"bones": [{"parent", "rest": [16], "length", "radius"}],
// "sigma_skin", "hand_bone", "sdf": "<companion .sdfg path, relative>"}.
void write_skeleton(const std::filesystem::path& json_path, const Skeleton& skel);
Skeleton read_skeleton(const std::filesystem::path& json_path);

nlohmann::json to_json(const BodyPose& p);
BodyPose body_pose_from_json(const nlohmann::json& j, std::size_t bones);
nlohmann::json to_json(const HumanMotion& m);
HumanMotion human_motion_from_json(const nlohmann::json& j, std::size_t bones);

}  // namespace hoi
