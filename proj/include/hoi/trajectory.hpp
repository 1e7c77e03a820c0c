#pragma once

// Camera/object motion disentanglement.
//
// Two camera trajectories observe the same video: one reconstructed against
// the static scene (the real camera, SceneFrame) and one against the object
// as if it were static (the apparent motion, ObjectFrame). The latter lives
// in an arbitrary similarity gauge. Frames where the object is truly static
// agree with the scene trajectory up to that gauge; RANSAC finds them, Umeyama
// fixes the gauge, and the per-frame object pose is what remains:
//
//   P_obj^i = C_scn^i^-1 * (G . C_obj^i)
//
// All poses in a CameraTrajectory are world-to-camera extrinsics. `G . C`
// denotes apply_gauge(), i.e. re-expressing an extrinsic in the aligned frame.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoi/geometry.hpp"

namespace hoi {

enum class FrameTag { SceneFrame, ObjectFrame };

struct TimedPose {
  int index = 0;
  Posed pose;
};

/// Ordered per-frame extrinsics; indices strictly increasing, non-empty.
class CameraTrajectory {
 public:
  CameraTrajectory(FrameTag tag, std::vector<TimedPose> frames);

  FrameTag tag() const { return tag_; }
  const std::vector<TimedPose>& frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  std::vector<int> indices() const;
  const Posed* find(int index) const;

 private:
  FrameTag tag_;
  std::vector<TimedPose> frames_;
};

/// Object-to-world pose per frame.
class ObjectMotion {
 public:
  explicit ObjectMotion(std::vector<TimedPose> frames);

  const std::vector<TimedPose>& frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }
  std::vector<int> indices() const;
  const Posed* find(int index) const;
  /// Throws InvalidArgument when the frame is absent.
  const Posed& at(int index) const;

 private:
  std::vector<TimedPose> frames_;
};

struct RansacConfig {
  int iterations = 1000;
  int min_sample = 3;
  double center_threshold = 0.01;              ///< meters
  double angle_threshold = M_PI / 180.0;       ///< radians
  int min_inliers = 0;                         ///< 0: max(3, ceil(10% of frames))
  std::uint64_t seed = 0;
  int threads = 1;
  /// Also search the frames left over by the dominant consensus for further
  /// rest phases (object static again, but at a displaced pose).
  bool find_rest_phases = true;
  int max_rest_phases = 8;
};

struct FrameResidual {
  int index = 0;
  double angle = 0;     ///< radians
  double distance = 0;  ///< meters
};

struct RestPhase {
  Sim3d alignment;
  std::vector<int> frames;
};

struct StaticFrameReport {
  Sim3d alignment;                     ///< gauge fitted on the dominant consensus
  std::vector<int> inlier_frames;      ///< dominant consensus (object at its reference pose)
  std::vector<FrameResidual> per_frame_residual;  ///< every frame, under `alignment`
  std::vector<RestPhase> rest_phases;  ///< dominant phase first
  std::vector<int> static_frames;      ///< union of all rest phases, sorted
};

/// Residuals of one frame pair under a candidate gauge.
FrameResidual frame_residual(const Posed& obj_extrinsic, const Posed& scn_extrinsic, const Sim3d& gauge, int index = 0);

/// Throws FrameMismatch when index sets differ and NoConsensus when fewer
/// than min_inliers frames agree on any similarity.
StaticFrameReport detect_static_frames(const CameraTrajectory& c_obj, const CameraTrajectory& c_scn,
                                       const RansacConfig& cfg = {});

ObjectMotion disentangle(const CameraTrajectory& c_obj, const CameraTrajectory& c_scn, const Sim3d& align);

/// Inverse of disentangle: the apparent trajectory that a static-object
/// reconstruction would report, in the gauge `align`.
CameraTrajectory compose_apparent(const CameraTrajectory& c_scn, const ObjectMotion& p_obj, const Sim3d& align);

// JSON: {"frame_tag": "SceneFrame"|"ObjectFrame", "frames": [{"i": int, "T_world_cam": [16]}]}
nlohmann::json to_json(const CameraTrajectory& t);
CameraTrajectory trajectory_from_json(const nlohmann::json& j);
// JSON: {"frames": [{"i": int, "T_world_obj": [16]}]}
nlohmann::json to_json(const ObjectMotion& m);
ObjectMotion object_motion_from_json(const nlohmann::json& j);
// JSON: {"scale": s, "rotation": [w,x,y,z], "translation": [3]}
nlohmann::json to_json(const Sim3d& s);
Sim3d sim3_from_json(const nlohmann::json& j);

}  // namespace hoi
