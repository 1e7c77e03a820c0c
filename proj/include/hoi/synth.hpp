#pragma once

// Scripted ground-truth scenes: geometry, motion, cameras, apparent
// trajectories, rendered observations and planted defects.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoi/contact.hpp"
#include "hoi/render.hpp"

namespace hoi {

struct PoseKey {
  int frame = 0;
  Posed pose;
};

struct BodyKey {
  int frame = 0;
  BodyPose pose;
};

/// Piecewise linear translation, slerp rotation; held constant outside the keys.
Posed interpolate(const std::vector<PoseKey>& keys, double frame);
BodyPose interpolate(const std::vector<BodyKey>& keys, double frame);

struct BoxPrimitive {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Constant(0.1);
};

struct NoiseSpec {
  double sigma_t = 0;  ///< meters
  double sigma_r = 0;  ///< radians
};

/// Frames are inclusive ranges; an empty range is first > last.
struct DefectSpec {
  double hover_mm = 0;
  int hover_first = 0, hover_last = -1;
  double penetration_mm = 0;
  int penetration_first = 0, penetration_last = -1;
  double flicker_rate = 0;  ///< per-frame and per-vertex flip probability of predicted contacts
  NoiseSpec human_root;     ///< noise on the initial human root translation/rotation
};

struct SceneScript {
  std::string name = "scene";
  int frames = 120;
  std::uint64_t seed = 0;

  Vec3 room_lo = Vec3(-2, -2, 0), room_hi = Vec3(2, 2, 3);
  std::vector<BoxPrimitive> furniture;
  double scene_spacing = 0.1;
  double scene_pad = 0.2;  ///< grid extends past the walls
  Vec3 scene_color = Vec3::Constant(0.7);

  BoxPrimitive object;  ///< canonical frame
  double object_spacing = 0.01;
  Vec3 object_color = Vec3(0.2, 0.4, 0.9);
  std::vector<PoseKey> object_keys;

  std::vector<Bone> bones;
  int hand_bone = -1;
  double sigma_skin = 0.05;
  double human_spacing = 0.01;
  std::vector<double> clothing;  ///< extra GT radius per bone, meters
  Vec3 human_color = Vec3(0.9, 0.6, 0.5);
  std::vector<BodyKey> human_keys;
  double grasp_cone = 10.0 * M_PI / 180.0;  ///< contact vertices: hand tip cap within this angle
  int grasp_vertices = 16;

  double fx = 40, fy = 40, cx = 32, cy = 32;
  int width = 64, height = 64;
  std::vector<PoseKey> camera_keys;  ///< camera-to-world
  int render_every = 10;             ///< observation stride; 0 renders nothing
  int samples_per_component = 64;

  NoiseSpec scene_noise, object_noise;
  DefectSpec defects;

  void validate() const;
};

nlohmann::json to_json(const SceneScript& s);
SceneScript scene_script_from_json(const nlohmann::json& j);

/// The fixture: 4x4x3 m room with a cabinet, a 0.4x0.3x0.3 m box pushed 1 m
/// along x while at least one frame of motion separates the rest phases
/// (rest on 0..29 and 91..119), a 90 degree camera orbit, and a 3-link arm
/// pushing the box with its hand.
SceneScript standard_scene();

/// Relative paths of every artifact, resolved against the manifest's directory.
struct DatasetManifest {
  std::filesystem::path root;
  nlohmann::json doc;

  std::filesystem::path path(const std::string& group, const std::string& key) const;
  std::vector<int> rendered_frames() const;
};

/// Renders and writes everything; deterministic for a fixed script.
DatasetManifest generate(const SceneScript& script, const std::filesystem::path& out_dir, int threads = 1);

/// Parses the manifest and checks that every file exists.
DatasetManifest read_manifest(const std::filesystem::path& manifest_json);

struct Observation {
  int frame = 0;
  RenderBuffers buffers;
};

/// Everything a manifest references, parsed and cross-checked.
struct Dataset {
  DatasetManifest manifest;
  SceneScript script;
  Camera intrinsics;  ///< cam_to_world unset
  CameraTrajectory c_scn;      ///< as observed (noise applied)
  CameraTrajectory c_scn_gt;
  CameraTrajectory c_obj;      ///< apparent, as observed
  ObjectMotion p_obj_gt;
  Sim3d gauge_gt;
  SceneComponent scene;
  ObjectComponent object;      ///< GT motion
  HumanComponent human;        ///< GT skeleton and motion
  Skeleton human_proxy;        ///< capsule prior, no clothing
  HumanMotion human_init;      ///< GT motion with planted defects and noise
  ContactPointSet contact_points;
  ContactTimeline contacts_gt;
  ContactTimeline contacts_pred;
  std::vector<Observation> observations;

  Camera camera(int frame, bool ground_truth = false) const;
  ComponentSet gt_components() const;
};

/// Throws ParseError/IoFailure/FrameMismatch on any inconsistency.
Dataset load_dataset(const std::filesystem::path& manifest_json);

/// Writes render buffers as color.pfm, color.ppm, depth.pfm, normal.pfm, mask.pfm.
nlohmann::json write_buffers(const std::filesystem::path& dir, const std::string& stem, const RenderBuffers& b);
RenderBuffers read_buffers(const std::filesystem::path& dir, const nlohmann::json& entry);

/// Portable standard normal draw keyed by (seed, a, b).
double gaussian_from_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b);
/// Right-multiplied exp(eps) with eps ~ N(0, diag(sigma_r^2 I, sigma_t^2 I)).
Posed perturb(const Posed& p, const NoiseSpec& n, std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

}  // namespace hoi
