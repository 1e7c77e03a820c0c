#pragma once

// Compositional volume rendering of the human, object and scene fields.
//
// Each component contributes stratified samples inside its world-space box;
// the merged, depth-sorted list is alpha-composited with a Laplace-CDF
// density derived from each sample's signed distance.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "hoi/image_io.hpp"
#include "hoi/parallel.hpp"
#include "hoi/skeleton.hpp"
#include "hoi/trajectory.hpp"

namespace hoi {

enum class Component : int { Human = 0, Object = 1, Scene = 2 };
inline constexpr int kNumComponents = 3;
const char* component_name(Component c);

struct Ray {
  Vec3 origin;
  Vec3 dir;  ///< unit length
};

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  bool empty() const { return (lo.array() > hi.array()).any(); }
  void expand(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void pad(double r) {
    lo.array() -= r;
    hi.array() += r;
  }
  bool contains(const Vec3& p) const { return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all(); }
  /// Parametric [t0, t1] of the ray inside the box, clipped below at `near`.
  std::optional<std::pair<double, double>> intersect(const Ray& r, double near = 0.0) const;
};

/// Pinhole camera; pose is camera-to-world with x right, y down, z forward.
struct Camera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Posed cam_to_world;

  void validate() const;
  /// Ray through the center of pixel (px, py).
  Ray ray(int px, int py) const;
  /// Pixel coordinates of a world point, nullopt behind the camera.
  std::optional<Eigen::Vector2d> project(const Vec3& x_world) const;
  /// Same intrinsics, new extrinsic (world-to-camera).
  Camera with_extrinsic(const Posed& world_to_cam) const;
};

/// Per-channel albedo grids sharing one lattice, queried with clamping.
struct AlbedoGrid {
  std::array<SdfGrid, 3> channel;

  Vec3 at(const Vec3& x) const;
  static AlbedoGrid constant(const Vec3& lo, const Vec3& hi, double spacing, const Vec3& rgb);
};

struct HumanComponent {
  Skeleton skeleton;  ///< carries the canonical human grid
  HumanMotion motion;
  AlbedoGrid albedo;
};

struct ObjectComponent {
  SdfGrid sdf;  ///< canonical object frame
  ObjectMotion motion;
  AlbedoGrid albedo;
};

struct SceneComponent {
  SdfGrid sdf;  ///< world frame
  AlbedoGrid albedo;
};

struct ComponentSet {
  std::optional<HumanComponent> human;
  std::optional<ObjectComponent> object;
  std::optional<SceneComponent> scene;

  const SdfGrid* grid(Component c) const;
  const AlbedoGrid* albedo(Component c) const;
};

/// A component field evaluated at one world point.
struct FieldPoint {
  bool valid = false;  ///< false for human points whose inverse warp failed
  Vec3 x_canonical = Vec3::Zero();
  double sdf = 0;
  Vec3 grad_canonical = Vec3::Zero();
  Mat3 grad_to_world = Mat3::Identity();  ///< world gradient = grad_to_world * grad_canonical
  Vec3 color = Vec3::Zero();
};

/// All components posed at one frame.
class FrameView {
 public:
  FrameView(const ComponentSet& components, int frame, double box_pad = 0.02);

  const ComponentSet& components() const { return *cs_; }
  int frame() const { return frame_; }
  const std::array<std::optional<Aabb>, kNumComponents>& boxes() const { return boxes_; }
  const PosedSkeleton* human() const { return human_ ? &*human_ : nullptr; }
  const Posed& object_pose() const { return object_pose_; }

  FieldPoint eval(Component c, const Vec3& x_world) const;

 private:
  const ComponentSet* cs_;
  int frame_;
  std::array<std::optional<Aabb>, kNumComponents> boxes_;
  std::optional<PosedSkeleton> human_;
  Posed object_pose_;
  Posed object_inverse_;
};

struct RaySampleT {
  double t = 0;
  Component component = Component::Scene;
};

/// Stratified samples per intersected box, merged and sorted by depth (ties
/// broken by component id). `key` seeds the per-sample jitter.
std::vector<RaySampleT> sample_ray(const std::array<std::optional<Aabb>, kNumComponents>& boxes, const Ray& ray,
                                   int n_per_component, std::uint64_t key, double near = 0.0);

/// Laplace-CDF density: (1/beta) * Psi_beta(-sdf).
double sdf_to_density(double sdf, double beta);
/// d density / d sdf.
double sdf_to_density_derivative(double sdf, double beta);

/// A sample's normal is its world SDF gradient divided by max(|gradient|,
/// kNormalFloor): unit length for a distance field, and bounded sensitivity
/// where the field is flat (medial axes, smoothed grids).
inline constexpr double kNormalFloor = 0.5;

struct ShadedSample {
  double t = 0;
  int component = 0;
  double sigma = 0;
  Vec3 color = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

struct CompositeConfig {
  Vec3 background = Vec3::Ones();
  /// Upper bound on a sample's interval, and the interval of the last sample.
  double far_cap = 0.1;
};

struct CompositeResult {
  Vec3 color = Vec3::Zero();
  double depth = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();
  Vec3 blended_normal = Vec3::Zero();  ///< before normalization
  double acc = 0;
  std::array<double, kNumComponents> weight{};
  int mask = -1;  ///< component id, or -1 when acc <= 0.5
  std::vector<double> delta, alpha, tau;
};

/// Throws UnsortedSamples when t decreases.
CompositeResult composite(std::span<const ShadedSample> samples, const CompositeConfig& cfg);

/// Loss gradients with respect to the composite outputs.
struct CompositeGrad {
  Vec3 color = Vec3::Zero();
  double depth = 0;
  Vec3 normal = Vec3::Zero();
  std::array<double, kNumComponents> weight{};
};

struct ShadedSampleGrad {
  double sigma = 0;
  Vec3 color = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

std::vector<ShadedSampleGrad> composite_backward(std::span<const ShadedSample> samples, const CompositeResult& fwd,
                                                 const CompositeGrad& grad, const CompositeConfig& cfg);

struct RenderConfig {
  int samples_per_component = 64;
  double beta = 0;  ///< 0: twice each component's grid spacing
  CompositeConfig composite;
  double near = 0.01;
  double box_pad = 0.02;
  std::uint64_t seed = 0;
  int threads = 1;

  double beta_for(const ComponentSet& cs, Component c) const;
};

/// One sample as seen by the renderer, kept for the backward pass.
struct TracedSample {
  double t = 0;
  Component component = Component::Scene;
  Vec3 x_world = Vec3::Zero();
  FieldPoint field;
  double beta = 0;
};

struct RayTrace {
  std::vector<TracedSample> samples;
  std::vector<ShadedSample> shaded;
  CompositeResult result;
};

/// Shades and composites a given sample list (positions held fixed).
CompositeResult render_samples(const FrameView& view, const Ray& ray, std::span<const RaySampleT> samples,
                               const RenderConfig& cfg, RayTrace* trace = nullptr);

/// Renders one ray; fills `trace` when given.
CompositeResult render_ray(const FrameView& view, const Ray& ray, const RenderConfig& cfg, std::uint64_t key,
                           RayTrace* trace = nullptr);

/// Jitter key of a pixel: independent of scheduling.
inline std::uint64_t pixel_key(std::uint64_t seed, int frame, int pixel) {
  return hash_key(seed, static_cast<std::uint64_t>(frame), static_cast<std::uint64_t>(pixel));
}

struct RenderBuffers {
  Image color;   ///< 3 channels in [0,1]
  Image depth;   ///< meters along the ray, +inf on miss
  Image normal;  ///< 3 channels, world frame
  Image acc;     ///< opacity in [0,1]
  std::vector<int> mask;  ///< component id or -1, row-major

  int width() const { return color.width; }
  int height() const { return color.height; }
  Image mask_image() const;  ///< color-coded mask for visualization
};

RenderBuffers render_image(const ComponentSet& components, const Camera& camera, int frame, const RenderConfig& cfg);

}  // namespace hoi
