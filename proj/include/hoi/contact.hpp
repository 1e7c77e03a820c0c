#pragma once

// Physical plausibility terms and contact labeling.
//
// Contact points on the human are attracted to the object surface with a
// tanh-saturated penalty on positive object SDF values; any human point
// inside the object is pushed out by the mirrored penalty on negative values.
// Contact frames come from object motion, cleaned by a temporal filter.

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "hoi/skeleton.hpp"
#include "hoi/trajectory.hpp"

namespace hoi {

struct PhysParams {
  double alpha1 = 1.0, alpha2 = 0.01;  ///< contact
  double beta1 = 1.0, beta2 = 0.01;    ///< collision
  double gamma1 = 1.0, gamma2 = 0.01;  ///< body prior
  int sigma_win = 7;                   ///< frames, temporal probability window
  int margin = 10;                     ///< frames added on both sides of a contact run
  int min_span = 5;                    ///< runs shorter than this are flipped
  double wrist_band = 0.04;            ///< meters, hand-loss falloff band
  /// Contact points used per frame; 0 uses all of them.
  int contact_cap = 0;

  void validate() const;
};

struct ScalarLoss {
  double value = 0;
  double derivative = 0;  ///< d value / d xi
};

/// alpha1 * tanh(xi / alpha2)^2; meant for xi >= 0.
ScalarLoss contact_loss(double xi, const PhysParams& p);
/// beta1 * tanh(xi / beta2)^2; meant for xi < 0.
ScalarLoss collision_loss(double xi, const PhysParams& p);
/// Contact term for xi >= 0, collision term below.
ScalarLoss contact_point_loss(double xi, const PhysParams& p);

/// Canonical human surface points flagged as contact vertices.
struct ContactPointSet {
  std::vector<int> vertex_id;
  std::vector<Vec3> canonical;
  std::size_t size() const { return vertex_id.size(); }
};

enum class ContactLabel { NoContact, Contact };

struct VertexContact {
  int id = 0;
  double p = 0;      ///< filtered (or raw, before filtering) probability
  double raw_p = 0;  ///< as predicted
};

struct ContactFrame {
  int index = 0;
  ContactLabel label = ContactLabel::NoContact;
  ContactLabel raw_label = ContactLabel::NoContact;
  std::vector<VertexContact> verts;
};

/// Per-frame labels and per-vertex probabilities. The raw predictions are
/// kept next to the filtered view, so filtering always starts from them.
struct ContactTimeline {
  std::vector<ContactFrame> frames;

  const ContactFrame* find(int index) const;
  /// Vertex ids with p >= 0.5 in a Contact frame.
  std::vector<int> active_vertices(int index) const;
  std::vector<ContactLabel> labels() const;
};

struct MotionThresholds {
  double translation = 0.005;            ///< meters per frame
  double rotation = 0.5 * M_PI / 180.0;  ///< radians per frame
};

/// Frame i is Contact iff P_i^-1 P_{i+1} exceeds either threshold; the last
/// frame copies its predecessor.
ContactTimeline motion_gate(const ObjectMotion& p_obj, const MotionThresholds& th = {});

/// Flips short runs, dilates Contact runs by the margin, then box-filters
/// per-vertex probabilities and thresholds them at 0.5 (gated by the frame
/// label). Operates on the raw fields, so it is idempotent.
ContactTimeline temporal_filter(const ContactTimeline& timeline, const PhysParams& p);

/// Label-only stages, exposed for inspection.
std::vector<ContactLabel> flip_short_runs(std::vector<ContactLabel> labels, int min_span);
std::vector<ContactLabel> dilate_contact(const std::vector<ContactLabel>& labels, int margin);

nlohmann::json to_json(const ContactTimeline& t);
ContactTimeline contact_timeline_from_json(const nlohmann::json& j);

/// Mean of gamma1 tanh(xi/gamma2)^2 over interior samples with xi >= 0.
/// Accumulates d loss / d grid value into `grad` (sized like the grid) when given.
double body_prior_loss(const SdfGrid& human_sdf, std::span<const Vec3> samples, const PhysParams& p,
                       std::vector<double>* grad = nullptr);

/// Falloff along the forearm: weight 0 before the band, 1 past it, 0.5 at the wrist.
struct WristFalloff {
  Vec3 wrist = Vec3::Zero();
  Vec3 axis = Vec3::UnitX();  ///< unit, pointing from the forearm into the hand
  double band = 0.04;
  double weight(const Vec3& x) const;
};
WristFalloff wrist_falloff(const Skeleton& skel, double band);

/// Mean of w(x) |xi(x) - xi_proxy(x)| over hand-region samples.
double hand_sdf_loss(const SdfGrid& human_sdf, const AnalyticSdf& proxy, std::span<const Vec3> samples,
                     const WristFalloff& falloff, std::vector<double>* grad = nullptr);

/// Deterministic samplers in canonical space. Interior samples stay half a
/// grid voxel inside the proxy.
std::vector<Vec3> sample_body_interior(const Skeleton& skel, int n, std::uint64_t seed);
std::vector<Vec3> sample_hand_region(const Skeleton& skel, int n, double radius, std::uint64_t seed);
std::vector<Vec3> sample_proxy_surface(const Skeleton& skel, int n, std::uint64_t seed);

/// Contact and collision losses of one frame with gradients for the human
/// pose parameters and the object's left world twist.
struct PhysicalLoss {
  double contact = 0;    ///< mean over contact points
  double collision = 0;  ///< mean over surface points (penetrating ones contribute)
  Eigen::VectorXd d_human;
  Vec6 d_object = Vec6::Zero();
};

PhysicalLoss physical_loss(const PosedSkeleton& human, const SdfGrid& object_sdf, const Posed& object_pose,
                           std::span<const Vec3> contact_canonical, std::span<const Vec3> surface_canonical,
                           const PhysParams& p, double w_contact, double w_collision);

/// Object SDF at a world point for an object posed by P, with the gradient
/// of that value with respect to a left world twist on P.
struct ObjectSdfAt {
  double value = 0;
  Vec3 grad_world = Vec3::Zero();
  Vec6 d_twist = Vec6::Zero();
};
ObjectSdfAt object_sdf_at(const SdfGrid& object_sdf, const Posed& object_pose, const Vec3& x_world);

}  // namespace hoi
