#pragma once

// Two-stage refinement. Stage I fits SDF and albedo grid values to the
// observations through the renderer's backward pass; Stage II holds the
// grids fixed and refines per-frame human and object pose twists with the
// contact and collision losses plus rendered mask/depth gradients.

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "hoi/contact.hpp"
#include "hoi/metrics.hpp"
#include "hoi/render.hpp"

namespace hoi {

struct LossWeights {
  double rgb = 1.0;
  double mask = 0.5;
  double depth = 1.0;
  double normal = 0.005;
  double contact = 1.0;
  double collision = 1.0;
  double body = 0.1;
  double hand = 0.01;

  /// Throws InvalidArgument on negative weights or when every weight is zero.
  void validate() const;
};

enum class Stage : int { Shape = 1, Pose = 2 };

/// Epochs are `steps_per_epoch` optimizer steps. The first warmup fraction
/// runs Stage I only; the rest alternates in cycles of `stage1_epochs` Stage I
/// epochs followed by `stage2_epochs` Stage II epochs.
struct Schedule {
  int total_steps = 0;
  int steps_per_epoch = 1;
  double warmup_fraction = 0.25;
  int stage1_epochs = 6;
  int stage2_epochs = 4;
  bool stage2_enabled = true;  ///< false runs Stage I throughout
  /// Ray sampling ratios: human, object, hand region, scene.
  std::array<double, 4> ratios{0.5, 0.3, 0.1, 0.1};
  /// Ratios used for the first `early_epochs` epochs.
  std::array<double, 4> early_ratios{0.2, 0.7, 0.0, 0.1};
  int early_epochs = 10;

  void validate() const;
  int epochs() const;
  int warmup_epochs() const;
  Stage stage_of_epoch(int epoch) const;
  /// Cycle index of an epoch: 0 for warmup, then 1, 2, ... per alternation block.
  int cycle_of_epoch(int epoch) const;
};

/// Plain gradient-descent step sizes per parameter group. Gradients are
/// clipped per block (one grid, one albedo grid, one frame's twist) first.
struct LearningRates {
  double sdf = 20.0;
  double albedo = 10.0;
  double human_twist = 2e-4;
  double object_twist = 5e-5;
};

struct OptimConfig {
  LossWeights weights;
  Schedule schedule;
  PhysParams phys;
  LearningRates lr;
  RenderConfig render;            ///< seed should match the observations' render seed
  int rays_per_step = 256;
  int surface_points = 64;        ///< collision samples on the proxy surface
  int body_samples = 256;
  int hand_samples = 128;
  double clip_norm = 1.0;         ///< per parameter block
  /// A stage diverges when its loss exceeds factor * max(first loss, floor).
  double divergence_factor = 10.0;
  double divergence_floor = 1e-2;
  /// Also let the RGB term move poses in Stage II.
  bool photometric_pose_gradients = false;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

nlohmann::json to_json(const OptimConfig& c);
/// Missing keys keep their defaults; unknown keys are rejected.
OptimConfig optim_config_from_json(const nlohmann::json& j);

struct LossTerms {
  double rgb = 0, mask = 0, depth = 0, normal = 0;
  double contact = 0, collision = 0, body = 0, hand = 0;

  double weighted(const LossWeights& w) const;
  LossTerms& operator+=(const LossTerms& o);
};

struct LogEntry {
  int step = 0;
  Stage stage = Stage::Shape;
  LossTerms terms;
  double total = 0;  ///< weighted sum of the terms active in this stage
};

/// Per-frame poses being refined; frames follow the human motion's order.
struct OptimState {
  std::vector<int> frames;
  std::vector<BodyPose> human;
  std::vector<Posed> object;
  int step = 0;
  std::vector<LogEntry> log;
};

OptimState initial_state(const ComponentSet& cs);
/// Writes the state's poses into the components.
void apply_state(const OptimState& s, ComponentSet& cs);

struct Observations {
  std::vector<Camera> cameras;
  std::vector<int> frames;
  std::vector<RenderBuffers> buffers;

  std::size_t size() const { return frames.size(); }
};

/// Everything the optimizer reads or owns. Requires a human and an object.
struct RefineProblem {
  ComponentSet components;
  std::optional<Skeleton> proxy;  ///< capsule prior for the body and hand terms
  Observations observations;
  ContactTimeline contacts;       ///< already filtered
  ContactPointSet contact_points;
};

/// Observed values at one pixel.
struct PixelTarget {
  Vec3 color = Vec3::Zero();
  double depth = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();
  int mask = -1;
};
PixelTarget pixel_target(const RenderBuffers& b, int px, int py);

enum class GradientMode { Grids, Poses };

struct SparseEntry {
  std::uint32_t index = 0;
  double value = 0;
};

/// Per-ray loss and gradients of scale * (weighted rendered loss).
struct RayGradients {
  LossTerms loss;  ///< unweighted, unscaled
  std::array<std::vector<SparseEntry>, kNumComponents> sdf;
  std::array<std::array<std::vector<SparseEntry>, 3>, kNumComponents> albedo;
  Eigen::VectorXd human;  ///< pose_dof entries, Poses mode only
  Vec6 object = Vec6::Zero();
};

/// Mask loss is a squared hinge on the mask decision rule (coverage above
/// 0.5, then the heaviest component), zero wherever the rendered mask agrees;
/// depth and normal terms apply where the observation hits a component.
/// In Poses mode only the mask and depth terms move poses (plus RGB when
/// `photometric` is set), through each sample's signed distance.
RayGradients ray_gradients(const FrameView& view, const Ray& ray, std::span<const RaySampleT> samples,
                           const PixelTarget& target, const RenderConfig& rc, const LossWeights& w, double scale,
                           GradientMode mode, bool photometric = false);

/// Loss value only, for the same sample list.
LossTerms ray_loss(const FrameView& view, const Ray& ray, std::span<const RaySampleT> samples,
                   const PixelTarget& target, const RenderConfig& rc);

/// Runs `steps` Stage I steps; grid values in `problem.components` change.
void stage1_fit(RefineProblem& problem, OptimState& state, const OptimConfig& cfg, int steps);
/// Runs `steps` Stage II steps; only the state's poses change.
void stage2_refine(RefineProblem& problem, OptimState& state, const OptimConfig& cfg, int steps);

/// Full alternating schedule. Writes cycle_<k>/{grids.sdfg, poses.json,
/// log.csv} under `checkpoint_dir` when given. The returned state's poses are
/// also applied to `problem.components`.
OptimState run_schedule(RefineProblem& problem, const OptimConfig& cfg,
                        const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

/// Object signed distances of every contact vertex at each Contact frame of
/// `timeline`, for the penetration and contact metrics.
std::vector<FrameContacts> contact_distances(const ComponentSet& cs, const ContactPointSet& points,
                                             const ContactTimeline& timeline);

void write_poses(const std::filesystem::path& path, const OptimState& s);
/// Reads what write_poses wrote; the log stays empty.
OptimState read_poses(const std::filesystem::path& path, std::size_t bones);
/// grids.sdfg (human, object, scene SDFs, then their albedo channels in the
/// same order, absent components skipped), poses.json and log.csv.
void write_checkpoint(const std::filesystem::path& dir, const ComponentSet& cs, const OptimState& s);
void write_log_csv(const std::filesystem::path& path, std::span<const LogEntry> log);

}  // namespace hoi
