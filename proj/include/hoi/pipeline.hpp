#pragma once

// Dataset-level plumbing shared by the command line tool and the acceptance
// checks: building a refinement problem from a generated dataset, running it,
// and scoring a result against the dataset's ground truth.

#include <filesystem>
#include <optional>

#include "hoi/metrics.hpp"
#include "hoi/optimize.hpp"
#include "hoi/synth.hpp"
#include "hoi/trajectory.hpp"

namespace hoi {

/// Static-frame detection followed by disentanglement of the observed
/// trajectories.
ObjectMotion recover_object_motion(const Dataset& ds, const RansacConfig& rc = {});

/// Least-squares constant human and object albedo against the observed
/// colors at every `stride`-th pixel, holding the problem's geometry and poses.
std::array<Vec3, 2> fit_constant_albedo(const RefineProblem& pb, const RenderConfig& rc, int stride = 2);

struct RefineSetup {
  RansacConfig ransac;
  bool gt_object_motion = false;  ///< skip disentanglement
  /// Unset: fitted to the observations (fit_constant_albedo).
  std::optional<Vec3> initial_albedo;
  int albedo_stride = 2;
};

/// Human starts from the capsule proxy and the defective initial motion, the
/// object from the dataset grid and the recovered motion, both with a constant
/// albedo; the scene is taken as given. Predicted contacts are filtered with
/// `phys`.
RefineProblem build_refine_problem(const Dataset& ds, const PhysParams& phys, const RefineSetup& setup = {});

struct EvalOptions {
  int surface_points = 2000;
  double f1_tau = kF1Threshold;
  PdAggregation pd = PdAggregation::MeanOfFrameMax;
  bool images = true;  ///< re-render the observed frames for PSNR/SSIM
  int threads = 1;
};

/// Surfaces are compared in world space at the first frame (human and object
/// samples pooled); contact metrics use the ground-truth timeline and points.
MetricReport evaluate(const ComponentSet& pred, const Dataset& gt, const EvalOptions& opt = {});

/// Components of a refinement result directory (grids.sdfg + poses.json),
/// laid out like the dataset's human, object and scene.
ComponentSet load_result(const std::filesystem::path& dir, const Dataset& reference);

}  // namespace hoi
