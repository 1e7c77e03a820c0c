#pragma once

// Reconstruction, image and contact metrics.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hoi/contact.hpp"
#include "hoi/image_io.hpp"
#include "hoi/sdf.hpp"

namespace hoi {

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::string source = "union";
};

/// Sphere-traces rays cast from a Fibonacci lattice on the grid's bounding
/// sphere; keeps hits with |sdf| < 0.1 spacing. Throws NoSurface without a
/// sign change.
SurfaceSamples extract_surface(const SdfGrid& grid, int n_points, std::uint64_t seed = 0,
                               const std::string& source = "union");

/// Exact nearest-neighbor queries over a uniform bucket grid.
class PointIndex {
 public:
  explicit PointIndex(const std::vector<Vec3>& points);
  /// Distance to the closest indexed point.
  double nearest(const Vec3& q) const;
  std::size_t size() const { return points_.size(); }

 private:
  std::vector<Vec3> points_;
  Vec3 origin_;
  double cell_ = 1;
  Eigen::Vector3i dims_;
  std::vector<std::uint32_t> start_;  ///< bucket offsets into order_
  std::vector<std::uint32_t> order_;
};

/// Distance from each query point to its nearest neighbor in `target`.
std::vector<double> nearest_distances(const std::vector<Vec3>& query, const std::vector<Vec3>& target,
                                      int threads = 1);

struct SurfaceMetrics {
  double chamfer = 0;    ///< meters, mean of the two directional means
  double hausdorff = 0;  ///< meters
  double precision = 0, recall = 0, f1 = 0;  ///< fractions at tau
};

inline constexpr double kF1Threshold = 0.02;

/// Throws EmptyInput when either set is empty.
SurfaceMetrics surface_metrics(const SurfaceSamples& pred, const SurfaceSamples& gt, double tau = kF1Threshold,
                               int threads = 1);
double chamfer(const SurfaceSamples& pred, const SurfaceSamples& gt);
double hausdorff(const SurfaceSamples& pred, const SurfaceSamples& gt);
double f1_score(const SurfaceSamples& pred, const SurfaceSamples& gt, double tau = kF1Threshold);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE), capped at 99 dB. Throws DimensionMismatch.
double psnr(const Image& pred, const Image& gt);
/// Mean SSIM over channels, 11x11 Gaussian window (sigma 1.5), valid region only.
double ssim(const Image& pred, const Image& gt);

/// Object SDF values at a frame's contact points.
struct FrameContacts {
  int frame = 0;
  std::vector<int> vertex_id;
  std::vector<double> xi;
};

enum class PdAggregation {
  MeanOfFrameMax,  ///< mean over frames of max(0, -min xi)
  MeanOverPoints,  ///< mean over all points of max(0, -xi)
};

/// Meters. Frames without points are skipped.
double penetration_depth(const std::vector<FrameContacts>& frames, PdAggregation agg = PdAggregation::MeanOfFrameMax);

inline constexpr double kContactThreshold = 0.01;

struct ContactPrf {
  double precision = 0, recall = 0, f1 = 0;  ///< fractions; 0 when undefined
  std::size_t tp = 0, fp = 0, fn = 0;
};

/// A point is predicted in contact iff |xi| < tau_c; ground truth is the
/// active vertex set of `gt` at that frame.
ContactPrf contact_prf(const std::vector<FrameContacts>& frames, const ContactTimeline& gt,
                       double tau_c = kContactThreshold);

struct MetricReport {
  std::optional<double> chamfer_cm, hausdorff_cm, f1_percent;
  std::optional<double> psnr_db, ssim;
  std::optional<double> penetration_cm;
  std::optional<double> contact_precision, contact_recall, contact_f1;  ///< percent

  nlohmann::json to_json() const;
  /// Aligned columns; missing values print as "-".
  std::string table() const;
};

}  // namespace hoi
