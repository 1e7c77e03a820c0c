#pragma once

// Signed distance fields: exact analytic primitives (ground truth) and
// trainable voxel grids with trilinear value/gradient queries.
//
// Sign convention: negative inside, positive outside.

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <variant>
#include <vector>

#include "hoi/geometry.hpp"

namespace hoi {

struct SdfSample {
  double value = 0;
  Vec3 gradient = Vec3::Zero();
  /// Set on the medial axis of a primitive (e.g. a sphere center), where the
  /// gradient is undefined and reported as zero.
  bool degenerate = false;
};

class AnalyticSdf {
 public:
  struct Sphere {
    Vec3 center;
    double radius;
  };
  struct Box {
    Vec3 center;
    Vec3 half_extents;
  };
  struct Capsule {
    Vec3 a;
    Vec3 b;
    double radius;
  };
  /// value = normal . x - offset; solid on the side opposite the normal.
  struct HalfSpace {
    Vec3 normal;
    double offset;
  };
  /// Pointwise min of the children: exact outside disjoint children, a lower
  /// bound in general.
  struct Union {
    std::shared_ptr<const std::vector<AnalyticSdf>> children;
  };
  /// Child geometry placed in the world by `pose` (child-local to world).
  struct Transformed {
    Posed pose;
    std::shared_ptr<const AnalyticSdf> child;
  };

  using Node = std::variant<Sphere, Box, Capsule, HalfSpace, Union, Transformed>;

  static AnalyticSdf sphere(const Vec3& center, double radius);
  static AnalyticSdf box(const Vec3& center, const Vec3& half_extents);
  static AnalyticSdf capsule(const Vec3& a, const Vec3& b, double radius);
  static AnalyticSdf half_space(const Vec3& normal, double offset);
  static AnalyticSdf make_union(std::vector<AnalyticSdf> children);
  static AnalyticSdf transformed(const Posed& pose, AnalyticSdf child);

  SdfSample query(const Vec3& x) const;
  double value(const Vec3& x) const { return query(x).value; }

  const Node& node() const { return node_; }

 private:
  explicit AnalyticSdf(Node n) : node_(std::move(n)) {}
  Node node_;
};

enum class OutsidePolicy : std::uint8_t {
  /// Boundary value plus Euclidean distance to the box.
  Clamp = 0,
  /// Continue the boundary cell's trilinear polynomial.
  LinearExtrapolate = 1,
};

/// Corner indices and weights of the trilinear interpolant at a point. Both
/// the value and the position-gradient of a grid query are linear in the
/// corner values through these weights.
struct TrilinearStencil {
  std::array<std::int64_t, 8> index{};
  std::array<double, 8> weight{};
  std::array<Vec3, 8> dweight{};  ///< d weight / d x, zero along clamped axes
  Vec3 outside_offset = Vec3::Zero();  ///< x minus its projection onto the box (Clamp only)
};

/// Axis-aligned voxel SDF, values stored x-fastest as f32.
class SdfGrid {
 public:
  using Dims = std::array<int, 3>;

  SdfGrid(const Vec3& origin, const Vec3& spacing, const Dims& dims, std::vector<float> values,
          OutsidePolicy policy = OutsidePolicy::Clamp);

  SdfSample query(const Vec3& x) const;
  /// Trilinear value with the position clamped into the box (no distance
  /// term); used for attribute grids such as albedo channels.
  double interpolate_clamped(const Vec3& x) const;

  TrilinearStencil stencil(const Vec3& x) const;

  const Vec3& origin() const { return origin_; }
  const Vec3& spacing() const { return spacing_; }
  const Dims& dims() const { return dims_; }
  OutsidePolicy policy() const { return policy_; }
  Vec3 box_min() const { return origin_; }
  Vec3 box_max() const;
  double min_spacing() const { return spacing_.minCoeff(); }

  std::int64_t linear_index(int i, int j, int k) const {
    return i + static_cast<std::int64_t>(dims_[0]) * (j + static_cast<std::int64_t>(dims_[1]) * k);
  }
  Vec3 lattice_point(int i, int j, int k) const {
    return origin_ + Vec3(i * spacing_.x(), j * spacing_.y(), k * spacing_.z());
  }

  const std::vector<float>& values() const { return values_; }
  /// Mutable access for the shape-fitting stage, which owns its copy.
  std::vector<float>& mutable_values() { return values_; }

  bool has_sign_change() const;

 private:
  Vec3 origin_;
  Vec3 spacing_;
  Dims dims_;
  std::vector<float> values_;
  OutsidePolicy policy_;
};

template <typename F>
concept PointField = requires(const F& f, const Vec3& x) {
  { f(x) } -> std::convertible_to<double>;
};

/// Samples any scalar field on the lattice origin + (i,j,k) * spacing.
template <PointField F>
SdfGrid bake_field(const F& f, const Vec3& origin, const Vec3& spacing, const SdfGrid::Dims& dims,
                   OutsidePolicy policy = OutsidePolicy::Clamp) {
  require(dims[0] >= 2 && dims[1] >= 2 && dims[2] >= 2, ErrorCode::InvalidArgument, "grid dims must be >= 2 per axis");
  std::vector<float> values(static_cast<size_t>(dims[0]) * dims[1] * dims[2]);
  size_t n = 0;
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i)
        values[n++] = static_cast<float>(f(origin + Vec3(i * spacing.x(), j * spacing.y(), k * spacing.z())));
  return SdfGrid(origin, spacing, dims, std::move(values), policy);
}

SdfGrid bake(const AnalyticSdf& f, const Vec3& origin, const Vec3& spacing, const SdfGrid::Dims& dims,
             OutsidePolicy policy = OutsidePolicy::Clamp);

/// Grid covering [lo, hi] (expanded to whole cells) at the given spacing.
SdfGrid bake_box(const AnalyticSdf& f, const Vec3& lo, const Vec3& hi, double spacing,
                 OutsidePolicy policy = OutsidePolicy::Clamp);

/// Evaluates a field (analytic or grid) after mapping the world point into
/// the field's canonical frame: value f(pose^-1 x), gradient rotated back.
template <typename Field>
SdfSample transform_query(const Field& f, const Posed& pose, const Vec3& x_world) {
  SdfSample s = f.query(pose.inverse() * x_world);
  s.gradient = pose.rotation() * s.gradient;
  return s;
}

// Binary grid format, little-endian: "SDFG", u32 version=1, 3 x u32 dims,
// 3 x f64 origin, 3 x f64 spacing, u8 outside_policy, then f32 values.
void append_grid_bytes(const SdfGrid& g, std::vector<char>& out);
std::vector<char> encode_grid(const SdfGrid& g);
/// Decodes one grid starting at `offset`, advancing it past the record.
SdfGrid decode_grid(const std::vector<char>& bytes, std::size_t& offset);
SdfGrid decode_grid(const std::vector<char>& bytes);
void write_grid(const std::filesystem::path& path, const SdfGrid& g);
SdfGrid read_grid(const std::filesystem::path& path);
/// Several records back to back in one file.
void write_grids(const std::filesystem::path& path, const std::vector<const SdfGrid*>& grids);
std::vector<SdfGrid> read_grids(const std::filesystem::path& path);

}  // namespace hoi
