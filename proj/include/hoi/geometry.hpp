#pragma once

// Rigid and similarity transforms in 3D: SO(3), SE(3), Sim(3).
//
// All types are immutable values templated on the scalar type, in the
// spirit of Eigen/Sophus. Rotations are stored as unit quaternions with the
// double cover canonicalized (w >= 0), so two equal rotations compare equal
// bit-for-bit after construction.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include <cmath>
#include <span>
#include <vector>

#include "hoi/common.hpp"

namespace hoi {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Vector6 = Eigen::Matrix<Scalar, 6, 1>;
template <typename Scalar>
using Matrix3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar>
using Matrix4 = Eigen::Matrix<Scalar, 4, 4>;

template <typename Scalar>
Matrix3<Scalar> hat(const Vector3<Scalar>& v) {
  Matrix3<Scalar> m;
  // clang-format off
  m << Scalar(0), -v.z(),     v.y(),
       v.z(),      Scalar(0), -v.x(),
      -v.y(),      v.x(),     Scalar(0);
  // clang-format on
  return m;
}

template <typename Scalar>
class Rot3 {
 public:
  using Quaternion = Eigen::Quaternion<Scalar>;

  Rot3() : q_(Quaternion::Identity()) {}

  /// Normalizes and canonicalizes (w >= 0).
  explicit Rot3(const Quaternion& q) : q_(q) { canonicalize(); }

  static Rot3 identity() { return Rot3(); }

  static Rot3 from_matrix(const Matrix3<Scalar>& r) { return Rot3(Quaternion(r)); }

  static Rot3 from_axis_angle(const Vector3<Scalar>& axis, Scalar angle) {
    return Rot3(Quaternion(Eigen::AngleAxis<Scalar>(angle, axis.normalized())));
  }

  static Rot3 rx(Scalar a) { return from_axis_angle(Vector3<Scalar>::UnitX(), a); }
  static Rot3 ry(Scalar a) { return from_axis_angle(Vector3<Scalar>::UnitY(), a); }
  static Rot3 rz(Scalar a) { return from_axis_angle(Vector3<Scalar>::UnitZ(), a); }

  /// Rodrigues / quaternion exponential of a rotation vector.
  static Rot3 exp(const Vector3<Scalar>& omega) {
    const Scalar theta2 = omega.squaredNorm();
    const Scalar theta = std::sqrt(theta2);
    Scalar half_sinc;  // sin(theta/2) / theta
    Scalar c;
    if (theta < Scalar(1e-4)) {
      half_sinc = Scalar(0.5) - theta2 / Scalar(48) + theta2 * theta2 / Scalar(3840);
      c = Scalar(1) - theta2 / Scalar(8) + theta2 * theta2 / Scalar(384);
    } else {
      half_sinc = std::sin(theta / 2) / theta;
      c = std::cos(theta / 2);
    }
    return Rot3(Quaternion(c, half_sinc * omega.x(), half_sinc * omega.y(), half_sinc * omega.z()));
  }

  /// Rotation vector with angle in [0, pi].
  Vector3<Scalar> log() const {
    const Vector3<Scalar> v = q_.vec();
    const Scalar n = v.norm();
    const Scalar w = q_.w();
    Scalar factor;
    if (n < Scalar(1e-8)) {
      // 2 atan(n/w)/n, series in n/w (w ~ 1 here)
      const Scalar r2 = (n * n) / (w * w);
      factor = Scalar(2) / w * (Scalar(1) - r2 / Scalar(3) + r2 * r2 / Scalar(5));
    } else {
      factor = Scalar(2) * std::atan2(n, w) / n;
    }
    return factor * v;
  }

  Scalar angle() const { return Scalar(2) * std::atan2(q_.vec().norm(), q_.w()); }

  Matrix3<Scalar> matrix() const { return q_.toRotationMatrix(); }
  const Quaternion& quaternion() const { return q_; }

  Rot3 inverse() const { return Rot3(q_.conjugate()); }

  Rot3 operator*(const Rot3& other) const { return Rot3(q_ * other.q_); }
  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return q_ * p; }

  bool operator==(const Rot3& o) const { return q_.coeffs() == o.q_.coeffs(); }

  template <typename Other>
  Rot3<Other> cast() const {
    return Rot3<Other>(q_.template cast<Other>());
  }

 private:
  void canonicalize() {
    q_.normalize();
    const auto& c = q_.coeffs();  // x, y, z, w
    bool flip = c.w() < Scalar(0);
    if (c.w() == Scalar(0)) {
      // tie-break on the first non-zero vector component
      for (int i = 0; i < 3; ++i) {
        if (c[i] != Scalar(0)) {
          flip = c[i] < Scalar(0);
          break;
        }
      }
    }
    if (flip) q_.coeffs() = -q_.coeffs();
  }

  Quaternion q_;
};

namespace detail {

// Coefficients of the SE(3) left Jacobian V = I + a W + b W^2.
template <typename Scalar>
void se3_v_coeffs(Scalar theta, Scalar& a, Scalar& b) {
  const Scalar t2 = theta * theta;
  if (theta < Scalar(1e-3)) {
    a = Scalar(0.5) - t2 / Scalar(24) + t2 * t2 / Scalar(720);
    b = Scalar(1) / Scalar(6) - t2 / Scalar(120) + t2 * t2 / Scalar(5040);
  } else {
    a = (Scalar(1) - std::cos(theta)) / t2;
    b = (theta - std::sin(theta)) / (t2 * theta);
  }
}

// Coefficient c of V^-1 = I - W/2 + c W^2.
template <typename Scalar>
Scalar se3_vinv_coeff(Scalar theta) {
  const Scalar t2 = theta * theta;
  if (theta < Scalar(1e-3)) return Scalar(1) / Scalar(12) + t2 / Scalar(720) + t2 * t2 / Scalar(30240);
  return (Scalar(1) - theta * std::sin(theta) / (Scalar(2) * (Scalar(1) - std::cos(theta)))) / t2;
}

}  // namespace detail

/// Rigid transform x -> R x + t.
template <typename Scalar>
class Pose {
 public:
  Pose() : translation_(Vector3<Scalar>::Zero()) {}
  Pose(const Rot3<Scalar>& r, const Vector3<Scalar>& t) : rotation_(r), translation_(t) {}

  static Pose identity() { return Pose(); }
  static Pose from_translation(const Vector3<Scalar>& t) { return Pose(Rot3<Scalar>(), t); }

  /// Rejects matrices whose upper-left block is not a rotation (tolerance 1e-6).
  static Pose from_matrix(const Matrix4<Scalar>& m) {
    const Matrix3<Scalar> r = m.template topLeftCorner<3, 3>();
    const Scalar ortho = (r * r.transpose() - Matrix3<Scalar>::Identity()).norm();
    require(ortho < Scalar(1e-6) && r.determinant() > Scalar(0), ErrorCode::InvalidArgument,
            "matrix is not a rigid transform");
    require((m.template bottomRows<1>() - Eigen::Matrix<Scalar, 1, 4>(0, 0, 0, 1)).norm() < Scalar(1e-9),
            ErrorCode::InvalidArgument, "bad homogeneous row");
    return Pose(Rot3<Scalar>::from_matrix(r), m.template topRightCorner<3, 1>());
  }

  /// Twist layout is (omega, v): rotation part first.
  static Pose exp(const Vector6<Scalar>& xi) {
    const Vector3<Scalar> omega = xi.template head<3>();
    const Vector3<Scalar> v = xi.template tail<3>();
    Scalar a, b;
    detail::se3_v_coeffs(omega.norm(), a, b);
    const Matrix3<Scalar> w = hat(omega);
    const Matrix3<Scalar> vmat = Matrix3<Scalar>::Identity() + a * w + b * w * w;
    return Pose(Rot3<Scalar>::exp(omega), vmat * v);
  }

  /// Throws AngleNearPi within 1e-6 of the cut locus.
  Vector6<Scalar> log() const {
    const Scalar theta = rotation_.angle();
    require(theta < Scalar(M_PI) - Scalar(1e-6), ErrorCode::AngleNearPi,
            "se3 log undefined near rotation angle pi");
    const Vector3<Scalar> omega = rotation_.log();
    const Matrix3<Scalar> w = hat(omega);
    const Matrix3<Scalar> vinv =
        Matrix3<Scalar>::Identity() - Scalar(0.5) * w + detail::se3_vinv_coeff(theta) * w * w;
    Vector6<Scalar> xi;
    xi << omega, vinv * translation_;
    return xi;
  }

  const Rot3<Scalar>& rotation() const { return rotation_; }
  const Vector3<Scalar>& translation() const { return translation_; }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = rotation_.matrix();
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

  Pose inverse() const {
    const Rot3<Scalar> rinv = rotation_.inverse();
    return Pose(rinv, -(rinv * translation_));
  }

  /// Applies `other` first, then `this`.
  Pose operator*(const Pose& other) const {
    return Pose(rotation_ * other.rotation_, rotation_ * other.translation_ + translation_);
  }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const { return rotation_ * p + translation_; }

  bool operator==(const Pose& o) const {
    return rotation_ == o.rotation_ && translation_ == o.translation_;
  }

 private:
  Rot3<Scalar> rotation_;
  Vector3<Scalar> translation_;
};

/// Similarity transform x -> s R x + t.
template <typename Scalar>
class Sim3 {
 public:
  Sim3() : scale_(1), translation_(Vector3<Scalar>::Zero()) {}

  Sim3(Scalar scale, const Rot3<Scalar>& r, const Vector3<Scalar>& t)
      : scale_(scale), rotation_(r), translation_(t) {
    require(std::isfinite(scale) && scale > Scalar(0), ErrorCode::InvalidArgument,
            "Sim3 scale must be positive and finite");
  }

  static Sim3 identity() { return Sim3(); }
  static Sim3 from_pose(const Pose<Scalar>& p) { return Sim3(Scalar(1), p.rotation(), p.translation()); }

  Scalar scale() const { return scale_; }
  const Rot3<Scalar>& rotation() const { return rotation_; }
  const Vector3<Scalar>& translation() const { return translation_; }
  Pose<Scalar> rigid_part() const { return Pose<Scalar>(rotation_, translation_); }

  Vector3<Scalar> operator*(const Vector3<Scalar>& p) const {
    return scale_ * (rotation_ * p) + translation_;
  }

  Sim3 operator*(const Sim3& o) const {
    return Sim3(scale_ * o.scale_, rotation_ * o.rotation_, scale_ * (rotation_ * o.translation_) + translation_);
  }

  Sim3 inverse() const {
    const Rot3<Scalar> rinv = rotation_.inverse();
    return Sim3(Scalar(1) / scale_, rinv, -(rinv * translation_) / scale_);
  }

  Matrix4<Scalar> matrix() const {
    Matrix4<Scalar> m = Matrix4<Scalar>::Identity();
    m.template topLeftCorner<3, 3>() = scale_ * rotation_.matrix();
    m.template topRightCorner<3, 1>() = translation_;
    return m;
  }

 private:
  Scalar scale_;
  Rot3<Scalar> rotation_;
  Vector3<Scalar> translation_;
};

using Rot3d = Rot3<double>;
using Posed = Pose<double>;
using Sim3d = Sim3<double>;

/// Camera center of a world-to-camera extrinsic.
template <typename Scalar>
Vector3<Scalar> camera_center(const Pose<Scalar>& world_to_cam) {
  return -(world_to_cam.rotation().inverse() * world_to_cam.translation());
}

/// Re-expresses a world-to-camera extrinsic in a frame related to the
/// original world frame by `gauge` (new = gauge * old). The camera center is
/// mapped by the similarity; the orientation only by its rotation, so the
/// result is again a rigid extrinsic.
template <typename Scalar>
Pose<Scalar> apply_gauge(const Sim3<Scalar>& gauge, const Pose<Scalar>& world_to_cam) {
  const Rot3<Scalar> r = world_to_cam.rotation() * gauge.rotation().inverse();
  const Vector3<Scalar> c = gauge * camera_center(world_to_cam);
  return Pose<Scalar>(r, -(r * c));
}

/// Rotation angle of a^-1 b.
template <typename Scalar>
Scalar rotation_distance(const Rot3<Scalar>& a, const Rot3<Scalar>& b) {
  return (a.inverse() * b).angle();
}

template <typename Scalar>
struct UmeyamaResult {
  Sim3<Scalar> transform;
  Scalar rms = 0;  ///< sqrt(mean ||s R src + t - dst||^2)
};

/// Least-squares similarity (or rigid, when with_scale is false) alignment
/// mapping src onto dst. Throws DegenerateConfiguration when the source
/// points are coincident or collinear.
template <typename Scalar>
UmeyamaResult<Scalar> umeyama(std::span<const Vector3<Scalar>> src, std::span<const Vector3<Scalar>> dst,
                              bool with_scale = true) {
  require(src.size() == dst.size(), ErrorCode::InvalidArgument, "umeyama: point count mismatch");
  require(src.size() >= 3, ErrorCode::InvalidArgument, "umeyama: need at least 3 points");
  const auto n = static_cast<Scalar>(src.size());

  Vector3<Scalar> mu_s = Vector3<Scalar>::Zero(), mu_d = Vector3<Scalar>::Zero();
  for (size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;

  Matrix3<Scalar> cov = Matrix3<Scalar>::Zero();
  Matrix3<Scalar> src_scatter = Matrix3<Scalar>::Zero();
  Scalar var_s = 0;
  for (size_t i = 0; i < src.size(); ++i) {
    const Vector3<Scalar> a = src[i] - mu_s;
    const Vector3<Scalar> b = dst[i] - mu_d;
    cov += b * a.transpose();
    src_scatter += a * a.transpose();
    var_s += a.squaredNorm();
  }
  cov /= n;
  var_s /= n;

  const Eigen::JacobiSVD<Matrix3<Scalar>> scatter_svd(src_scatter);
  const auto sv = scatter_svd.singularValues();
  require(sv(0) > Scalar(0) && sv(1) > Scalar(1e-10) * sv(0), ErrorCode::DegenerateConfiguration,
          "umeyama: source points are coincident or collinear");

  const Eigen::JacobiSVD<Matrix3<Scalar>> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vector3<Scalar> sign = Vector3<Scalar>::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < Scalar(0)) sign(2) = Scalar(-1);
  const Matrix3<Scalar> r = svd.matrixU() * sign.asDiagonal() * svd.matrixV().transpose();
  const Scalar s = with_scale ? svd.singularValues().dot(sign) / var_s : Scalar(1);
  const Rot3<Scalar> rot = Rot3<Scalar>::from_matrix(r);
  const Vector3<Scalar> t = mu_d - s * (rot * mu_s);

  UmeyamaResult<Scalar> out{Sim3<Scalar>(s, rot, t), Scalar(0)};
  Scalar sq = 0;
  for (size_t i = 0; i < src.size(); ++i) sq += (out.transform * src[i] - dst[i]).squaredNorm();
  out.rms = std::sqrt(sq / n);
  return out;
}

template <typename Scalar>
UmeyamaResult<Scalar> umeyama(const std::vector<Vector3<Scalar>>& src, const std::vector<Vector3<Scalar>>& dst,
                              bool with_scale = true) {
  return umeyama<Scalar>(std::span<const Vector3<Scalar>>(src), std::span<const Vector3<Scalar>>(dst), with_scale);
}

}  // namespace hoi
