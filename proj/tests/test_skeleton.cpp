#include <doctest.h>

#include <filesystem>

#include "hoi/skeleton.hpp"
#include "support.hpp"

using namespace hoi;

namespace {

// Three collinear bones along +x: 0.3, 0.25, 0.1 m.
Skeleton arm(double sigma = 0.05) {
  std::vector<Bone> bones{
      {-1, Posed(), 0.3, 0.045},
      {0, Posed::from_translation(Vec3(0.3, 0, 0)), 0.25, 0.04},
      {1, Posed::from_translation(Vec3(0.55, 0, 0)), 0.1, 0.03},
  };
  return Skeleton::from_proxy(bones, 0.01, sigma, 2);
}

BodyPose bent(const Skeleton& s, std::mt19937_64& rng, double max_angle) {
  BodyPose p = BodyPose::rest(s.size());
  p.root_rotation = test::random_rot(rng, max_angle);
  p.root_translation = test::random_vec(rng);
  for (auto& r : p.local) r = test::random_rot(rng, max_angle);
  return p;
}

}  // namespace

TEST_CASE("rest pose skinning transforms are identity") {
  const Skeleton s = arm();
  for (const Posed& t : bone_transforms(s, BodyPose::rest(s.size()))) {
    CHECK(t.rotation().angle() < 1e-12);
    CHECK(t.translation().norm() < 1e-12);
  }
}

TEST_CASE("single bone skinning transform equals the root pose") {
  const Skeleton s = Skeleton::from_proxy({{-1, Posed::from_translation(Vec3(0.1, 0.2, 0)), 0.3, 0.05}}, 0.02);
  BodyPose p = BodyPose::rest(1);
  p.root_rotation = Rot3d::rx(0.7);
  p.root_translation = Vec3(1, 2, 3);
  const Posed t = bone_transforms(s, p)[0];
  CHECK(test::pose_error_angle(t, p.root()) < 1e-12);
  CHECK(test::pose_error_translation(t, p.root()) < 1e-12);
}

TEST_CASE("chain with a 90 degree elbow matches hand FK") {
  const Skeleton s = arm();
  BodyPose p = BodyPose::rest(3);
  p.local[1] = Rot3d::rz(M_PI / 2);
  const auto w = bone_world(s, p);
  // forearm starts at the elbow (0.3,0,0) and points along +y: the hand
  // bone origin sits 0.25 m further along y.
  CHECK((w[2].translation() - Vec3(0.3, 0.25, 0)).norm() < 1e-12);
  CHECK((w[2] * Vec3(0.1, 0, 0) - Vec3(0.3, 0.35, 0)).norm() < 1e-12);
}

TEST_CASE("lbs forward and inverse are identity at rest") {
  const Skeleton s = arm();
  std::mt19937_64 rng(1);
  const BodyPose rest = BodyPose::rest(3);
  for (int n = 0; n < 100; ++n) {
    const Vec3 x = test::random_vec(rng, -0.2, 0.6);
    CHECK((lbs_forward(s, rest, x) - x).norm() < 1e-12);
    const auto inv = lbs_inverse(s, rest, x);
    REQUIRE(inv.has_value());
    CHECK((*inv - x).norm() < 1e-9);
  }
}

TEST_CASE("skin weights are normalized and smooth") {
  const Skeleton s = arm();
  std::mt19937_64 rng(2);
  for (int n = 0; n < 300; ++n) {
    const Vec3 x = test::random_vec(rng, -0.2, 0.8);
    const SkinWeights w = skin_weights(s, x);
    double sum = 0;
    for (double v : w.w) {
      CHECK(v >= 0);
      sum += v;
    }
    CHECK(std::abs(sum - 1) < 1e-9);
    const Vec3 d = test::random_vec(rng).normalized();
    const double h = 1e-6;
    const SkinWeights a = skin_weights(s, x + h * d), b = skin_weights(s, x - h * d);
    for (std::size_t k = 0; k < 3; ++k) {
      const double fd = (a.w[k] - b.w[k]) / (2 * h);
      CHECK(std::abs(fd) < 10 / s.sigma_skin());
      CHECK(std::abs(fd - w.dw[k].dot(d)) < 1e-5);
    }
  }
}

TEST_CASE("saturated weight gives the rigid bone transform") {
  const Skeleton s = arm(0.005);
  std::mt19937_64 rng(3);
  const BodyPose p = bent(s, rng, 1.0);
  const Vec3 x(0.12, 0.01, 0);  // well inside the upper arm, far from the elbow
  const auto t = bone_transforms(s, p);
  CHECK((lbs_forward(s, p, x) - t[0] * x).norm() < 1e-6);
}

TEST_CASE("blended point equals the weight-averaged transform") {
  const Skeleton s = arm();
  BodyPose p = BodyPose::rest(3);
  p.local[0] = Rot3d::rz(0.4);
  p.local[1] = Rot3d::rz(-0.8);
  const Vec3 x(0.3, 0.02, 0);
  const auto t = bone_transforms(s, p);
  const SkinWeights w = skin_weights(s, x);
  Vec3 ref = Vec3::Zero();
  for (int b = 0; b < 3; ++b) ref += w.w[b] * (t[b] * x);
  CHECK((lbs_forward(s, p, x) - ref).norm() < 1e-14);
}

TEST_CASE("forward then inverse round trip inside the body") {
  const Skeleton s = arm();
  std::mt19937_64 rng(4);
  double worst = 0;
  int tested = 0;
  while (tested < 1000) {
    const BodyPose p = bent(s, rng, M_PI / 3);
    const Vec3 x = test::random_vec(rng, -0.05, 0.7);
    if (s.capsule_proxy().value(x) >= 0) continue;
    const Vec3 y = lbs_forward(s, p, x);
    const auto back = lbs_inverse(s, p, y);
    REQUIRE(back.has_value());
    worst = std::max(worst, (lbs_forward(s, p, *back) - y).norm());
    ++tested;
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("far points invert to canonical space outside the body") {
  const Skeleton s = arm();
  std::mt19937_64 rng(5);
  const BodyPose p = bent(s, rng, 0.8);
  const Vec3 far = lbs_forward(s, p, Vec3(0.3, 0, 0)) + Vec3(0, 0, 1.0);
  const PosedSkeleton ps(s, p);
  const auto inv = ps.inverse(far);
  REQUIRE(inv.has_value());
  CHECK(inv->sdf > 0);
}

TEST_CASE("pose jacobians match finite differences") {
  const Skeleton s = arm();
  std::mt19937_64 rng(6);
  for (int n = 0; n < 20; ++n) {
    const BodyPose p = bent(s, rng, 0.8);
    const Vec3 x = test::random_vec(rng, 0.0, 0.6);
    const PosedSkeleton ps(s, p);
    const PoseJacobian j = ps.pose_jacobian(x);
    for (int k = 0; k < pose_dof(s); ++k) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(pose_dof(s));
      const double h = 1e-6;
      d[k] = h;
      const Vec3 fd = (lbs_forward(s, apply_pose_delta(p, d), x) - lbs_forward(s, apply_pose_delta(p, -d), x)) / (2 * h);
      CHECK((fd - j.col(k)).norm() < 1e-6 * std::max(1.0, fd.norm()));
    }
  }
}

TEST_CASE("inverse pose jacobian holds the world point fixed") {
  const Skeleton s = arm();
  std::mt19937_64 rng(7);
  const BodyPose p = bent(s, rng, 0.6);
  const Vec3 xc(0.4, 0.01, 0.0);
  const PosedSkeleton ps(s, p);
  const Vec3 xw = ps.forward(xc);
  const PoseJacobian j = ps.inverse_pose_jacobian(xc);
  for (int k = 0; k < pose_dof(s); ++k) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(pose_dof(s));
    const double h = 1e-6;
    d[k] = h;
    const auto a = PosedSkeleton(s, apply_pose_delta(p, d)).inverse(xw);
    const auto b = PosedSkeleton(s, apply_pose_delta(p, -d)).inverse(xw);
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    const Vec3 fd = (a->canonical - b->canonical) / (2 * h);
    CHECK((fd - j.col(k)).norm() < 1e-5);
  }
}

TEST_CASE("skeleton file round trip") {
  const Skeleton s = arm();
  const auto dir = std::filesystem::temp_directory_path() / "hoi_test_skeleton";
  write_skeleton(dir / "human.json", s);
  const Skeleton back = read_skeleton(dir / "human.json");
  CHECK(back.size() == 3);
  CHECK(back.hand_bone() == 2);
  CHECK(back.canonical_sdf().values() == s.canonical_sdf().values());
  CHECK(back.bones()[1].rest.translation() == s.bones()[1].rest.translation());
}
