#include <doctest.h>

#include "hoi/trajectory.hpp"
#include "support.hpp"

using namespace hoi;

namespace {

CameraTrajectory random_cameras(std::mt19937_64& rng, int n, double reach = 3.0) {
  std::vector<TimedPose> f;
  for (int i = 0; i < n; ++i) f.push_back({i, test::random_pose(rng, 3.0, reach)});
  return CameraTrajectory(FrameTag::SceneFrame, f);
}

ObjectMotion motion(int n, const std::function<Posed(int)>& fn) {
  std::vector<TimedPose> f;
  for (int i = 0; i < n; ++i) f.push_back({i, fn(i)});
  return ObjectMotion(f);
}

Sim3d random_gauge(std::mt19937_64& rng, double scale) { return Sim3d(scale, test::random_rot(rng), test::random_vec(rng, -3, 3)); }

}  // namespace

TEST_CASE("fully static object yields all inliers and the gauge") {
  std::mt19937_64 rng(1);
  const auto scn = random_cameras(rng, 20);
  const Sim3d gauge = random_gauge(rng, 1.7);
  const auto obj = compose_apparent(scn, motion(20, [](int) { return Posed(); }), gauge);
  const auto rep = detect_static_frames(obj, scn);
  CHECK(rep.inlier_frames.size() == 20);
  CHECK(std::abs(rep.alignment.scale() - gauge.scale()) < 1e-9);
  CHECK(rotation_distance(rep.alignment.rotation(), gauge.rotation()) < 1e-9);
  CHECK((rep.alignment.translation() - gauge.translation()).norm() < 1e-9);
}

TEST_CASE("planted motion after frame 9 is excluded") {
  std::mt19937_64 rng(2);
  const auto scn = random_cameras(rng, 20);
  const auto p = motion(20, [](int i) {
    if (i < 10) return Posed();
    return Posed(Rot3d::rz(0.1 * (i - 9)), Vec3(0.2 * (i - 9), 0, 0));
  });
  const auto obj = compose_apparent(scn, p, random_gauge(rng, 0.6));
  const auto rep = detect_static_frames(obj, scn);
  const std::vector<int> expected{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  CHECK(rep.inlier_frames == expected);
  CHECK(rep.static_frames == expected);
  for (const auto& r : rep.per_frame_residual) {
    if (r.index < 10) {
      CHECK(r.distance < 1e-9);
      CHECK(r.angle < 1e-9);
    }
  }
}

TEST_CASE("independent random object poses give NoConsensus") {
  std::mt19937_64 rng(3);
  const auto scn = random_cameras(rng, 30);
  const auto p = motion(30, [&](int) { return test::random_pose(rng); });
  const auto obj = compose_apparent(scn, p, random_gauge(rng, 1.0));
  try {
    detect_static_frames(obj, scn);
    FAIL("expected NoConsensus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoConsensus);
  }
}

TEST_CASE("detection is deterministic and threads do not change it") {
  std::mt19937_64 rng(4);
  const auto scn = random_cameras(rng, 40);
  std::normal_distribution<double> noise(0, 0.003);
  const auto p = motion(40, [&](int i) {
    if (i >= 15 && i < 30) return Posed(Rot3d::rz(0.05 * (i - 14)), Vec3(0.05 * (i - 14), 0, 0));
    return Posed(Rot3d(), Vec3(noise(rng), noise(rng), 0));
  });
  const auto obj = compose_apparent(scn, p, random_gauge(rng, 1.4));
  RansacConfig cfg;
  cfg.seed = 99;
  const auto a = detect_static_frames(obj, scn, cfg);
  const auto b = detect_static_frames(obj, scn, cfg);
  cfg.threads = 4;
  const auto c = detect_static_frames(obj, scn, cfg);
  CHECK(a.inlier_frames == b.inlier_frames);
  CHECK(a.inlier_frames == c.inlier_frames);
  CHECK(a.alignment.scale() == c.alignment.scale());
  CHECK(a.alignment.translation() == c.alignment.translation());
}

TEST_CASE("inlier set is invariant under re-basing the world frame") {
  std::mt19937_64 rng(5);
  const auto scn = random_cameras(rng, 24);
  const auto p = motion(24, [](int i) { return i < 12 ? Posed() : Posed(Rot3d(), Vec3(0.1 * (i - 11), 0, 0)); });
  const auto obj = compose_apparent(scn, p, random_gauge(rng, 0.9));
  const Posed q = test::random_pose(rng);
  std::vector<TimedPose> rebased;
  for (const auto& f : scn.frames()) rebased.push_back({f.index, f.pose * q.inverse()});
  const auto a = detect_static_frames(obj, scn);
  const auto b = detect_static_frames(obj, CameraTrajectory(FrameTag::SceneFrame, rebased));
  CHECK(a.inlier_frames == b.inlier_frames);
}

TEST_CASE("disentangle with identity everything") {
  std::vector<TimedPose> f;
  for (int i = 0; i < 5; ++i) f.push_back({i, Posed()});
  const auto m = disentangle(CameraTrajectory(FrameTag::ObjectFrame, f), CameraTrajectory(FrameTag::SceneFrame, f),
                             Sim3d());
  for (const auto& p : m.frames()) CHECK(p.pose == Posed());
}

TEST_CASE("disentangle recovers a sliding object") {
  std::mt19937_64 rng(6);
  const auto scn = random_cameras(rng, 30);
  const auto gt = motion(30, [](int i) { return Posed(Rot3d(), Vec3(i / 29.0, 0, 0)); });
  const Sim3d gauge = random_gauge(rng, 1.9);
  const auto m = disentangle(compose_apparent(scn, gt, gauge), scn, gauge);
  for (const auto& f : m.frames()) {
    CHECK(test::pose_error_angle(f.pose, gt.at(f.index)) < 1e-9);
    CHECK(test::pose_error_translation(f.pose, gt.at(f.index)) < 1e-9);
  }
}

TEST_CASE("round trip with random gauge and smooth motion") {
  std::mt19937_64 rng(7);
  const auto scn = random_cameras(rng, 40);
  const auto gt = motion(40, [](int i) { return Posed(Rot3d::ry(0.02 * i), Vec3(0.03 * i, std::sin(0.1 * i), 0)); });
  const Sim3d gauge(0.7, test::random_rot(rng), test::random_vec(rng));
  const auto m = disentangle(compose_apparent(scn, gt, gauge), scn, gauge);
  for (const auto& f : m.frames()) {
    CHECK(test::pose_error_angle(f.pose, gt.at(f.index)) < 1e-9);
    CHECK(test::pose_error_translation(f.pose, gt.at(f.index)) < 1e-9);
  }
}

TEST_CASE("compose_apparent with identity motion and gauge returns the scene trajectory") {
  std::mt19937_64 rng(8);
  const auto scn = random_cameras(rng, 6);
  const auto obj = compose_apparent(scn, motion(6, [](int) { return Posed(); }), Sim3d());
  for (size_t i = 0; i < 6; ++i) {
    CHECK(test::pose_error_angle(obj.frames()[i].pose, scn.frames()[i].pose) < 1e-12);
    CHECK(test::pose_error_translation(obj.frames()[i].pose, scn.frames()[i].pose) < 1e-12);
  }
}

TEST_CASE("noisy disentanglement median translation error") {
  std::vector<double> errors;
  for (int seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(100 + seed);
    // desk-scale: cameras within about 1.5 m of the object
    const auto scn = random_cameras(rng, 30, 0.9);
    const auto gt = motion(30, [](int i) { return Posed(Rot3d(), Vec3(i / 29.0, 0, 0)); });
    // reconstructions are centered near the object, so the gauge offset is small
    const Sim3d gauge(1.0, test::random_rot(rng), test::random_vec(rng, -0.2, 0.2));
    const auto obj = compose_apparent(scn, gt, gauge);
    std::normal_distribution<double> nt(0, 0.001), nr(0, 0.1 * M_PI / 180);
    std::vector<TimedPose> noisy;
    for (const auto& f : obj.frames()) {
      Vec6 eps;
      eps << nr(rng), nr(rng), nr(rng), nt(rng), nt(rng), nt(rng);
      noisy.push_back({f.index, f.pose * Posed::exp(eps)});
    }
    const auto m = disentangle(CameraTrajectory(FrameTag::ObjectFrame, noisy), scn, gauge);
    for (const auto& f : m.frames()) errors.push_back(test::pose_error_translation(f.pose, gt.at(f.index)));
  }
  std::nth_element(errors.begin(), errors.begin() + errors.size() / 2, errors.end());
  CHECK(errors[errors.size() / 2] < 0.005);
}

TEST_CASE("frame index mismatch is rejected") {
  std::vector<TimedPose> a{{0, Posed()}, {1, Posed()}, {2, Posed()}};
  std::vector<TimedPose> b{{0, Posed()}, {1, Posed()}, {3, Posed()}};
  try {
    disentangle(CameraTrajectory(FrameTag::ObjectFrame, a), CameraTrajectory(FrameTag::SceneFrame, b), Sim3d());
    FAIL("expected FrameMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::FrameMismatch);
  }
}

TEST_CASE("trajectory json round trip is exact") {
  std::mt19937_64 rng(9);
  const auto scn = random_cameras(rng, 7);
  const auto back = trajectory_from_json(nlohmann::json::parse(to_json(scn).dump()));
  CHECK(back.tag() == FrameTag::SceneFrame);
  for (size_t i = 0; i < 7; ++i) CHECK((back.frames()[i].pose.matrix() - scn.frames()[i].pose.matrix()).norm() < 1e-14);
  const Sim3d s(0.7, test::random_rot(rng), test::random_vec(rng));
  const Sim3d s2 = sim3_from_json(nlohmann::json::parse(to_json(s).dump()));
  CHECK(s2.scale() == s.scale());
  CHECK(s2.translation() == s.translation());
}
