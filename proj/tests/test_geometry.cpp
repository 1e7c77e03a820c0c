#include <doctest.h>

#include "hoi/geometry.hpp"
#include "support.hpp"

using namespace hoi;

TEST_CASE("compose identities") {
  const Posed id;
  CHECK((id * id) == id);
  const Posed p(Rot3d::rz(M_PI / 2), Vec3(1, 0, 0));
  CHECK((p * id) == p);
}

TEST_CASE("compose Rz(90) twice maps x to -x") {
  const Posed r(Rot3d::rz(M_PI / 2), Vec3::Zero());
  const Vec3 x = (r * r) * Vec3(1, 0, 0);
  CHECK((x - Vec3(-1, 0, 0)).norm() < 1e-12);
  // 3x3 matrix product oracle
  Mat3 m;
  m << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK(((m * m) * Vec3(1, 0, 0) - x).norm() < 1e-12);
}

TEST_CASE("compose applies b then a and is associative") {
  std::mt19937_64 rng(1);
  for (int n = 0; n < 200; ++n) {
    const Posed a = test::random_pose(rng), b = test::random_pose(rng), c = test::random_pose(rng);
    const Vec3 x = test::random_vec(rng);
    CHECK(((a * b) * x - a * (b * x)).norm() < 1e-12);
    const Posed l = (a * b) * c, r = a * (b * c);
    CHECK(test::pose_error_angle(l, r) < 1e-9);
    CHECK(test::pose_error_translation(l, r) < 1e-9);
    const Posed e = a * a.inverse();
    CHECK(e.rotation().angle() < 1e-9);
    CHECK(e.translation().norm() < 1e-9);
  }
}

TEST_CASE("exp of zero twist is identity") {
  CHECK(Posed::exp(Vec6::Zero()) == Posed());
}

TEST_CASE("exp of a z rotation matches Rodrigues") {
  Vec6 xi = Vec6::Zero();
  xi(2) = M_PI / 2;
  const Posed p = Posed::exp(xi);
  const Vec3 k(0, 0, 1);
  const double th = M_PI / 2;
  const Mat3 rodrigues = Mat3::Identity() + std::sin(th) * hat(k) + (1 - std::cos(th)) * hat(k) * hat(k);
  CHECK((p.rotation().matrix() - rodrigues).norm() < 1e-12);
  CHECK(p.translation().norm() < 1e-15);
}

TEST_CASE("log exp round trip over random twists") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ang(0, 3.0);
  double worst = 0;
  for (int n = 0; n < 1000; ++n) {
    Vec3 w = test::random_vec(rng);
    w = w.normalized() * ang(rng);
    Vec6 xi;
    xi << w, test::random_vec(rng, -2, 2);
    worst = std::max(worst, (Posed::exp(xi).log() - xi).norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("log rejects the cut locus") {
  const Posed p(Rot3d::rx(M_PI), Vec3::Zero());
  CHECK_THROWS_AS(p.log(), Error);
  try {
    p.log();
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::AngleNearPi);
  }
}

TEST_CASE("quaternion stays canonical and unit under long composition chains") {
  std::mt19937_64 rng(3);
  Rot3d r;
  for (int n = 0; n < 100000; ++n) r = r * test::random_rot(rng, 0.5);
  CHECK(std::abs(r.quaternion().norm() - 1) < 1e-6);
  CHECK(r.quaternion().w() >= 0);
}

TEST_CASE("sim3 rejects non-positive scale") {
  CHECK_THROWS_AS(Sim3d(0.0, Rot3d(), Vec3::Zero()), Error);
  CHECK_THROWS_AS(Sim3d(-1.0, Rot3d(), Vec3::Zero()), Error);
}

TEST_CASE("umeyama on identical clouds") {
  std::mt19937_64 rng(5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back(test::random_vec(rng));
  const auto r = umeyama(pts, pts);
  CHECK(std::abs(r.transform.scale() - 1) < 1e-12);
  CHECK(r.transform.rotation().angle() < 1e-9);
  CHECK(r.transform.translation().norm() < 1e-12);
  CHECK(r.rms < 1e-12);
}

TEST_CASE("umeyama recovers a planted similarity") {
  std::mt19937_64 rng(11);
  const Sim3d gt(2.0, Rot3d::ry(M_PI / 6), Vec3(1, 2, 3));
  for (int n : {3, 10, 100}) {
    std::vector<Vec3> src, dst;
    for (int i = 0; i < n; ++i) {
      src.push_back(test::random_vec(rng));
      dst.push_back(gt * src.back());
    }
    const auto r = umeyama(src, dst);
    CHECK(std::abs(r.transform.scale() - 2.0) < 1e-9);
    CHECK(rotation_distance(r.transform.rotation(), gt.rotation()) < 1e-9);
    CHECK((r.transform.translation() - Vec3(1, 2, 3)).norm() < 1e-9);
    CHECK(r.rms < 1e-9);
  }
}

TEST_CASE("umeyama rejects collinear input") {
  const std::vector<Vec3> src{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2)};
  try {
    umeyama(src, src);
    FAIL("expected DegenerateConfiguration");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateConfiguration);
  }
}

TEST_CASE("umeyama residual grows with noise amplitude") {
  const Sim3d gt(1.3, Rot3d::rz(0.4), Vec3(0.5, -1, 2));
  std::vector<double> mean_rms;
  for (double amp : {0.0, 0.001, 0.01, 0.1}) {
    double sum = 0;
    for (int seed = 0; seed < 20; ++seed) {
      std::mt19937_64 rng(seed);
      std::normal_distribution<double> noise(0, 1);
      std::vector<Vec3> src, dst;
      for (int i = 0; i < 30; ++i) {
        src.push_back(test::random_vec(rng));
        dst.push_back(gt * src.back() + amp * Vec3(noise(rng), noise(rng), noise(rng)));
      }
      sum += umeyama(src, dst).rms;
    }
    mean_rms.push_back(sum / 20);
  }
  for (size_t i = 1; i < mean_rms.size(); ++i) CHECK(mean_rms[i] >= mean_rms[i - 1]);
}
