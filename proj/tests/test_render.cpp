#include <doctest.h>

#include <algorithm>

#include "hoi/render.hpp"
#include "render_fixtures.hpp"
#include "support.hpp"

using namespace hoi;

namespace {

std::array<std::optional<Aabb>, kNumComponents> boxes(std::optional<Aabb> h, std::optional<Aabb> o,
                                                      std::optional<Aabb> s = std::nullopt) {
  return {h, o, s};
}

}  // namespace

TEST_CASE("sample_ray misses return nothing") {
  const Ray r{Vec3::Zero(), Vec3(0, 0, 1)};
  CHECK(sample_ray(boxes(Aabb{Vec3(5, 5, 5), Vec3(6, 6, 6)}, std::nullopt), r, 8, 1).empty());
  CHECK(sample_ray(boxes(std::nullopt, std::nullopt), r, 8, 1).empty());
}

TEST_CASE("sample_ray stratifies inside one box") {
  const Ray r{Vec3::Zero(), Vec3(0, 0, 1)};
  const auto s = sample_ray(boxes(std::nullopt, Aabb{Vec3(-1, -1, 1), Vec3(1, 1, 2)}), r, 4, 7);
  REQUIRE(s.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(s[i].t >= 1.0 + 0.25 * i);
    CHECK(s[i].t <= 1.0 + 0.25 * (i + 1));
    CHECK(s[i].component == Component::Object);
  }
}

TEST_CASE("overlapping boxes merge into one sorted list") {
  const Ray r{Vec3::Zero(), Vec3(0, 0, 1)};
  const auto b = boxes(Aabb{Vec3(-1, -1, 1), Vec3(1, 1, 3)}, Aabb{Vec3(-1, -1, 2), Vec3(1, 1, 4)},
                       Aabb{Vec3(-5, -5, -5), Vec3(5, 5, 5)});
  const auto s = sample_ray(b, r, 16, 3);
  REQUIRE(s.size() == 48);
  std::vector<double> oracle;
  for (const auto& x : s) oracle.push_back(x.t);
  std::vector<double> sorted = oracle;
  std::sort(sorted.begin(), sorted.end());
  CHECK(oracle == sorted);
}

TEST_CASE("laplace density closed forms") {
  CHECK(sdf_to_density(0.0, 0.01) == doctest::Approx(50.0).epsilon(1e-15));
  CHECK(sdf_to_density(1e6, 0.01) == 0.0);
  CHECK(sdf_to_density(-1e6, 0.01) == doctest::Approx(100.0));
  double prev = std::numeric_limits<double>::infinity();
  for (int k = -100; k <= 100; ++k) {
    const double v = sdf_to_density(k * 1e-3, 0.01);
    CHECK(v < prev);
    prev = v;
  }
  CHECK_THROWS_AS(sdf_to_density(0, 0), Error);
  for (double x : {-0.03, -0.001, 0.002, 0.05}) {
    const double h = 1e-8;
    const double fd = (sdf_to_density(x + h, 0.01) - sdf_to_density(x - h, 0.01)) / (2 * h);
    CHECK(sdf_to_density_derivative(x, 0.01) == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("composite of empty space is background") {
  std::vector<ShadedSample> s(5);
  for (int i = 0; i < 5; ++i) s[i].t = i;
  const CompositeConfig cfg{Vec3(0.1, 0.2, 0.3), 0.1};
  const auto r = composite(s, cfg);
  CHECK(r.color == Vec3(0.1, 0.2, 0.3));
  CHECK(r.acc == 0);
  CHECK(std::isinf(r.depth));
  CHECK(r.mask == -1);
}

TEST_CASE("a single opaque sample is returned exactly") {
  std::vector<ShadedSample> s{{2.5, 1, std::numeric_limits<double>::infinity(), Vec3(0.3, 0.6, 0.9), Vec3(0, 0, -1)}};
  const auto r = composite(s, {});
  CHECK(r.color == Vec3(0.3, 0.6, 0.9));
  CHECK(r.depth == 2.5);
  CHECK(r.acc == 1.0);
  CHECK(r.mask == 1);
}

TEST_CASE("an opaque near component hides the far one") {
  std::vector<ShadedSample> s;
  for (int i = 0; i < 10; ++i) s.push_back({1.0 + 0.05 * i, 1, i >= 3 ? 1e4 : 0.0, Vec3(1, 0, 0), Vec3::Zero()});
  for (int i = 0; i < 10; ++i) s.push_back({2.0 + 0.05 * i, 2, 50.0, Vec3(0, 0, 1), Vec3::Zero()});
  const auto r = composite(s, {});
  CHECK(r.weight[2] < 1e-12);
  CHECK(r.mask == 1);
  // sequential alpha oracle
  double trans = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double delta = i + 1 < s.size() ? std::min(s[i + 1].t - s[i].t, 0.1) : 0.1;
    const double a = 1 - std::exp(-s[i].sigma * delta);
    CHECK(r.tau[i] == doctest::Approx(trans * a).epsilon(1e-14));
    trans *= 1 - a;
  }
}

TEST_CASE("unsorted samples are rejected") {
  std::vector<ShadedSample> s{{2.0, 0, 1, Vec3::Zero(), Vec3::Zero()}, {1.0, 0, 1, Vec3::Zero(), Vec3::Zero()}};
  try {
    composite(s, {});
    FAIL("expected UnsortedSamples");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnsortedSamples);
  }
}

TEST_CASE("compositing weights stay in range") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int n = 0; n < 100; ++n) {
    std::vector<ShadedSample> s;
    double t = 0;
    for (int i = 0; i < 40; ++i) s.push_back({t += 0.05 * u(rng), i % 3, 200 * u(rng), Vec3::Ones(), Vec3::Zero()});
    const auto r = composite(s, {});
    CHECK(r.acc >= 0);
    CHECK(r.acc <= 1);
    for (double tau : r.tau) CHECK(tau >= 0);
  }
}

TEST_CASE("composite backward matches finite differences") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ShadedSample> s;
  double t = 1;
  for (int i = 0; i < 12; ++i)
    s.push_back({t += 0.03 + 0.04 * u(rng), i % 3, 30 * u(rng), test::random_vec(rng, 0, 1), test::random_vec(rng).normalized()});
  const CompositeConfig cfg{Vec3(0.5, 0.5, 0.5), 0.1};
  CompositeGrad g;
  g.color = test::random_vec(rng);
  g.depth = 0.7;
  g.normal = test::random_vec(rng);
  g.weight = {0.3, -0.2, 0.5};
  auto loss = [&](const std::vector<ShadedSample>& x) {
    const auto r = composite(x, cfg);
    return g.color.dot(r.color) + g.depth * r.depth + g.normal.dot(r.normal) + g.weight[0] * r.weight[0] +
           g.weight[1] * r.weight[1] + g.weight[2] * r.weight[2];
  };
  const auto back = composite_backward(s, composite(s, cfg), g, cfg);
  const double h = 1e-6;
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto a = s, b = s;
    a[i].sigma += h;
    b[i].sigma -= h;
    CHECK(back[i].sigma == doctest::Approx((loss(a) - loss(b)) / (2 * h)).epsilon(1e-5));
    for (int c = 0; c < 3; ++c) {
      a = s, b = s;
      a[i].color[c] += h;
      b[i].color[c] -= h;
      CHECK(back[i].color[c] == doctest::Approx((loss(a) - loss(b)) / (2 * h)).epsilon(1e-5));
      a = s, b = s;
      a[i].normal[c] += h;
      b[i].normal[c] -= h;
      CHECK(back[i].normal[c] == doctest::Approx((loss(a) - loss(b)) / (2 * h)).epsilon(1e-5));
    }
  }
}

TEST_CASE("camera rays are unit length and project back to their pixel") {
  Camera c = test::forward_camera(Vec3(0.1, 0.2, -1), 16);
  c.cam_to_world = Posed(Rot3d::ry(0.3), Vec3(0.1, 0.2, -1));
  const Ray r = c.ray(3, 11);
  CHECK(std::abs(r.dir.norm() - 1) < 1e-12);
  const auto px = c.project(r.origin + 2.0 * r.dir);
  REQUIRE(px.has_value());
  CHECK((*px - Eigen::Vector2d(3.5, 11.5)).norm() < 1e-9);
}

TEST_CASE("empty component set renders background") {
  const ComponentSet cs;
  RenderConfig cfg;
  cfg.composite.background = Vec3(0.2, 0.4, 0.6);
  const auto b = render_image(cs, test::forward_camera(Vec3::Zero(), 8), 0, cfg);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(b.color.at(x, y, 1) == 0.4);
      CHECK(b.acc.at(x, y) == 0);
      CHECK(std::isinf(b.depth.at(x, y)));
      CHECK(b.mask[y * 8 + x] == -1);
    }
}

TEST_CASE("rendered sphere depth matches the analytic intersection") {
  ComponentSet cs;
  cs.object = test::sphere_object(0.3, 0.02);
  const Camera cam = test::forward_camera(Vec3(0, 0, -1.5), 32);
  RenderConfig cfg;
  const auto b = render_image(cs, cam, 0, cfg);
  const double beta = cfg.beta_for(cs, Component::Object);
  std::vector<double> err;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double gt = test::ray_sphere(cam.ray(x, y), Vec3::Zero(), 0.3);
      if (!std::isfinite(gt)) continue;
      if (b.acc.at(x, y) > 0.5) CHECK(std::isfinite(b.depth.at(x, y)));
      err.push_back(std::abs(b.depth.at(x, y) - gt));
    }
  REQUIRE(!err.empty());
  std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
  CHECK(err[err.size() / 2] < 2 * beta);
}

TEST_CASE("object behind a wall is fully hidden") {
  ComponentSet cs;
  cs.object = test::sphere_object(0.2, 0.02, Posed::from_translation(Vec3(0, 0, 2)));
  // wall: solid for z > 1
  const auto wall = AnalyticSdf::half_space(Vec3(0, 0, -1), -1.0);
  const Vec3 lo(-2, -2, -0.5), hi(2, 2, 3.0);
  cs.scene = SceneComponent{bake_box(wall, lo, hi, 0.05), AlbedoGrid::constant(lo, hi, 0.5, Vec3(0.5, 0.5, 0.5))};
  const auto b = render_image(cs, test::forward_camera(Vec3::Zero(), 16), 0, {});
  for (int m : b.mask) CHECK(m == static_cast<int>(Component::Scene));
}

TEST_CASE("rendering is deterministic and thread-count independent") {
  ComponentSet cs;
  cs.object = test::sphere_object(0.3, 0.03);
  const Camera cam = test::forward_camera(Vec3(0, 0, -1.5), 16);
  RenderConfig cfg;
  cfg.seed = 5;
  const auto a = render_image(cs, cam, 0, cfg);
  cfg.threads = 3;
  const auto b = render_image(cs, cam, 0, cfg);
  CHECK(a.color.data == b.color.data);
  CHECK(a.acc.data == b.acc.data);
  CHECK(a.mask == b.mask);
}
