#include "hoi/render.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/LU>

#include "hoi/parallel.hpp"

namespace hoi {

const char* component_name(Component c) {
  switch (c) {
    case Component::Human: return "human";
    case Component::Object: return "object";
    case Component::Scene: return "scene";
  }
  return "unknown";
}

std::optional<std::pair<double, double>> Aabb::intersect(const Ray& r, double near) const {
  if (empty()) return std::nullopt;
  double t0 = near;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (r.dir[a] == 0.0) {
      if (r.origin[a] < lo[a] || r.origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    const double inv = 1.0 / r.dir[a];
    double ta = (lo[a] - r.origin[a]) * inv;
    double tb = (hi[a] - r.origin[a]) * inv;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (!(t1 > t0)) return std::nullopt;
  return std::make_pair(t0, t1);
}

void Camera::validate() const {
  require(fx > 0 && fy > 0, ErrorCode::InvalidArgument, "camera focal lengths must be positive");
  require(width > 0 && height > 0, ErrorCode::InvalidArgument, "camera resolution must be positive");
}

Ray Camera::ray(int px, int py) const {
  const Vec3 d((px + 0.5 - cx) / fx, (py + 0.5 - cy) / fy, 1.0);
  return Ray{cam_to_world.translation(), cam_to_world.rotation() * d.normalized()};
}

std::optional<Eigen::Vector2d> Camera::project(const Vec3& x_world) const {
  const Vec3 p = cam_to_world.inverse() * x_world;
  if (p.z() <= 0) return std::nullopt;
  return Eigen::Vector2d(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
}

Camera Camera::with_extrinsic(const Posed& world_to_cam) const {
  Camera c = *this;
  c.cam_to_world = world_to_cam.inverse();
  return c;
}

Vec3 AlbedoGrid::at(const Vec3& x) const {
  return Vec3(channel[0].interpolate_clamped(x), channel[1].interpolate_clamped(x), channel[2].interpolate_clamped(x));
}

AlbedoGrid AlbedoGrid::constant(const Vec3& lo, const Vec3& hi, double spacing, const Vec3& rgb) {
  auto make = [&](double v) {
    return bake_field([v](const Vec3&) { return v; }, lo, Vec3::Constant(spacing),
                      {std::max(2, static_cast<int>(std::ceil((hi.x() - lo.x()) / spacing)) + 1),
                       std::max(2, static_cast<int>(std::ceil((hi.y() - lo.y()) / spacing)) + 1),
                       std::max(2, static_cast<int>(std::ceil((hi.z() - lo.z()) / spacing)) + 1)});
  };
  return AlbedoGrid{{make(rgb.x()), make(rgb.y()), make(rgb.z())}};
}

const SdfGrid* ComponentSet::grid(Component c) const {
  switch (c) {
    case Component::Human: return human ? &human->skeleton.canonical_sdf() : nullptr;
    case Component::Object: return object ? &object->sdf : nullptr;
    case Component::Scene: return scene ? &scene->sdf : nullptr;
  }
  return nullptr;
}

const AlbedoGrid* ComponentSet::albedo(Component c) const {
  switch (c) {
    case Component::Human: return human ? &human->albedo : nullptr;
    case Component::Object: return object ? &object->albedo : nullptr;
    case Component::Scene: return scene ? &scene->albedo : nullptr;
  }
  return nullptr;
}

FrameView::FrameView(const ComponentSet& cs, int frame, double box_pad) : cs_(&cs), frame_(frame) {
  if (cs.human) {
    const Skeleton& skel = cs.human->skeleton;
    human_.emplace(skel, cs.human->motion.at(frame));
    Aabb box;
    for (int b = 0; b < static_cast<int>(skel.size()); ++b) {
      // Blending keeps the skin within a few centimeters of the rigid bones.
      const double r = skel.bones()[b].radius + box_pad + 0.02;
      for (const Vec3& p : {skel.bone_start(b), skel.bone_end(b)}) {
        const Vec3 w = human_->skinning()[b] * p;
        box.expand(w - Vec3::Constant(r));
        box.expand(w + Vec3::Constant(r));
      }
    }
    boxes_[0] = box;
  }
  if (cs.object) {
    object_pose_ = cs.object->motion.at(frame);
    object_inverse_ = object_pose_.inverse();
    const SdfGrid& g = cs.object->sdf;
    Aabb box;
    for (int k = 0; k < 8; ++k) {
      const Vec3 c((k & 1) ? g.box_max().x() : g.box_min().x(), (k & 2) ? g.box_max().y() : g.box_min().y(),
                   (k & 4) ? g.box_max().z() : g.box_min().z());
      box.expand(object_pose_ * c);
    }
    box.pad(box_pad);
    boxes_[1] = box;
  }
  if (cs.scene) boxes_[2] = Aabb{cs.scene->sdf.box_min(), cs.scene->sdf.box_max()};
}

FieldPoint FrameView::eval(Component c, const Vec3& x) const {
  FieldPoint fp;
  const SdfGrid* grid = cs_->grid(c);
  if (!grid) return fp;
  switch (c) {
    case Component::Human: {
      const auto inv = human_->inverse(x, *grid);
      if (!inv) return fp;
      fp.x_canonical = inv->canonical;
      const Eigen::PartialPivLU<Mat3> lu(human_->jacobian(fp.x_canonical));
      fp.grad_to_world = lu.inverse().transpose();
      break;
    }
    case Component::Object:
      fp.x_canonical = object_inverse_ * x;
      fp.grad_to_world = object_pose_.rotation().matrix();
      break;
    case Component::Scene:
      fp.x_canonical = x;
      break;
  }
  const SdfSample s = grid->query(fp.x_canonical);
  fp.valid = true;
  fp.sdf = s.value;
  fp.grad_canonical = s.gradient;
  fp.color = cs_->albedo(c)->at(fp.x_canonical);
  return fp;
}

std::vector<RaySampleT> sample_ray(const std::array<std::optional<Aabb>, kNumComponents>& boxes, const Ray& ray,
                                   int n, std::uint64_t key, double near) {
  require(n >= 2, ErrorCode::InvalidArgument, "need at least 2 samples per component");
  std::vector<RaySampleT> out;
  for (int c = 0; c < kNumComponents; ++c) {
    if (!boxes[c]) continue;
    const auto span = boxes[c]->intersect(ray, near);
    if (!span) continue;
    const double len = (span->second - span->first) / n;
    for (int k = 0; k < n; ++k) {
      const double u = unit_from_hash(hash_key(key, static_cast<std::uint64_t>(c), static_cast<std::uint64_t>(k)));
      out.push_back({span->first + (k + u) * len, static_cast<Component>(c)});
    }
  }
  std::sort(out.begin(), out.end(), [](const RaySampleT& a, const RaySampleT& b) {
    return a.t < b.t || (a.t == b.t && a.component < b.component);
  });
  return out;
}

double sdf_to_density(double sdf, double beta) {
  require(beta > 0, ErrorCode::InvalidArgument, "beta must be positive");
  const double s = -sdf;
  const double psi = s <= 0 ? 0.5 * std::exp(s / beta) : 1.0 - 0.5 * std::exp(-s / beta);
  return psi / beta;
}

double sdf_to_density_derivative(double sdf, double beta) {
  return -0.5 / (beta * beta) * std::exp(-std::abs(sdf) / beta);
}

CompositeResult composite(std::span<const ShadedSample> samples, const CompositeConfig& cfg) {
  CompositeResult r;
  const std::size_t n = samples.size();
  r.delta.resize(n);
  r.alpha.resize(n);
  r.tau.resize(n);
  double trans = 1.0;
  double depth_sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i + 1 < n && samples[i + 1].t < samples[i].t)
      throw Error(ErrorCode::UnsortedSamples, "samples must be sorted by depth");
    r.delta[i] = i + 1 < n ? std::min(samples[i + 1].t - samples[i].t, cfg.far_cap) : cfg.far_cap;
    r.alpha[i] = 1.0 - std::exp(-samples[i].sigma * r.delta[i]);
    r.tau[i] = trans * r.alpha[i];
    trans *= 1.0 - r.alpha[i];
    r.color += r.tau[i] * samples[i].color;
    r.blended_normal += r.tau[i] * samples[i].normal;
    depth_sum += r.tau[i] * samples[i].t;
    r.acc += r.tau[i];
    r.weight[static_cast<std::size_t>(samples[i].component)] += r.tau[i];
  }
  r.acc = std::min(r.acc, 1.0);
  r.color += (1.0 - r.acc) * cfg.background;
  if (r.acc > 0) r.depth = depth_sum / r.acc;
  const double nn = r.blended_normal.norm();
  if (nn > 0) r.normal = r.blended_normal / nn;
  if (r.acc > 0.5) r.mask = static_cast<int>(std::max_element(r.weight.begin(), r.weight.end()) - r.weight.begin());
  return r;
}

std::vector<ShadedSampleGrad> composite_backward(std::span<const ShadedSample> samples, const CompositeResult& fwd,
                                                 const CompositeGrad& g, const CompositeConfig& cfg) {
  const std::size_t n = samples.size();
  std::vector<ShadedSampleGrad> out(n);
  const double nn = fwd.blended_normal.norm();
  Vec3 d_blended = Vec3::Zero();
  if (nn > 0) d_blended = (g.normal - fwd.normal * fwd.normal.dot(g.normal)) / nn;
  const bool has_depth = fwd.acc > 0 && std::isfinite(fwd.depth) && g.depth != 0;
  // s_j = dL/dtau_j
  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    s[j] = g.color.dot(samples[j].color - cfg.background) + d_blended.dot(samples[j].normal) +
           g.weight[static_cast<std::size_t>(samples[j].component)];
    if (has_depth) s[j] += g.depth * (samples[j].t - fwd.depth) / fwd.acc;
    out[j].color = fwd.tau[j] * g.color;
    out[j].normal = fwd.tau[j] * d_blended;
  }
  // dL/dsigma_i = delta_i * (s_i * T_{i+1} - sum_{j>i} s_j tau_j)
  std::vector<double> trans_next(n);
  double trans = 1.0;
  for (std::size_t j = 0; j < n; ++j) trans_next[j] = (trans *= 1.0 - fwd.alpha[j]);
  double suffix = 0;
  for (std::size_t k = n; k-- > 0;) {
    out[k].sigma = fwd.delta[k] * (s[k] * trans_next[k] - suffix);
    suffix += s[k] * fwd.tau[k];
  }
  return out;
}

double RenderConfig::beta_for(const ComponentSet& cs, Component c) const {
  if (beta > 0) return beta;
  const SdfGrid* g = cs.grid(c);
  return g ? 2.0 * g->min_spacing() : 0.01;
}

CompositeResult render_ray(const FrameView& view, const Ray& ray, const RenderConfig& cfg, std::uint64_t key,
                           RayTrace* trace) {
  const auto ts = sample_ray(view.boxes(), ray, cfg.samples_per_component, key, cfg.near);
  return render_samples(view, ray, ts, cfg, trace);
}

CompositeResult render_samples(const FrameView& view, const Ray& ray, std::span<const RaySampleT> ts,
                               const RenderConfig& cfg, RayTrace* trace) {
  std::array<double, kNumComponents> beta{};
  for (int c = 0; c < kNumComponents; ++c) beta[c] = cfg.beta_for(view.components(), static_cast<Component>(c));
  std::vector<ShadedSample> shaded(ts.size());
  if (trace) trace->samples.resize(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Vec3 x = ray.origin + ts[i].t * ray.dir;
    const FieldPoint fp = view.eval(ts[i].component, x);
    const int c = static_cast<int>(ts[i].component);
    ShadedSample& s = shaded[i];
    s.t = ts[i].t;
    s.component = c;
    if (fp.valid) {
      s.sigma = sdf_to_density(fp.sdf, beta[c]);
      s.color = fp.color;
      const Vec3 gw = fp.grad_to_world * fp.grad_canonical;
      s.normal = gw / std::max(gw.norm(), kNormalFloor);
    }
    if (trace) trace->samples[i] = TracedSample{ts[i].t, ts[i].component, x, fp, beta[c]};
  }
  CompositeResult r = composite(shaded, cfg.composite);
  if (trace) {
    trace->shaded = std::move(shaded);
    trace->result = r;
  }
  return r;
}

Image RenderBuffers::mask_image() const {
  static const Vec3 palette[kNumComponents] = {Vec3(0.9, 0.3, 0.2), Vec3(0.2, 0.8, 0.3), Vec3(0.3, 0.4, 0.9)};
  Image img(width(), height(), 3);
  for (int y = 0; y < height(); ++y)
    for (int x = 0; x < width(); ++x) {
      const int m = mask[static_cast<std::size_t>(y) * width() + x];
      if (m < 0) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = palette[m][c];
    }
  return img;
}

RenderBuffers render_image(const ComponentSet& components, const Camera& camera, int frame, const RenderConfig& cfg) {
  camera.validate();
  const FrameView view(components, frame, cfg.box_pad);
  const int w = camera.width, h = camera.height;
  RenderBuffers out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 3), Image(w, h, 1),
                    std::vector<int>(static_cast<std::size_t>(w) * h, -1)};
  parallel_for(static_cast<std::size_t>(w) * h, cfg.threads, [&](std::size_t p) {
    const int px = static_cast<int>(p % w), py = static_cast<int>(p / w);
    const CompositeResult r = render_ray(view, camera.ray(px, py), cfg, pixel_key(cfg.seed, frame, static_cast<int>(p)));
    for (int c = 0; c < 3; ++c) {
      out.color.at(px, py, c) = r.color[c];
      out.normal.at(px, py, c) = r.normal[c];
    }
    out.depth.at(px, py) = r.depth;
    out.acc.at(px, py) = r.acc;
    out.mask[p] = r.mask;
  });
  return out;
}

}  // namespace hoi
