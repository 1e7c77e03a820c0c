#include "hoi/optimize.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "hoi/io.hpp"

namespace hoi {

namespace {

constexpr std::size_t kChunk = 16;  // rays per reduction chunk, fixed so results ignore the thread count

void check_nonneg(double v, const char* name) {
  require(std::isfinite(v) && v >= 0, ErrorCode::InvalidArgument, std::string(name) + " must be finite and >= 0");
}

void check_ratios(const std::array<double, 4>& r, const char* name) {
  double sum = 0;
  for (double v : r) {
    check_nonneg(v, name);
    sum += v;
  }
  require(sum > 0, ErrorCode::InvalidArgument, std::string(name) + " must not all be zero");
}

SdfGrid* mutable_grid(ComponentSet& cs, Component c) {
  switch (c) {
    case Component::Human: return cs.human ? &cs.human->skeleton.mutable_canonical_sdf() : nullptr;
    case Component::Object: return cs.object ? &cs.object->sdf : nullptr;
    case Component::Scene: return cs.scene ? &cs.scene->sdf : nullptr;
  }
  return nullptr;
}

AlbedoGrid* mutable_albedo(ComponentSet& cs, Component c) {
  switch (c) {
    case Component::Human: return cs.human ? &cs.human->albedo : nullptr;
    case Component::Object: return cs.object ? &cs.object->albedo : nullptr;
    case Component::Scene: return cs.scene ? &cs.scene->albedo : nullptr;
  }
  return nullptr;
}

/// Scales a gradient block down to `limit` in norm.
template <typename V>
void clip(V& g, double limit) {
  const double n = g.norm();
  if (n > limit) g *= limit / n;
}

void clip_vector(std::vector<double>& g, double limit) {
  double sq = 0;
  for (double v : g) sq += v * v;
  const double n = std::sqrt(sq);
  if (n > limit)
    for (double& v : g) v *= limit / n;
}

}  // namespace

void LossWeights::validate() const {
  const double all[] = {rgb, mask, depth, normal, contact, collision, body, hand};
  const char* names[] = {"w_rgb", "w_mask", "w_depth", "w_normal", "w_contact", "w_collision", "w_body", "w_hand"};
  bool any = false;
  for (int i = 0; i < 8; ++i) {
    check_nonneg(all[i], names[i]);
    any = any || all[i] > 0;
  }
  require(any, ErrorCode::InvalidArgument, "all loss weights are zero");
}

void Schedule::validate() const {
  require(total_steps >= 0, ErrorCode::InvalidArgument, "total_steps must be >= 0");
  require(steps_per_epoch >= 1, ErrorCode::InvalidArgument, "steps_per_epoch must be >= 1");
  require(warmup_fraction >= 0 && warmup_fraction <= 1, ErrorCode::InvalidArgument, "warmup_fraction must be in [0,1]");
  require(stage1_epochs >= 0 && stage2_epochs >= 0 && stage1_epochs + stage2_epochs > 0, ErrorCode::InvalidArgument,
          "alternation block needs at least one epoch");
  require(early_epochs >= 0, ErrorCode::InvalidArgument, "early_epochs must be >= 0");
  check_ratios(ratios, "sampling ratios");
  check_ratios(early_ratios, "early sampling ratios");
}

int Schedule::epochs() const { return (total_steps + steps_per_epoch - 1) / steps_per_epoch; }

int Schedule::warmup_epochs() const { return static_cast<int>(std::ceil(warmup_fraction * epochs() - 1e-9)); }

Stage Schedule::stage_of_epoch(int epoch) const {
  const int w = warmup_epochs();
  if (!stage2_enabled || epoch < w) return Stage::Shape;
  return (epoch - w) % (stage1_epochs + stage2_epochs) < stage1_epochs ? Stage::Shape : Stage::Pose;
}

int Schedule::cycle_of_epoch(int epoch) const {
  const int w = warmup_epochs();
  return epoch < w ? 0 : 1 + (epoch - w) / (stage1_epochs + stage2_epochs);
}

void OptimConfig::validate() const {
  weights.validate();
  schedule.validate();
  phys.validate();
  for (double v : {lr.sdf, lr.albedo, lr.human_twist, lr.object_twist}) check_nonneg(v, "learning rate");
  require(rays_per_step >= 1, ErrorCode::InvalidArgument, "rays_per_step must be >= 1");
  require(surface_points >= 0 && body_samples >= 0 && hand_samples >= 0, ErrorCode::InvalidArgument,
          "sample counts must be >= 0");
  require(clip_norm > 0, ErrorCode::InvalidArgument, "clip_norm must be positive");
  require(divergence_factor > 1, ErrorCode::InvalidArgument, "divergence_factor must exceed 1");
  require(divergence_floor >= 0, ErrorCode::InvalidArgument, "divergence_floor must be >= 0");
  require(render.samples_per_component >= 2, ErrorCode::InvalidArgument, "need at least 2 samples per component");
}

nlohmann::json to_json(const OptimConfig& c) {
  const auto& w = c.weights;
  const auto& s = c.schedule;
  const auto& p = c.phys;
  return {
      {"weights",
       {{"rgb", w.rgb}, {"mask", w.mask}, {"depth", w.depth}, {"normal", w.normal}, {"contact", w.contact},
        {"collision", w.collision}, {"body", w.body}, {"hand", w.hand}}},
      {"schedule",
       {{"total_steps", s.total_steps}, {"steps_per_epoch", s.steps_per_epoch}, {"warmup_fraction", s.warmup_fraction},
        {"stage1_epochs", s.stage1_epochs}, {"stage2_epochs", s.stage2_epochs}, {"stage2_enabled", s.stage2_enabled},
        {"ratios", s.ratios}, {"early_ratios", s.early_ratios}, {"early_epochs", s.early_epochs}}},
      {"phys",
       {{"alpha1", p.alpha1}, {"alpha2", p.alpha2}, {"beta1", p.beta1}, {"beta2", p.beta2}, {"gamma1", p.gamma1},
        {"gamma2", p.gamma2}, {"sigma_win", p.sigma_win}, {"margin", p.margin}, {"min_span", p.min_span},
        {"wrist_band", p.wrist_band}, {"contact_cap", p.contact_cap}}},
      {"lr",
       {{"sdf", c.lr.sdf}, {"albedo", c.lr.albedo}, {"human_twist", c.lr.human_twist},
        {"object_twist", c.lr.object_twist}}},
      {"render",
       {{"samples_per_component", c.render.samples_per_component}, {"beta", c.render.beta}, {"near", c.render.near},
        {"box_pad", c.render.box_pad}, {"far_cap", c.render.composite.far_cap}, {"seed", c.render.seed}}},
      {"rays_per_step", c.rays_per_step},
      {"surface_points", c.surface_points},
      {"body_samples", c.body_samples},
      {"hand_samples", c.hand_samples},
      {"clip_norm", c.clip_norm},
      {"divergence_factor", c.divergence_factor},
      {"divergence_floor", c.divergence_floor},
      {"photometric_pose_gradients", c.photometric_pose_gradients},
      {"seed", c.seed},
      {"threads", c.threads},
  };
}

namespace {

// Reads keys present in `j` into the matching fields, rejecting unknown keys.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    require(j.is_object(), ErrorCode::ParseError, where_ + " must be an object");
  }
  template <typename T>
  Reader& opt(const char* key, T& out) {
    seen_.push_back(key);
    if (!j_.contains(key)) return *this;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, where_ + "." + key + ": " + e.what());
    }
    return *this;
  }
  const nlohmann::json* sub(const char* key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void done() const {
    for (const auto& [k, v] : j_.items())
      require(std::find(seen_.begin(), seen_.end(), k) != seen_.end(), ErrorCode::ParseError,
              "unknown key " + where_ + "." + k);
  }

 private:
  const nlohmann::json& j_;
  std::string where_;
  std::vector<std::string> seen_;
};

}  // namespace

OptimConfig optim_config_from_json(const nlohmann::json& j) {
  OptimConfig c;
  Reader r(j, "config");
  if (const auto* s = r.sub("weights")) {
    auto& w = c.weights;
    Reader(*s, "weights")
        .opt("rgb", w.rgb)
        .opt("mask", w.mask)
        .opt("depth", w.depth)
        .opt("normal", w.normal)
        .opt("contact", w.contact)
        .opt("collision", w.collision)
        .opt("body", w.body)
        .opt("hand", w.hand)
        .done();
  }
  if (const auto* s = r.sub("schedule")) {
    auto& sc = c.schedule;
    Reader(*s, "schedule")
        .opt("total_steps", sc.total_steps)
        .opt("steps_per_epoch", sc.steps_per_epoch)
        .opt("warmup_fraction", sc.warmup_fraction)
        .opt("stage1_epochs", sc.stage1_epochs)
        .opt("stage2_epochs", sc.stage2_epochs)
        .opt("stage2_enabled", sc.stage2_enabled)
        .opt("ratios", sc.ratios)
        .opt("early_ratios", sc.early_ratios)
        .opt("early_epochs", sc.early_epochs)
        .done();
  }
  if (const auto* s = r.sub("phys")) {
    auto& p = c.phys;
    Reader(*s, "phys")
        .opt("alpha1", p.alpha1)
        .opt("alpha2", p.alpha2)
        .opt("beta1", p.beta1)
        .opt("beta2", p.beta2)
        .opt("gamma1", p.gamma1)
        .opt("gamma2", p.gamma2)
        .opt("sigma_win", p.sigma_win)
        .opt("margin", p.margin)
        .opt("min_span", p.min_span)
        .opt("wrist_band", p.wrist_band)
        .opt("contact_cap", p.contact_cap)
        .done();
  }
  if (const auto* s = r.sub("lr")) {
    Reader(*s, "lr")
        .opt("sdf", c.lr.sdf)
        .opt("albedo", c.lr.albedo)
        .opt("human_twist", c.lr.human_twist)
        .opt("object_twist", c.lr.object_twist)
        .done();
  }
  if (const auto* s = r.sub("render")) {
    Reader(*s, "render")
        .opt("samples_per_component", c.render.samples_per_component)
        .opt("beta", c.render.beta)
        .opt("near", c.render.near)
        .opt("box_pad", c.render.box_pad)
        .opt("far_cap", c.render.composite.far_cap)
        .opt("seed", c.render.seed)
        .done();
  }
  r.opt("rays_per_step", c.rays_per_step)
      .opt("surface_points", c.surface_points)
      .opt("body_samples", c.body_samples)
      .opt("hand_samples", c.hand_samples)
      .opt("clip_norm", c.clip_norm)
      .opt("divergence_factor", c.divergence_factor)
      .opt("divergence_floor", c.divergence_floor)
      .opt("photometric_pose_gradients", c.photometric_pose_gradients)
      .opt("seed", c.seed)
      .opt("threads", c.threads)
      .done();
  c.validate();
  return c;
}

double LossTerms::weighted(const LossWeights& w) const {
  return w.rgb * rgb + w.mask * mask + w.depth * depth + w.normal * normal + w.contact * contact +
         w.collision * collision + w.body * body + w.hand * hand;
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  rgb += o.rgb;
  mask += o.mask;
  depth += o.depth;
  normal += o.normal;
  contact += o.contact;
  collision += o.collision;
  body += o.body;
  hand += o.hand;
  return *this;
}

OptimState initial_state(const ComponentSet& cs) {
  require(cs.human || cs.object, ErrorCode::InvalidArgument, "nothing to refine: no human and no object");
  OptimState s;
  if (cs.human) {
    s.frames = cs.human->motion.index;
    s.human = cs.human->motion.poses;
  } else {
    s.frames = cs.object->motion.indices();
  }
  if (cs.object)
    for (int f : s.frames) {
      const Posed* p = cs.object->motion.find(f);
      require(p != nullptr, ErrorCode::FrameMismatch, "object motion lacks frame " + std::to_string(f));
      s.object.push_back(*p);
    }
  return s;
}

void apply_state(const OptimState& s, ComponentSet& cs) {
  if (cs.human && !s.human.empty()) {
    cs.human->motion.index = s.frames;
    cs.human->motion.poses = s.human;
  }
  if (cs.object && !s.object.empty()) {
    std::vector<TimedPose> frames;
    for (std::size_t i = 0; i < s.frames.size(); ++i) frames.push_back({s.frames[i], s.object[i]});
    cs.object->motion = ObjectMotion(std::move(frames));
  }
}

PixelTarget pixel_target(const RenderBuffers& b, int px, int py) {
  PixelTarget t;
  const std::size_t p = static_cast<std::size_t>(py) * b.width() + px;
  for (int c = 0; c < 3; ++c) {
    t.color[c] = b.color.at(px, py, c);
    t.normal[c] = b.normal.at(px, py, c);
  }
  t.depth = b.depth.at(px, py, 0);
  t.mask = b.mask[p];
  return t;
}

namespace {

struct RayForward {
  RayTrace trace;
  LossTerms loss;
  CompositeGrad grad;  // of the weighted, scaled loss
};

RayForward forward_loss(const FrameView& view, const Ray& ray, std::span<const RaySampleT> samples,
                        const PixelTarget& t, const RenderConfig& rc, const LossWeights& w, double scale) {
  RayForward f;
  render_samples(view, ray, samples, rc, &f.trace);
  const CompositeResult& r = f.trace.result;
  const Vec3 dc = r.color - t.color;
  f.loss.rgb = dc.squaredNorm();
  f.grad.color = 2 * w.rgb * scale * dc;
  // Hinge on the mask decision rule (coverage above 0.5, then the heaviest
  // component), so it vanishes wherever the rendered mask agrees.
  double acc = 0;
  for (double v : r.weight) acc += v;
  const double gm = 2 * w.mask * scale;
  if (t.mask < 0) {
    const double d = std::max(acc - 0.5, 0.0);
    f.loss.mask = d * d;
    for (double& g : f.grad.weight) g = gm * d;
  } else {
    const double d = std::max(0.5 - acc, 0.0);
    f.loss.mask = d * d;
    for (double& g : f.grad.weight) g = -gm * d;
    for (int c = 0; c < kNumComponents; ++c) {
      if (c == t.mask) continue;
      const double e = std::max(r.weight[c] - r.weight[t.mask], 0.0);
      f.loss.mask += e * e;
      f.grad.weight[c] += gm * e;
      f.grad.weight[t.mask] -= gm * e;
    }
  }
  if (t.mask >= 0 && std::isfinite(t.depth) && r.acc > 0 && std::isfinite(r.depth)) {
    const double d = r.depth - t.depth;
    f.loss.depth = d * d;
    f.grad.depth = 2 * w.depth * scale * d;
  }
  if (t.mask >= 0 && t.normal.squaredNorm() > 0 && r.normal.squaredNorm() > 0) {
    const Vec3 d = r.normal - t.normal;
    f.loss.normal = d.squaredNorm();
    f.grad.normal = 2 * w.normal * scale * d;
  }
  return f;
}

}  // namespace

LossTerms ray_loss(const FrameView& view, const Ray& ray, std::span<const RaySampleT> samples, const PixelTarget& t,
                   const RenderConfig& rc) {
  return forward_loss(view, ray, samples, t, rc, LossWeights{}, 1.0).loss;
}

RayGradients ray_gradients(const FrameView& view, const Ray& ray, std::span<const RaySampleT> samples,
                           const PixelTarget& target, const RenderConfig& rc, const LossWeights& w, double scale,
                           GradientMode mode, bool photometric) {
  RayForward f = forward_loss(view, ray, samples, target, rc, w, scale);
  RayGradients out;
  out.loss = f.loss;
  const ComponentSet& cs = view.components();
  const bool poses = mode == GradientMode::Poses;
  if (poses) {
    // pose gradients flow through sample densities only
    f.grad.normal.setZero();
    if (!photometric) f.grad.color.setZero();
    if (cs.human) out.human = Eigen::VectorXd::Zero(pose_dof(cs.human->skeleton));
  }
  const auto gs = composite_backward(f.trace.shaded, f.trace.result, f.grad, rc.composite);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const TracedSample& ts = f.trace.samples[i];
    const FieldPoint& fp = ts.field;
    if (!fp.valid) continue;
    const int c = static_cast<int>(ts.component);
    const double dxi = gs[i].sigma * sdf_to_density_derivative(fp.sdf, ts.beta);
    if (poses) {
      if (dxi == 0) continue;
      if (ts.component == Component::Object) {
        const Vec3 gw = fp.grad_to_world * fp.grad_canonical;
        out.object.head<3>() += dxi * gw.cross(ts.x_world);
        out.object.tail<3>() -= dxi * gw;
      } else if (ts.component == Component::Human) {
        out.human += dxi * (view.human()->inverse_pose_jacobian(fp.x_canonical).transpose() * fp.grad_canonical);
      }
      continue;
    }
    const SdfGrid& grid = *cs.grid(ts.component);
    const TrilinearStencil st = grid.stencil(fp.x_canonical);
    Vec3 q = Vec3::Zero();
    const Vec3 gw = fp.grad_to_world * fp.grad_canonical;
    const double gn = gw.norm();
    if (gs[i].normal.squaredNorm() > 0) {
      if (gn >= kNormalFloor) {
        const Vec3 n = gw / gn;
        q = fp.grad_to_world.transpose() * ((gs[i].normal - n * n.dot(gs[i].normal)) / gn);
      } else {
        q = fp.grad_to_world.transpose() * (gs[i].normal / kNormalFloor);
      }
    }
    for (int k = 0; k < 8; ++k) {
      const double v = dxi * st.weight[k] + q.dot(st.dweight[k]);
      if (v != 0) out.sdf[c].push_back({static_cast<std::uint32_t>(st.index[k]), v});
    }
    if (gs[i].color.squaredNorm() > 0) {
      const AlbedoGrid& al = *cs.albedo(ts.component);
      const SdfGrid& a0 = al.channel[0];
      const TrilinearStencil sa = a0.stencil(fp.x_canonical.cwiseMax(a0.box_min()).cwiseMin(a0.box_max()));
      for (int ch = 0; ch < 3; ++ch)
        for (int k = 0; k < 8; ++k)
          if (sa.weight[k] != 0)
            out.albedo[c][ch].push_back({static_cast<std::uint32_t>(sa.index[k]), gs[i].color[ch] * sa.weight[k]});
    }
  }
  return out;
}

namespace {

enum Category { kHuman = 0, kObject = 1, kHand = 2, kScene = 3 };

struct PixelRef {
  std::uint32_t obs;
  std::uint32_t pixel;
};

double segment_distance_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (p - (a + t * ab)).norm();
}

/// Owns the sampling pools and fixed sample sets of one optimization call.
class Refiner {
 public:
  Refiner(RefineProblem& problem, OptimState& state, const OptimConfig& cfg)
      : pb_(problem), st_(state), cfg_(cfg), threads_(resolve_threads(cfg.threads)) {
    cfg_.validate();
    const auto& obs = pb_.observations;
    require(obs.cameras.size() == obs.frames.size() && obs.buffers.size() == obs.frames.size(),
            ErrorCode::DimensionMismatch, "observation arrays differ in length");
    for (std::size_t i = 0; i < st_.frames.size(); ++i) slot_[st_.frames[i]] = i;
    for (int f : obs.frames)
      require(slot_.count(f) != 0, ErrorCode::FrameMismatch, "observation frame " + std::to_string(f) + " has no pose");
    apply_state(st_, pb_.components);
    build_pools();
  }

  void run(Stage stage, int steps) {
    for (int k = 0; k < steps; ++k) stage == Stage::Shape ? shape_step() : pose_step();
  }

 private:
  void build_pools() {
    const auto& obs = pb_.observations;
    const Skeleton* skel = pb_.components.human ? &pb_.components.human->skeleton : nullptr;
    const int hand = skel ? skel->hand_bone() : -1;
    for (std::size_t o = 0; o < obs.size(); ++o) {
      const RenderBuffers& b = obs.buffers[o];
      const Camera& cam = obs.cameras[o];
      std::optional<Eigen::Vector2d> ha, hb;
      double hand_px = 0;
      if (hand >= 0) {
        const BodyPose& pose = st_.human[slot_.at(obs.frames[o])];
        const Posed w = bone_world(*skel, pose)[static_cast<std::size_t>(hand)];
        const Vec3 a = w.translation(), e = w * Vec3(skel->bones()[hand].length, 0, 0);
        ha = cam.project(a);
        hb = cam.project(e);
        const double z = (cam.cam_to_world.inverse() * (0.5 * (a + e))).z();
        if (z > 0) hand_px = cam.fx * (skel->bones()[hand].radius + 0.02) / z;
      }
      for (int y = 0; y < b.height(); ++y)
        for (int x = 0; x < b.width(); ++x) {
          const std::uint32_t p = static_cast<std::uint32_t>(y * b.width() + x);
          const int m = b.mask[p];
          const PixelRef ref{static_cast<std::uint32_t>(o), p};
          all_.push_back(ref);
          if (m == static_cast<int>(Component::Human)) {
            pool_[kHuman].push_back(ref);
            if (ha && hb && segment_distance_2d(Eigen::Vector2d(x + 0.5, y + 0.5), *ha, *hb) <= hand_px)
              pool_[kHand].push_back(ref);
          } else if (m == static_cast<int>(Component::Object)) {
            pool_[kObject].push_back(ref);
          } else {
            pool_[kScene].push_back(ref);
          }
        }
    }
  }

  std::vector<PixelRef> draw_rays() const {
    std::vector<PixelRef> out;
    if (all_.empty()) return out;
    const auto& s = cfg_.schedule;
    const int epoch = st_.step / s.steps_per_epoch;
    const auto& ratios = epoch < s.early_epochs ? s.early_ratios : s.ratios;
    const double total = ratios[0] + ratios[1] + ratios[2] + ratios[3];
    for (int r = 0; r < cfg_.rays_per_step; ++r) {
      const std::uint64_t h = hash_key(cfg_.seed, 0x7261797300ull + static_cast<std::uint64_t>(st_.step),
                                       static_cast<std::uint64_t>(r));
      double u = unit_from_hash(h) * total;
      int cat = 3;
      for (int c = 0; c < 4; ++c) {
        if (u < ratios[c]) {
          cat = c;
          break;
        }
        u -= ratios[c];
      }
      const auto& pool = pool_[cat].empty() ? all_ : pool_[cat];
      out.push_back(pool[splitmix64(h) % pool.size()]);
    }
    return out;
  }

  struct Chunk {
    LossTerms loss;
    std::vector<RayGradients> rays;
    std::vector<std::uint32_t> obs;
  };

  /// Renders the batch in fixed chunks, each chunk serial inside.
  std::vector<Chunk> render_batch(const std::vector<PixelRef>& rays, GradientMode mode) const {
    const auto& obs = pb_.observations;
    std::vector<FrameView> views;
    for (std::size_t o = 0; o < obs.size(); ++o) views.emplace_back(pb_.components, obs.frames[o], cfg_.render.box_pad);
    const double scale = 1.0 / static_cast<double>(rays.size());
    const std::size_t n_chunks = (rays.size() + kChunk - 1) / kChunk;
    std::vector<Chunk> chunks(n_chunks);
    parallel_for(n_chunks, threads_, [&](std::size_t ci) {
      Chunk& ch = chunks[ci];
      for (std::size_t r = ci * kChunk; r < std::min(rays.size(), (ci + 1) * kChunk); ++r) {
        const PixelRef ref = rays[r];
        const Camera& cam = obs.cameras[ref.obs];
        const int w = cam.width;
        const int px = static_cast<int>(ref.pixel) % w, py = static_cast<int>(ref.pixel) / w;
        const Ray ray = cam.ray(px, py);
        const FrameView& view = views[ref.obs];
        const auto samples = sample_ray(view.boxes(), ray, cfg_.render.samples_per_component,
                                        pixel_key(cfg_.render.seed, obs.frames[ref.obs], static_cast<int>(ref.pixel)),
                                        cfg_.render.near);
        RayGradients g = ray_gradients(view, ray, samples, pixel_target(obs.buffers[ref.obs], px, py), cfg_.render,
                                       cfg_.weights, scale, mode, cfg_.photometric_pose_gradients);
        ch.loss += g.loss;
        ch.rays.push_back(std::move(g));
        ch.obs.push_back(ref.obs);
      }
    });
    return chunks;
  }

  LossTerms mean_rendered(const std::vector<Chunk>& chunks, std::size_t n) const {
    LossTerms t;
    for (const Chunk& c : chunks) t += c.loss;
    const double s = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
    t.rgb *= s;
    t.mask *= s;
    t.depth *= s;
    t.normal *= s;
    return t;
  }

  void check_divergence(Stage stage, double total) {
    double& init = initial_[static_cast<int>(stage) - 1];
    if (!std::isfinite(total))
      throw Error(ErrorCode::DivergenceDetected, "non-finite loss at step " + std::to_string(st_.step));
    if (init < 0) {
      init = total;
      return;
    }
    if (total > cfg_.divergence_factor * std::max(init, cfg_.divergence_floor))
      throw Error(ErrorCode::DivergenceDetected, "loss " + std::to_string(total) + " exceeds " +
                                                     std::to_string(cfg_.divergence_factor) + "x the initial " +
                                                     std::to_string(init) + " at step " + std::to_string(st_.step) +
                                                     " (cycle " + std::to_string(cycle()) + ")");
  }

  int cycle() const { return cfg_.schedule.cycle_of_epoch(st_.step / cfg_.schedule.steps_per_epoch); }

  void shape_step() {
    ComponentSet& cs = pb_.components;
    const auto rays = draw_rays();
    const auto chunks = render_batch(rays, GradientMode::Grids);
    LossTerms terms = mean_rendered(chunks, rays.size());

    std::array<std::vector<double>, kNumComponents> g_sdf;
    std::array<std::vector<double>, kNumComponents> g_alb;  // channels back to back
    for (int c = 0; c < kNumComponents; ++c) {
      if (const SdfGrid* g = cs.grid(static_cast<Component>(c))) {
        g_sdf[c].assign(g->values().size(), 0.0);
        g_alb[c].assign(3 * cs.albedo(static_cast<Component>(c))->channel[0].values().size(), 0.0);
      }
    }
    for (const Chunk& ch : chunks)
      for (const RayGradients& r : ch.rays)
        for (int c = 0; c < kNumComponents; ++c) {
          for (const auto& e : r.sdf[c]) g_sdf[c][e.index] += e.value;
          const std::size_t stride = g_alb[c].size() / 3;
          for (int k = 0; k < 3; ++k)
            for (const auto& e : r.albedo[c][k]) g_alb[c][k * stride + e.index] += e.value;
        }

    const bool human = cs.human.has_value();
    const SdfGrid* hgp = human ? &cs.human->skeleton.canonical_sdf() : nullptr;
    if (human && pb_.proxy && cfg_.weights.body > 0 && cfg_.body_samples > 0) {
      const SdfGrid& hg = *hgp;
      if (body_.empty()) body_ = sample_body_interior(*pb_.proxy, cfg_.body_samples, cfg_.seed);
      std::vector<double> gb(hg.values().size(), 0.0);
      terms.body = body_prior_loss(hg, body_, cfg_.phys, &gb);
      for (std::size_t i = 0; i < gb.size(); ++i) g_sdf[0][i] += cfg_.weights.body * gb[i];
    }
    if (human && pb_.proxy && cfg_.weights.hand > 0 && cfg_.hand_samples > 0 && pb_.proxy->hand_bone() >= 0) {
      const SdfGrid& hg = *hgp;
      if (hand_.empty()) {
        const double r = pb_.proxy->bones()[static_cast<std::size_t>(pb_.proxy->hand_bone())].radius + 0.03;
        hand_ = sample_hand_region(*pb_.proxy, cfg_.hand_samples, r, cfg_.seed);
      }
      std::vector<double> gh(hg.values().size(), 0.0);
      terms.hand = hand_sdf_loss(hg, pb_.proxy->capsule_proxy(), hand_, wrist_falloff(*pb_.proxy, cfg_.phys.wrist_band),
                                 &gh);
      for (std::size_t i = 0; i < gh.size(); ++i) g_sdf[0][i] += cfg_.weights.hand * gh[i];
    }

    LossTerms active = terms;
    active.contact = active.collision = 0;
    const double total = active.weighted(cfg_.weights);
    check_divergence(Stage::Shape, total);

    for (int c = 0; c < kNumComponents; ++c) {
      if (g_sdf[c].empty()) continue;
      clip_vector(g_sdf[c], cfg_.clip_norm);
      clip_vector(g_alb[c], cfg_.clip_norm);
      auto& v = mutable_grid(cs, static_cast<Component>(c))->mutable_values();
      for (std::size_t i = 0; i < v.size(); ++i)
        if (g_sdf[c][i] != 0) v[i] = static_cast<float>(v[i] - cfg_.lr.sdf * g_sdf[c][i]);
      AlbedoGrid& al = *mutable_albedo(cs, static_cast<Component>(c));
      const std::size_t stride = g_alb[c].size() / 3;
      for (int k = 0; k < 3; ++k) {
        auto& a = al.channel[k].mutable_values();
        for (std::size_t i = 0; i < stride; ++i) {
          const double g = g_alb[c][k * stride + i];
          if (g != 0) a[i] = static_cast<float>(std::clamp(a[i] - cfg_.lr.albedo * g, 0.0, 1.0));
        }
      }
    }
    st_.log.push_back({st_.step, Stage::Shape, terms, total});
    ++st_.step;
  }

  void pose_step() {
    ComponentSet& cs = pb_.components;
    require(cs.human && cs.object, ErrorCode::InvalidArgument, "pose refinement needs a human and an object");
    const Skeleton& skel = cs.human->skeleton;
    const int dof = pose_dof(skel);
    const std::size_t nf = st_.frames.size();
    std::vector<Eigen::VectorXd> gh(nf, Eigen::VectorXd::Zero(dof));
    std::vector<Vec6> go(nf, Vec6::Zero());

    LossTerms terms;
    const bool rendered = cfg_.weights.mask > 0 || cfg_.weights.depth > 0 ||
                          (cfg_.photometric_pose_gradients && cfg_.weights.rgb > 0);
    if (rendered && !all_.empty()) {
      const auto rays = draw_rays();
      const auto chunks = render_batch(rays, GradientMode::Poses);
      terms = mean_rendered(chunks, rays.size());
      for (const Chunk& ch : chunks)
        for (std::size_t r = 0; r < ch.rays.size(); ++r) {
          const std::size_t s = slot_.at(pb_.observations.frames[ch.obs[r]]);
          if (ch.rays[r].human.size() == dof) gh[s] += ch.rays[r].human;
          go[s] += ch.rays[r].object;
        }
    }

    if (cfg_.weights.contact > 0 || cfg_.weights.collision > 0) {
      if (surface_.empty() && cfg_.surface_points > 0) surface_ = sample_proxy_surface(skel, cfg_.surface_points, cfg_.seed);
      if (vertex_slot_.empty())
        for (std::size_t i = 0; i < pb_.contact_points.size(); ++i) vertex_slot_[pb_.contact_points.vertex_id[i]] = i;
      std::vector<PhysicalLoss> phys(nf);
      parallel_for(nf, threads_, [&](std::size_t i) {
        std::vector<Vec3> pts;
        for (int id : pb_.contacts.active_vertices(st_.frames[i])) {
          if (cfg_.phys.contact_cap > 0 && static_cast<int>(pts.size()) >= cfg_.phys.contact_cap) break;
          const auto it = vertex_slot_.find(id);
          if (it != vertex_slot_.end()) pts.push_back(pb_.contact_points.canonical[it->second]);
        }
        phys[i] = physical_loss(PosedSkeleton(skel, st_.human[i]), cs.object->sdf, st_.object[i], pts, surface_,
                                cfg_.phys, cfg_.weights.contact, cfg_.weights.collision);
      });
      for (std::size_t i = 0; i < nf; ++i) {
        terms.contact += phys[i].contact / static_cast<double>(nf);
        terms.collision += phys[i].collision / static_cast<double>(nf);
        if (phys[i].d_human.size() == dof) gh[i] += phys[i].d_human;
        go[i] += phys[i].d_object;
      }
    }

    const LossWeights& w = cfg_.weights;
    const double total = w.mask * terms.mask + w.depth * terms.depth +
                         (cfg_.photometric_pose_gradients ? w.rgb * terms.rgb : 0.0) + w.contact * terms.contact +
                         w.collision * terms.collision;
    check_divergence(Stage::Pose, total);

    for (std::size_t i = 0; i < nf; ++i) {
      clip(gh[i], cfg_.clip_norm);
      clip(go[i], cfg_.clip_norm);
      if (gh[i].squaredNorm() > 0) st_.human[i] = apply_pose_delta(st_.human[i], -cfg_.lr.human_twist * gh[i]);
      if (go[i].squaredNorm() > 0) st_.object[i] = Posed::exp(-cfg_.lr.object_twist * go[i]) * st_.object[i];
    }
    apply_state(st_, cs);
    st_.log.push_back({st_.step, Stage::Pose, terms, total});
    ++st_.step;
  }

  RefineProblem& pb_;
  OptimState& st_;
  OptimConfig cfg_;
  int threads_;
  std::map<int, std::size_t> slot_;
  std::array<std::vector<PixelRef>, 4> pool_;
  std::vector<PixelRef> all_;
  std::vector<Vec3> body_, hand_, surface_;
  std::map<int, std::size_t> vertex_slot_;
  std::array<double, 2> initial_{-1.0, -1.0};
};

}  // namespace

void stage1_fit(RefineProblem& problem, OptimState& state, const OptimConfig& cfg, int steps) {
  Refiner(problem, state, cfg).run(Stage::Shape, steps);
}

void stage2_refine(RefineProblem& problem, OptimState& state, const OptimConfig& cfg, int steps) {
  Refiner(problem, state, cfg).run(Stage::Pose, steps);
}

void write_poses(const std::filesystem::path& path, const OptimState& s) {
  nlohmann::json frames = nlohmann::json::array();
  for (std::size_t i = 0; i < s.frames.size(); ++i)
    frames.push_back({{"index", s.frames[i]}, {"human", to_json(s.human[i])}, {"T_world_obj", io::pose_to_json(s.object[i])}});
  io::write_json(path, {{"schema_version", 1}, {"step", s.step}, {"frames", frames}});
}

void write_log_csv(const std::filesystem::path& path, std::span<const LogEntry> log) {
  std::ostringstream os;
  os.precision(10);
  os << "step,stage,rgb,mask,depth,normal,contact,collision,body,hand,total\n";
  for (const LogEntry& e : log) {
    const LossTerms& t = e.terms;
    os << e.step << ',' << static_cast<int>(e.stage) << ',' << t.rgb << ',' << t.mask << ',' << t.depth << ','
       << t.normal << ',' << t.contact << ',' << t.collision << ',' << t.body << ',' << t.hand << ',' << e.total
       << '\n';
  }
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::IoFailure, "cannot write " + path.string());
  f << os.str();
}

OptimState read_poses(const std::filesystem::path& path, std::size_t bones) {
  const nlohmann::json j = io::read_json(path);
  require(io::get<int>(j, "schema_version") == 1, ErrorCode::ParseError, path.string() + ": unsupported schema_version");
  OptimState s;
  s.step = io::get<int>(j, "step");
  for (const auto& f : io::field(j, "frames")) {
    s.frames.push_back(io::get<int>(f, "index"));
    s.human.push_back(body_pose_from_json(io::field(f, "human"), bones));
    s.object.push_back(io::pose_from_json(io::field(f, "T_world_obj")));
  }
  return s;
}

void write_checkpoint(const std::filesystem::path& dir, const ComponentSet& cs, const OptimState& s) {
  std::filesystem::create_directories(dir);
  // human, object, scene SDFs, then the albedo channels in the same order
  std::vector<const SdfGrid*> grids;
  for (int c = 0; c < kNumComponents; ++c)
    if (const SdfGrid* g = cs.grid(static_cast<Component>(c))) grids.push_back(g);
  for (int c = 0; c < kNumComponents; ++c)
    if (const AlbedoGrid* a = cs.albedo(static_cast<Component>(c)))
      for (const auto& ch : a->channel) grids.push_back(&ch);
  write_grids(dir / "grids.sdfg", grids);
  write_poses(dir / "poses.json", s);
  write_log_csv(dir / "log.csv", s.log);
}

OptimState run_schedule(RefineProblem& problem, const OptimConfig& cfg,
                        const std::optional<std::filesystem::path>& checkpoint_dir) {
  cfg.validate();
  OptimState state = initial_state(problem.components);
  const Schedule& s = cfg.schedule;
  if (s.total_steps == 0) return state;
  Refiner ref(problem, state, cfg);
  const int epochs = s.epochs();
  for (int e = 0; e < epochs; ++e) {
    const int steps = std::min(s.steps_per_epoch, s.total_steps - e * s.steps_per_epoch);
    ref.run(s.stage_of_epoch(e), steps);
    const bool cycle_end = e + 1 == epochs || s.cycle_of_epoch(e + 1) != s.cycle_of_epoch(e);
    if (checkpoint_dir && cycle_end)
      write_checkpoint(*checkpoint_dir / ("cycle_" + std::to_string(s.cycle_of_epoch(e))), problem.components, state);
  }
  apply_state(state, problem.components);
  return state;
}

std::vector<FrameContacts> contact_distances(const ComponentSet& cs, const ContactPointSet& points,
                                             const ContactTimeline& timeline) {
  require(cs.human && cs.object, ErrorCode::InvalidArgument, "contact distances need a human and an object");
  std::vector<FrameContacts> out;
  for (const ContactFrame& f : timeline.frames) {
    if (f.label != ContactLabel::Contact) continue;
    const Posed* p = cs.object->motion.find(f.index);
    if (!p) continue;
    const PosedSkeleton h(cs.human->skeleton, cs.human->motion.at(f.index));
    FrameContacts fc{f.index, points.vertex_id, {}};
    for (const Vec3& x : points.canonical) fc.xi.push_back(object_sdf_at(cs.object->sdf, *p, h.forward(x)).value);
    out.push_back(std::move(fc));
  }
  return out;
}

}  // namespace hoi
