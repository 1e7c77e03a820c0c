#include "hoi/contact.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "hoi/io.hpp"
#include "hoi/parallel.hpp"

namespace hoi {

namespace {

ScalarLoss tanh_sq(double xi, double scale, double width) {
  const double u = std::tanh(xi / width);
  return {scale * u * u, 2.0 * scale * u * (1.0 - u * u) / width};
}

const char* label_name(ContactLabel l) { return l == ContactLabel::Contact ? "Contact" : "NoContact"; }

ContactLabel parse_label(const std::string& s) {
  if (s == "Contact") return ContactLabel::Contact;
  if (s == "NoContact") return ContactLabel::NoContact;
  throw Error(ErrorCode::ParseError, "unknown contact label '" + s + "'");
}

struct Run {
  std::size_t begin, end;  // [begin, end)
};

std::vector<Run> runs_of(const std::vector<ContactLabel>& l) {
  std::vector<Run> runs;
  for (std::size_t i = 0; i < l.size();) {
    std::size_t j = i;
    while (j < l.size() && l[j] == l[i]) ++j;
    runs.push_back({i, j});
    i = j;
  }
  return runs;
}

// Portable uniform draws keyed by (seed, stream, counter).
double draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t k) { return unit_from_hash(hash_key(seed, stream, k)); }

Vec3 draw_in_box(std::uint64_t seed, std::uint64_t k, const Vec3& lo, const Vec3& hi) {
  return lo + Vec3(draw(seed, 0, k), draw(seed, 1, k), draw(seed, 2, k)).cwiseProduct(hi - lo);
}

}  // namespace

void PhysParams::validate() const {
  require(alpha1 > 0 && alpha2 > 0 && beta1 > 0 && beta2 > 0 && gamma1 > 0 && gamma2 > 0, ErrorCode::InvalidArgument,
          "physical loss scales must be positive");
  require(sigma_win > 0 && margin >= 0 && min_span > 0, ErrorCode::InvalidArgument, "filter parameters out of range");
  require(wrist_band > 0, ErrorCode::InvalidArgument, "wrist band must be positive");
  require(contact_cap >= 0, ErrorCode::InvalidArgument, "contact cap must be non-negative");
}

ScalarLoss contact_loss(double xi, const PhysParams& p) { return tanh_sq(xi, p.alpha1, p.alpha2); }
ScalarLoss collision_loss(double xi, const PhysParams& p) { return tanh_sq(xi, p.beta1, p.beta2); }
ScalarLoss contact_point_loss(double xi, const PhysParams& p) {
  return xi >= 0 ? contact_loss(xi, p) : collision_loss(xi, p);
}

const ContactFrame* ContactTimeline::find(int index) const {
  const auto it = std::lower_bound(frames.begin(), frames.end(), index,
                                   [](const ContactFrame& f, int i) { return f.index < i; });
  return it != frames.end() && it->index == index ? &*it : nullptr;
}

std::vector<int> ContactTimeline::active_vertices(int index) const {
  std::vector<int> out;
  const ContactFrame* f = find(index);
  if (!f || f->label != ContactLabel::Contact) return out;
  for (const auto& v : f->verts)
    if (v.p >= 0.5) out.push_back(v.id);
  return out;
}

std::vector<ContactLabel> ContactTimeline::labels() const {
  std::vector<ContactLabel> out;
  for (const auto& f : frames) out.push_back(f.label);
  return out;
}

ContactTimeline motion_gate(const ObjectMotion& p_obj, const MotionThresholds& th) {
  const auto& f = p_obj.frames();
  require(f.size() >= 2, ErrorCode::InvalidArgument, "motion gate needs at least 2 frames");
  ContactTimeline out;
  for (std::size_t i = 0; i < f.size(); ++i) {
    ContactFrame cf;
    cf.index = f[i].index;
    if (i + 1 < f.size()) {
      const Posed rel = f[i].pose.inverse() * f[i + 1].pose;
      const bool moving = rel.translation().norm() > th.translation || rel.rotation().angle() > th.rotation;
      cf.label = moving ? ContactLabel::Contact : ContactLabel::NoContact;
    } else {
      cf.label = out.frames.back().label;
    }
    cf.raw_label = cf.label;
    out.frames.push_back(cf);
  }
  return out;
}

std::vector<ContactLabel> flip_short_runs(std::vector<ContactLabel> labels, int min_span) {
  for (;;) {
    const auto runs = runs_of(labels);
    if (runs.size() <= 1) return labels;
    const Run* shortest = nullptr;
    for (const Run& r : runs)
      if (static_cast<int>(r.end - r.begin) < min_span && (!shortest || r.end - r.begin < shortest->end - shortest->begin))
        shortest = &r;
    if (!shortest) return labels;
    const ContactLabel flipped =
        labels[shortest->begin] == ContactLabel::Contact ? ContactLabel::NoContact : ContactLabel::Contact;
    for (std::size_t i = shortest->begin; i < shortest->end; ++i) labels[i] = flipped;
  }
}

std::vector<ContactLabel> dilate_contact(const std::vector<ContactLabel>& labels, int margin) {
  std::vector<ContactLabel> out = labels;
  const auto n = static_cast<int>(labels.size());
  for (int i = 0; i < n; ++i) {
    if (labels[static_cast<std::size_t>(i)] != ContactLabel::Contact) continue;
    for (int k = std::max(0, i - margin); k <= std::min(n - 1, i + margin); ++k)
      out[static_cast<std::size_t>(k)] = ContactLabel::Contact;
  }
  return out;
}

ContactTimeline temporal_filter(const ContactTimeline& timeline, const PhysParams& p) {
  p.validate();
  std::vector<ContactLabel> raw;
  for (const auto& f : timeline.frames) raw.push_back(f.raw_label);
  const auto labels = dilate_contact(flip_short_runs(raw, p.min_span), p.margin);

  // Raw probabilities per vertex and frame position; missing entries are 0.
  const std::size_t n = timeline.frames.size();
  std::map<int, std::vector<double>> prob;
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& v : timeline.frames[i].verts) {
      auto& row = prob[v.id];
      row.resize(n, 0.0);
      row[i] = v.raw_p;
    }
  const int half = p.sigma_win / 2;

  ContactTimeline out;
  out.frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ContactFrame f;
    f.index = timeline.frames[i].index;
    f.raw_label = raw[i];
    f.label = labels[i];
    const std::size_t lo = i >= static_cast<std::size_t>(half) ? i - half : 0;
    const std::size_t hi = std::min(n - 1, i + half);
    for (const auto& [id, row] : prob) {
      double sum = 0;
      bool present = false;
      for (std::size_t k = lo; k <= hi; ++k) {
        sum += row[k];
        present = present || row[k] > 0;
      }
      if (!present && row[i] == 0) continue;
      const double avg = sum / static_cast<double>(hi - lo + 1);
      const bool on = f.label == ContactLabel::Contact && avg >= 0.5;
      f.verts.push_back({id, on ? 1.0 : 0.0, row[i]});
    }
    out.frames.push_back(std::move(f));
  }
  return out;
}

nlohmann::json to_json(const ContactTimeline& t) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : t.frames) {
    nlohmann::json verts = nlohmann::json::array();
    for (const auto& v : f.verts) verts.push_back({{"id", v.id}, {"p", v.p}, {"raw_p", v.raw_p}});
    frames.push_back({{"i", f.index}, {"label", label_name(f.label)}, {"raw_label", label_name(f.raw_label)}, {"verts", verts}});
  }
  return {{"frames", frames}};
}

ContactTimeline contact_timeline_from_json(const nlohmann::json& j) {
  ContactTimeline t;
  for (const auto& f : io::field(j, "frames")) {
    ContactFrame cf;
    cf.index = io::get<int>(f, "i");
    cf.label = parse_label(io::get<std::string>(f, "label"));
    cf.raw_label = f.contains("raw_label") ? parse_label(io::get<std::string>(f, "raw_label")) : cf.label;
    if (f.contains("verts")) {
      for (const auto& v : io::field(f, "verts")) {
        const double p = io::get<double>(v, "p");
        require(std::isfinite(p), ErrorCode::ParseError, "contact probability must be finite");
        cf.verts.push_back({io::get<int>(v, "id"), p, io::get_or<double>(v, "raw_p", p)});
      }
    }
    require(t.frames.empty() || cf.index > t.frames.back().index, ErrorCode::ParseError,
            "contact timeline frame indices must increase");
    t.frames.push_back(std::move(cf));
  }
  return t;
}

double body_prior_loss(const SdfGrid& grid, std::span<const Vec3> samples, const PhysParams& p,
                       std::vector<double>* grad) {
  if (samples.empty()) {
    log_warning("body prior loss: empty sample set");
    return 0.0;
  }
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  double total = 0;
  for (const Vec3& x : samples) {
    const TrilinearStencil st = grid.stencil(x);
    double xi = st.outside_offset.norm();
    for (int k = 0; k < 8; ++k) xi += st.weight[k] * grid.values()[static_cast<std::size_t>(st.index[k])];
    if (xi < 0) continue;
    const ScalarLoss l = tanh_sq(xi, p.gamma1, p.gamma2);
    total += l.value * inv_n;
    if (grad)
      for (int k = 0; k < 8; ++k) (*grad)[static_cast<std::size_t>(st.index[k])] += l.derivative * inv_n * st.weight[k];
  }
  return total;
}

double WristFalloff::weight(const Vec3& x) const {
  const double s = (x - wrist).dot(axis);
  return std::clamp((s + 0.5 * band) / band, 0.0, 1.0);
}

WristFalloff wrist_falloff(const Skeleton& skel, double band) {
  const int h = skel.hand_bone();
  require(h >= 0, ErrorCode::InvalidArgument, "skeleton has no hand bone");
  const int arm = skel.bones()[h].parent >= 0 ? skel.bones()[h].parent : h;
  return WristFalloff{skel.bone_start(h), (skel.bone_end(arm) - skel.bone_start(arm)).normalized(), band};
}

double hand_sdf_loss(const SdfGrid& grid, const AnalyticSdf& proxy, std::span<const Vec3> samples,
                     const WristFalloff& falloff, std::vector<double>* grad) {
  if (samples.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(samples.size());
  double total = 0;
  for (const Vec3& x : samples) {
    const double w = falloff.weight(x);
    if (w == 0) continue;
    const TrilinearStencil st = grid.stencil(x);
    double xi = st.outside_offset.norm();
    for (int k = 0; k < 8; ++k) xi += st.weight[k] * grid.values()[static_cast<std::size_t>(st.index[k])];
    const double r = xi - proxy.value(x);
    total += w * std::abs(r) * inv_n;
    if (grad && r != 0) {
      const double g = (r > 0 ? 1.0 : -1.0) * w * inv_n;
      for (int k = 0; k < 8; ++k) (*grad)[static_cast<std::size_t>(st.index[k])] += g * st.weight[k];
    }
  }
  return total;
}

std::vector<Vec3> sample_body_interior(const Skeleton& skel, int n, std::uint64_t seed) {
  const auto [lo, hi] = skel.proxy_bounds(0.0);
  // half a voxel deep, so interpolation error near the skin cannot read as outside
  const double depth = 0.5 * skel.canonical_sdf().min_spacing();
  std::vector<Vec3> out;
  for (std::uint64_t k = 0; static_cast<int>(out.size()) < n && k < 1000ull * static_cast<std::uint64_t>(n) + 1000; ++k) {
    const Vec3 x = draw_in_box(seed, k, lo, hi);
    if (skel.capsule_proxy().value(x) < -depth) out.push_back(x);
  }
  return out;
}

std::vector<Vec3> sample_hand_region(const Skeleton& skel, int n, double radius, std::uint64_t seed) {
  const int h = skel.hand_bone();
  require(h >= 0, ErrorCode::InvalidArgument, "skeleton has no hand bone");
  const Vec3 a = skel.bone_start(h), b = skel.bone_end(h);
  const Vec3 lo = a.cwiseMin(b) - Vec3::Constant(radius), hi = a.cwiseMax(b) + Vec3::Constant(radius);
  const AnalyticSdf seg = AnalyticSdf::capsule(a, b, radius);
  std::vector<Vec3> out;
  for (std::uint64_t k = 0; static_cast<int>(out.size()) < n && k < 1000ull * static_cast<std::uint64_t>(n) + 1000; ++k) {
    const Vec3 x = draw_in_box(seed ^ 0x5bd1e995ull, k, lo, hi);
    if (seg.value(x) < 0) out.push_back(x);
  }
  return out;
}

std::vector<Vec3> sample_proxy_surface(const Skeleton& skel, int n, std::uint64_t seed) {
  const auto [lo, hi] = skel.proxy_bounds(0.0);
  const AnalyticSdf& proxy = skel.capsule_proxy();
  std::vector<Vec3> out;
  for (std::uint64_t k = 0; static_cast<int>(out.size()) < n && k < 1000ull * static_cast<std::uint64_t>(n) + 1000; ++k) {
    const Vec3 x = draw_in_box(seed ^ 0x27d4eb2full, k, lo, hi);
    const SdfSample s = proxy.query(x);
    if (s.degenerate || std::abs(s.value) > 0.03) continue;
    const Vec3 p = x - s.value * s.gradient;
    if (std::abs(proxy.value(p)) < 1e-9) out.push_back(p);
  }
  return out;
}

ObjectSdfAt object_sdf_at(const SdfGrid& grid, const Posed& pose, const Vec3& x) {
  const SdfSample s = grid.query(pose.inverse() * x);
  ObjectSdfAt o;
  o.value = s.value;
  o.grad_world = pose.rotation() * s.gradient;
  o.d_twist.head<3>() = o.grad_world.cross(x);
  o.d_twist.tail<3>() = -o.grad_world;
  return o;
}

PhysicalLoss physical_loss(const PosedSkeleton& human, const SdfGrid& object_sdf, const Posed& object_pose,
                           std::span<const Vec3> contact_canonical, std::span<const Vec3> surface_canonical,
                           const PhysParams& p, double w_contact, double w_collision) {
  PhysicalLoss out;
  out.d_human = Eigen::VectorXd::Zero(pose_dof(human.skeleton()));
  auto accumulate = [&](const Vec3& xc, const ScalarLoss& l, const ObjectSdfAt& o, double scale) {
    if (l.derivative == 0 || scale == 0) return;
    const double g = scale * l.derivative;
    out.d_human += g * (o.grad_world.transpose() * human.pose_jacobian(xc)).transpose();
    out.d_object += g * o.d_twist;
  };
  if (!contact_canonical.empty()) {
    const double inv = 1.0 / static_cast<double>(contact_canonical.size());
    for (const Vec3& xc : contact_canonical) {
      const ObjectSdfAt o = object_sdf_at(object_sdf, object_pose, human.forward(xc));
      const ScalarLoss l = contact_point_loss(o.value, p);
      out.contact += l.value * inv;
      accumulate(xc, l, o, w_contact * inv);
    }
  }
  if (!surface_canonical.empty()) {
    const double inv = 1.0 / static_cast<double>(surface_canonical.size());
    for (const Vec3& xc : surface_canonical) {
      const ObjectSdfAt o = object_sdf_at(object_sdf, object_pose, human.forward(xc));
      if (o.value >= 0) continue;
      const ScalarLoss l = collision_loss(o.value, p);
      out.collision += l.value * inv;
      accumulate(xc, l, o, w_collision * inv);
    }
  }
  return out;
}

}  // namespace hoi
