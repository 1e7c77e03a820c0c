#include "hoi/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "hoi/io.hpp"

namespace hoi {

namespace fs = std::filesystem;

namespace {

enum Stream : std::uint64_t { kGauge = 1, kObjNoise, kScnNoise, kFlickFrame, kFlickVertex, kProb, kRootNoise };

Posed look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ()) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r << x, y, z;
  return Posed(Rot3d::from_matrix(r), eye);
}

template <typename Key>
std::pair<std::size_t, double> bracket(const std::vector<Key>& keys, double frame) {
  require(!keys.empty(), ErrorCode::InvalidArgument, "interpolation needs at least one key");
  if (frame <= keys.front().frame) return {0, 0.0};
  if (frame >= keys.back().frame) return {keys.size() - 1, 0.0};
  std::size_t k = 0;
  while (keys[k + 1].frame <= frame) ++k;
  return {k, (frame - keys[k].frame) / static_cast<double>(keys[k + 1].frame - keys[k].frame)};
}

Rot3d slerp(const Rot3d& a, const Rot3d& b, double u) { return Rot3d(a.quaternion().slerp(u, b.quaternion())); }

template <typename Key>
void check_keys(const std::vector<Key>& keys, int frames, const char* what) {
  require(!keys.empty(), ErrorCode::InvalidArgument, std::string(what) + ": no keyframes");
  for (std::size_t k = 0; k < keys.size(); ++k) {
    require(keys[k].frame >= 0 && keys[k].frame < frames, ErrorCode::InvalidArgument,
            std::string(what) + ": keyframe outside [0, frames)");
    require(k == 0 || keys[k].frame > keys[k - 1].frame, ErrorCode::InvalidArgument,
            std::string(what) + ": keyframes must increase");
  }
}

nlohmann::json box_json(const BoxPrimitive& b) {
  return {{"center", io::vec3_to_json(b.center)}, {"half", io::vec3_to_json(b.half)}};
}
BoxPrimitive box_from_json(const nlohmann::json& j) {
  return {io::vec3_from_json(io::field(j, "center")), io::vec3_from_json(io::field(j, "half"))};
}
nlohmann::json noise_json(const NoiseSpec& n) { return {{"sigma_t", n.sigma_t}, {"sigma_r", n.sigma_r}}; }
NoiseSpec noise_from_json(const nlohmann::json& j) {
  return {io::get_or<double>(j, "sigma_t", 0.0), io::get_or<double>(j, "sigma_r", 0.0)};
}
nlohmann::json pose_keys_json(const std::vector<PoseKey>& keys) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& k : keys) a.push_back({{"frame", k.frame}, {"pose", io::pose_to_json(k.pose)}});
  return a;
}
std::vector<PoseKey> pose_keys_from_json(const nlohmann::json& j) {
  std::vector<PoseKey> keys;
  for (const auto& k : j) keys.push_back({io::get<int>(k, "frame"), io::pose_from_json(io::field(k, "pose"))});
  return keys;
}

AnalyticSdf scene_field(const SceneScript& s) {
  std::vector<AnalyticSdf> parts{
      AnalyticSdf::half_space(Vec3::UnitX(), s.room_lo.x()),  AnalyticSdf::half_space(-Vec3::UnitX(), -s.room_hi.x()),
      AnalyticSdf::half_space(Vec3::UnitY(), s.room_lo.y()),  AnalyticSdf::half_space(-Vec3::UnitY(), -s.room_hi.y()),
      AnalyticSdf::half_space(Vec3::UnitZ(), s.room_lo.z()),  AnalyticSdf::half_space(-Vec3::UnitZ(), -s.room_hi.z())};
  for (const auto& b : s.furniture) parts.push_back(AnalyticSdf::box(b.center, b.half));
  return AnalyticSdf::make_union(std::move(parts));
}

std::vector<Bone> clothed(const SceneScript& s) {
  std::vector<Bone> bones = s.bones;
  for (std::size_t b = 0; b < bones.size() && b < s.clothing.size(); ++b) bones[b].radius += s.clothing[b];
  return bones;
}

// Canonical points on the hand tip cap, within the grasp cone around the bone axis.
ContactPointSet grasp_points(const Skeleton& skel, const SceneScript& s) {
  const int h = skel.hand_bone();
  const Vec3 tip = skel.bone_end(h);
  const Vec3 a = (tip - skel.bone_start(h)).normalized();
  const Vec3 u = a.unitOrthogonal(), v = a.cross(u);
  const double r = skel.bones()[h].radius;
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  ContactPointSet out;
  for (int i = 0; i < s.grasp_vertices; ++i) {
    const double c = 1.0 - (1.0 - std::cos(s.grasp_cone)) * (i + 0.5) / s.grasp_vertices;
    const double sn = std::sqrt(std::max(0.0, 1.0 - c * c));
    const double phi = golden * i;
    out.vertex_id.push_back(i);
    out.canonical.push_back(tip + r * (c * a + sn * (std::cos(phi) * u + std::sin(phi) * v)));
  }
  return out;
}

nlohmann::json contact_points_json(const ContactPointSet& p) {
  nlohmann::json pts = nlohmann::json::array();
  for (std::size_t i = 0; i < p.size(); ++i) pts.push_back({{"id", p.vertex_id[i]}, {"x", io::vec3_to_json(p.canonical[i])}});
  return {{"points", pts}};
}

ContactPointSet contact_points_from_json(const nlohmann::json& j) {
  ContactPointSet p;
  std::set<int> seen;
  for (const auto& e : io::field(j, "points")) {
    const int id = io::get<int>(e, "id");
    require(seen.insert(id).second, ErrorCode::ParseError, "duplicate contact vertex id");
    p.vertex_id.push_back(id);
    p.canonical.push_back(io::vec3_from_json(io::field(e, "x")));
  }
  return p;
}

void write_albedo(const fs::path& path, const AlbedoGrid& a) {
  write_grids(path, {&a.channel[0], &a.channel[1], &a.channel[2]});
}

AlbedoGrid read_albedo(const fs::path& path) {
  auto g = read_grids(path);
  require(g.size() == 3, ErrorCode::ParseError, "albedo file must hold 3 grids: " + path.string());
  return AlbedoGrid{{std::move(g[0]), std::move(g[1]), std::move(g[2])}};
}

std::string frame_stem(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "renders/frame_%04d", frame);
  return buf;
}

bool in_range(int i, int first, int last) { return i >= first && i <= last; }

}  // namespace

Posed interpolate(const std::vector<PoseKey>& keys, double frame) {
  const auto [k, u] = bracket(keys, frame);
  if (u == 0.0) return keys[k].pose;
  const Posed& a = keys[k].pose;
  const Posed& b = keys[k + 1].pose;
  return Posed(slerp(a.rotation(), b.rotation(), u), (1 - u) * a.translation() + u * b.translation());
}

BodyPose interpolate(const std::vector<BodyKey>& keys, double frame) {
  const auto [k, u] = bracket(keys, frame);
  if (u == 0.0) return keys[k].pose;
  const BodyPose& a = keys[k].pose;
  const BodyPose& b = keys[k + 1].pose;
  BodyPose p;
  p.root_rotation = slerp(a.root_rotation, b.root_rotation, u);
  p.root_translation = (1 - u) * a.root_translation + u * b.root_translation;
  for (std::size_t j = 0; j < a.local.size(); ++j) p.local.push_back(slerp(a.local[j], b.local[j], u));
  return p;
}

void SceneScript::validate() const {
  require(frames >= 2, ErrorCode::InvalidArgument, "script needs at least 2 frames");
  require((room_hi.array() > room_lo.array()).all(), ErrorCode::InvalidArgument, "room box is empty");
  require(scene_spacing > 0 && object_spacing > 0 && human_spacing > 0, ErrorCode::InvalidArgument,
          "grid spacings must be positive");
  require((object.half.array() > 0).all(), ErrorCode::InvalidArgument, "object half extents must be positive");
  check_keys(object_keys, frames, "object");
  check_keys(camera_keys, frames, "camera");
  require(!bones.empty(), ErrorCode::InvalidArgument, "script has no skeleton");
  require(hand_bone >= 0 && hand_bone < static_cast<int>(bones.size()), ErrorCode::InvalidArgument,
          "hand_bone must name a bone");
  require(clothing.empty() || clothing.size() == bones.size(), ErrorCode::InvalidArgument,
          "clothing needs one entry per bone");
  check_keys(human_keys, frames, "human");
  for (const auto& k : human_keys)
    require(k.pose.local.size() == bones.size(), ErrorCode::InvalidArgument, "human keyframe has the wrong bone count");
  require(grasp_vertices > 0 && grasp_cone > 0 && grasp_cone < M_PI / 2, ErrorCode::InvalidArgument,
          "grasp cone out of range");
  require(width > 0 && height > 0 && fx > 0 && fy > 0, ErrorCode::InvalidArgument, "bad camera intrinsics");
  require(render_every >= 0 && samples_per_component > 0, ErrorCode::InvalidArgument, "bad render settings");
  for (const NoiseSpec* n : {&scene_noise, &object_noise, &defects.human_root})
    require(n->sigma_t >= 0 && n->sigma_r >= 0, ErrorCode::InvalidArgument, "noise must be non-negative");
  require(defects.hover_mm >= 0 && defects.penetration_mm >= 0, ErrorCode::InvalidArgument,
          "defect magnitudes must be non-negative");
  require(defects.flicker_rate >= 0 && defects.flicker_rate <= 1, ErrorCode::InvalidArgument,
          "flicker rate must lie in [0,1]");
}

nlohmann::json to_json(const SceneScript& s) {
  nlohmann::json furniture = nlohmann::json::array();
  for (const auto& b : s.furniture) furniture.push_back(box_json(b));
  nlohmann::json bones = nlohmann::json::array();
  for (const Bone& b : s.bones)
    bones.push_back({{"parent", b.parent}, {"rest", io::pose_to_json(b.rest)}, {"length", b.length}, {"radius", b.radius}});
  nlohmann::json human_keys = nlohmann::json::array();
  for (const auto& k : s.human_keys) human_keys.push_back({{"frame", k.frame}, {"pose", to_json(k.pose)}});
  const DefectSpec& d = s.defects;
  return {
      {"name", s.name},
      {"frames", s.frames},
      {"seed", s.seed},
      {"scene",
       {{"room_lo", io::vec3_to_json(s.room_lo)},
        {"room_hi", io::vec3_to_json(s.room_hi)},
        {"furniture", furniture},
        {"spacing", s.scene_spacing},
        {"pad", s.scene_pad},
        {"color", io::vec3_to_json(s.scene_color)}}},
      {"object",
       {{"box", box_json(s.object)},
        {"spacing", s.object_spacing},
        {"color", io::vec3_to_json(s.object_color)},
        {"keys", pose_keys_json(s.object_keys)}}},
      {"human",
       {{"bones", bones},
        {"hand_bone", s.hand_bone},
        {"sigma_skin", s.sigma_skin},
        {"spacing", s.human_spacing},
        {"clothing", s.clothing},
        {"color", io::vec3_to_json(s.human_color)},
        {"keys", human_keys},
        {"grasp_cone", s.grasp_cone},
        {"grasp_vertices", s.grasp_vertices}}},
      {"camera",
       {{"fx", s.fx},
        {"fy", s.fy},
        {"cx", s.cx},
        {"cy", s.cy},
        {"width", s.width},
        {"height", s.height},
        {"keys", pose_keys_json(s.camera_keys)},
        {"render_every", s.render_every},
        {"samples_per_component", s.samples_per_component}}},
      {"noise", {{"scene", noise_json(s.scene_noise)}, {"object", noise_json(s.object_noise)}}},
      {"defects",
       {{"hover_mm", d.hover_mm},
        {"hover_frames", {d.hover_first, d.hover_last}},
        {"penetration_mm", d.penetration_mm},
        {"penetration_frames", {d.penetration_first, d.penetration_last}},
        {"flicker_rate", d.flicker_rate},
        {"human_root_noise", noise_json(d.human_root)}}},
  };
}

SceneScript scene_script_from_json(const nlohmann::json& j) {
  SceneScript s;
  try {
    s.name = io::get_or<std::string>(j, "name", s.name);
    s.frames = io::get<int>(j, "frames");
    s.seed = io::get_or<std::uint64_t>(j, "seed", 0);
    const auto& sc = io::field(j, "scene");
    s.room_lo = io::vec3_from_json(io::field(sc, "room_lo"));
    s.room_hi = io::vec3_from_json(io::field(sc, "room_hi"));
    if (sc.contains("furniture"))
      for (const auto& b : sc["furniture"]) s.furniture.push_back(box_from_json(b));
    s.scene_spacing = io::get_or<double>(sc, "spacing", s.scene_spacing);
    s.scene_pad = io::get_or<double>(sc, "pad", s.scene_pad);
    if (sc.contains("color")) s.scene_color = io::vec3_from_json(sc["color"]);

    const auto& ob = io::field(j, "object");
    s.object = box_from_json(io::field(ob, "box"));
    s.object_spacing = io::get_or<double>(ob, "spacing", s.object_spacing);
    if (ob.contains("color")) s.object_color = io::vec3_from_json(ob["color"]);
    s.object_keys = pose_keys_from_json(io::field(ob, "keys"));

    const auto& hu = io::field(j, "human");
    for (const auto& b : io::field(hu, "bones"))
      s.bones.push_back({io::get<int>(b, "parent"), io::pose_from_json(io::field(b, "rest")), io::get<double>(b, "length"),
                         io::get<double>(b, "radius")});
    s.hand_bone = io::get<int>(hu, "hand_bone");
    s.sigma_skin = io::get_or<double>(hu, "sigma_skin", s.sigma_skin);
    s.human_spacing = io::get_or<double>(hu, "spacing", s.human_spacing);
    if (hu.contains("clothing")) s.clothing = hu["clothing"].get<std::vector<double>>();
    if (hu.contains("color")) s.human_color = io::vec3_from_json(hu["color"]);
    for (const auto& k : io::field(hu, "keys"))
      s.human_keys.push_back({io::get<int>(k, "frame"), body_pose_from_json(io::field(k, "pose"), s.bones.size())});
    s.grasp_cone = io::get_or<double>(hu, "grasp_cone", s.grasp_cone);
    s.grasp_vertices = io::get_or<int>(hu, "grasp_vertices", s.grasp_vertices);

    const auto& cam = io::field(j, "camera");
    s.fx = io::get<double>(cam, "fx");
    s.fy = io::get<double>(cam, "fy");
    s.cx = io::get<double>(cam, "cx");
    s.cy = io::get<double>(cam, "cy");
    s.width = io::get<int>(cam, "width");
    s.height = io::get<int>(cam, "height");
    s.camera_keys = pose_keys_from_json(io::field(cam, "keys"));
    s.render_every = io::get_or<int>(cam, "render_every", s.render_every);
    s.samples_per_component = io::get_or<int>(cam, "samples_per_component", s.samples_per_component);

    if (j.contains("noise")) {
      if (j["noise"].contains("scene")) s.scene_noise = noise_from_json(j["noise"]["scene"]);
      if (j["noise"].contains("object")) s.object_noise = noise_from_json(j["noise"]["object"]);
    }
    if (j.contains("defects")) {
      const auto& d = j["defects"];
      s.defects.hover_mm = io::get_or<double>(d, "hover_mm", 0.0);
      s.defects.penetration_mm = io::get_or<double>(d, "penetration_mm", 0.0);
      if (d.contains("hover_frames")) {
        s.defects.hover_first = d["hover_frames"].at(0).get<int>();
        s.defects.hover_last = d["hover_frames"].at(1).get<int>();
      }
      if (d.contains("penetration_frames")) {
        s.defects.penetration_first = d["penetration_frames"].at(0).get<int>();
        s.defects.penetration_last = d["penetration_frames"].at(1).get<int>();
      }
      s.defects.flicker_rate = io::get_or<double>(d, "flicker_rate", 0.0);
      if (d.contains("human_root_noise")) s.defects.human_root = noise_from_json(d["human_root_noise"]);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("scene script: ") + e.what());
  }
  s.validate();
  return s;
}

SceneScript standard_scene() {
  SceneScript s;
  s.name = "standard";
  s.frames = 120;
  s.furniture.push_back({Vec3(-1.5, 1.5, 0.5), Vec3(0.3, 0.3, 0.5)});  // cabinet

  s.object = {Vec3(0, 0, 0.15), Vec3(0.2, 0.15, 0.15)};
  const Posed start, end = Posed::from_translation(Vec3(1, 0, 0));
  s.object_keys = {{0, start}, {29, start}, {91, end}, {119, end}};

  s.bones = {
      {-1, Posed(), 0.3, 0.045},
      {0, Posed::from_translation(Vec3(0.3, 0, 0)), 0.25, 0.04},
      {1, Posed::from_translation(Vec3(0.55, 0, 0)), 0.1, 0.03},
  };
  s.hand_bone = 2;
  s.clothing = {0.005, 0.005, 0.0};

  // The hand tip (canonical x = 0.68) rests on the box's -x face while pushing.
  const double reach = 0.65 + 0.03;
  auto arm = [&](double root_x, double elbow) {
    BodyPose p = BodyPose::rest(3);
    p.root_translation = Vec3(root_x, 0, 0.15);
    p.local[0] = Rot3d::rz(-0.5 * elbow);
    p.local[1] = Rot3d::rz(elbow);
    return p;
  };
  const double touch0 = s.object.center.x() - s.object.half.x() - reach;
  s.human_keys = {{0, arm(touch0 - 0.15, 0.6)},
                  {15, arm(touch0 - 0.15, 0.6)},
                  {29, arm(touch0, 0.0)},
                  {91, arm(touch0 + 1.0, 0.0)},
                  {105, arm(touch0 + 0.85, 0.6)},
                  {119, arm(touch0 + 0.85, 0.6)}};

  // 90 degree orbit at 1.4 m around (0.5, 0), looking at the push.
  const Vec3 center(0.5, 0, 0), target(0.3, 0, 0.2);
  for (int f = 0; f <= 120; f += 10) {
    const int frame = std::min(f, 119);
    const double theta = (-135.0 + 90.0 * frame / 119.0) * M_PI / 180.0;
    const Vec3 eye = center + Vec3(1.4 * std::cos(theta), 1.4 * std::sin(theta), 1.0);
    s.camera_keys.push_back({frame, look_at(eye, target)});
  }
  return s;
}

fs::path DatasetManifest::path(const std::string& group, const std::string& key) const {
  require(doc.contains(group) && doc[group].contains(key), ErrorCode::ParseError,
          "manifest has no entry " + group + "." + key);
  return root / doc[group][key].get<std::string>();
}

std::vector<int> DatasetManifest::rendered_frames() const {
  std::vector<int> out;
  if (doc.contains("renders"))
    for (const auto& r : doc["renders"]) out.push_back(io::get<int>(r, "frame"));
  return out;
}

double gaussian_from_hash(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  const double u1 = 1.0 - unit_from_hash(hash_key(seed, a, b, 0));
  const double u2 = unit_from_hash(hash_key(seed, a, b, 1));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Posed perturb(const Posed& p, const NoiseSpec& n, std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  if (n.sigma_t == 0 && n.sigma_r == 0) return p;
  Vec6 eps;
  for (int k = 0; k < 6; ++k)
    eps[k] = (k < 3 ? n.sigma_r : n.sigma_t) * gaussian_from_hash(seed, stream, 8 * index + static_cast<std::uint64_t>(k));
  return p * Posed::exp(eps);
}

nlohmann::json write_buffers(const fs::path& dir, const std::string& stem, const RenderBuffers& b) {
  const std::string color = stem + "_color.pfm", preview = stem + "_color.ppm", depth = stem + "_depth.pfm",
                    normal = stem + "_normal.pfm", mask = stem + "_mask.pfm";
  fs::create_directories((dir / stem).parent_path());
  write_pfm(dir / color, b.color);
  write_ppm(dir / preview, b.color);
  write_pfm(dir / depth, b.depth);
  write_pfm(dir / normal, b.normal);
  Image m(b.width(), b.height(), 1);
  for (std::size_t i = 0; i < b.mask.size(); ++i) m.data[i] = b.mask[i];
  write_pfm(dir / mask, m);
  return {{"color", color}, {"color_preview", preview}, {"depth", depth}, {"normal", normal}, {"mask", mask}};
}

RenderBuffers read_buffers(const fs::path& dir, const nlohmann::json& entry) {
  RenderBuffers b;
  b.color = read_pfm(dir / io::get<std::string>(entry, "color"));
  b.depth = read_pfm(dir / io::get<std::string>(entry, "depth"));
  b.normal = read_pfm(dir / io::get<std::string>(entry, "normal"));
  const Image m = read_pfm(dir / io::get<std::string>(entry, "mask"));
  require(b.color.channels == 3 && b.normal.channels == 3 && b.depth.channels == 1 && m.channels == 1,
          ErrorCode::ParseError, "render buffers have unexpected channel counts");
  require(b.depth.width == b.color.width && b.depth.height == b.color.height && m.width == b.color.width &&
              m.height == b.color.height && b.normal.width == b.color.width && b.normal.height == b.color.height,
          ErrorCode::DimensionMismatch, "render buffers differ in size");
  b.acc = Image(b.color.width, b.color.height, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) {
    b.mask.push_back(static_cast<int>(std::lround(m.data[i])));
    b.acc.data[i] = b.mask.back() >= 0 ? 1.0 : 0.0;
  }
  return b;
}

DatasetManifest generate(const SceneScript& script, const fs::path& out_dir, int threads) {
  script.validate();
  const SceneScript& s = script;
  try {
    fs::create_directories(out_dir);
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorCode::IoFailure, "cannot create output directory " + out_dir.string() + ": " + e.what());
  }

  // Geometry.
  const SdfGrid scene_grid = bake_box(scene_field(s), s.room_lo - Vec3::Constant(s.scene_pad),
                                      s.room_hi + Vec3::Constant(s.scene_pad), s.scene_spacing);
  const Vec3 obj_pad = Vec3::Constant(3 * s.object_spacing);
  const SdfGrid object_grid = bake_box(AnalyticSdf::box(s.object.center, s.object.half),
                                       s.object.center - s.object.half - obj_pad, s.object.center + s.object.half + obj_pad,
                                       s.object_spacing);
  const Skeleton proxy = Skeleton::from_proxy(s.bones, s.human_spacing, s.sigma_skin, s.hand_bone);
  const Skeleton human = Skeleton::from_proxy(clothed(s), s.human_spacing, s.sigma_skin, s.hand_bone);
  const auto [h_lo, h_hi] = human.proxy_bounds(0.05);
  const AlbedoGrid scene_albedo = AlbedoGrid::constant(scene_grid.box_min(), scene_grid.box_max(), 0.5, s.scene_color);
  const AlbedoGrid object_albedo = AlbedoGrid::constant(object_grid.box_min(), object_grid.box_max(), 0.05, s.object_color);
  const AlbedoGrid human_albedo = AlbedoGrid::constant(h_lo, h_hi, 0.05, s.human_color);
  const ContactPointSet grasp = grasp_points(human, s);

  // Motion and cameras.
  std::vector<TimedPose> p_obj, cam_gt, cam_obs;
  HumanMotion motion_gt, motion_init;
  for (int i = 0; i < s.frames; ++i) {
    p_obj.push_back({i, interpolate(s.object_keys, i)});
    const Posed world_to_cam = interpolate(s.camera_keys, i).inverse();
    cam_gt.push_back({i, world_to_cam});
    cam_obs.push_back({i, perturb(world_to_cam, s.scene_noise, s.seed, kScnNoise, static_cast<std::uint64_t>(i))});
    motion_gt.index.push_back(i);
    motion_gt.poses.push_back(interpolate(s.human_keys, i));
  }
  const ObjectMotion p_obj_gt(p_obj);
  const CameraTrajectory c_scn_gt(FrameTag::SceneFrame, cam_gt);
  const CameraTrajectory c_scn(FrameTag::SceneFrame, cam_obs);

  auto u = [&](std::uint64_t k) { return unit_from_hash(hash_key(s.seed, kGauge, k)); };
  const Sim3d gauge(0.5 + 1.5 * u(0), Rot3d::exp(M_PI * Vec3(2 * u(1) - 1, 2 * u(2) - 1, 2 * u(3) - 1)),
                    0.2 * Vec3(2 * u(4) - 1, 2 * u(5) - 1, 2 * u(6) - 1));
  CameraTrajectory c_obj_clean = compose_apparent(c_scn_gt, p_obj_gt, gauge);
  std::vector<TimedPose> obj_obs = c_obj_clean.frames();
  for (auto& f : obj_obs) f.pose = perturb(f.pose, s.object_noise, s.seed, kObjNoise, static_cast<std::uint64_t>(f.index));
  const CameraTrajectory c_obj(FrameTag::ObjectFrame, obj_obs);

  // Contacts: frames where the object moves, with every grasp vertex active.
  ContactTimeline gt = motion_gate(p_obj_gt);
  for (auto& f : gt.frames)
    if (f.label == ContactLabel::Contact)
      for (int id : grasp.vertex_id) f.verts.push_back({id, 1.0, 1.0});
  ContactTimeline pred;
  const double flick = s.defects.flicker_rate;
  for (const auto& g : gt.frames) {
    const auto fi = static_cast<std::uint64_t>(g.index);
    ContactFrame f;
    f.index = g.index;
    const bool flip = unit_from_hash(hash_key(s.seed, kFlickFrame, fi)) < flick;
    f.label = (g.label == ContactLabel::Contact) != flip ? ContactLabel::Contact : ContactLabel::NoContact;
    f.raw_label = f.label;
    if (f.label == ContactLabel::Contact)
      for (int id : grasp.vertex_id) {
        const auto vi = static_cast<std::uint64_t>(id);
        const bool miss = unit_from_hash(hash_key(s.seed, kFlickVertex, fi, vi)) < flick;
        const double r = unit_from_hash(hash_key(s.seed, kProb, fi, vi));
        const double p = miss ? 0.3 * r : 0.7 + 0.3 * r;
        f.verts.push_back({id, p, p});
      }
    pred.frames.push_back(std::move(f));
  }

  // Initial human motion: planted defects along the object normal at the hand tip, then noise.
  const Vec3 tip_canonical = human.bone_end(s.hand_bone) +
                             human.bones()[s.hand_bone].radius *
                                 (human.bone_end(s.hand_bone) - human.bone_start(s.hand_bone)).normalized();
  for (int i = 0; i < s.frames; ++i) {
    BodyPose p = motion_gt.poses[static_cast<std::size_t>(i)];
    double offset = 0;
    if (in_range(i, s.defects.hover_first, s.defects.hover_last)) offset += s.defects.hover_mm * 1e-3;
    if (in_range(i, s.defects.penetration_first, s.defects.penetration_last)) offset -= s.defects.penetration_mm * 1e-3;
    if (offset != 0) {
      const Vec3 tip = PosedSkeleton(human, p).forward(tip_canonical);
      const Vec3 n = object_sdf_at(object_grid, p_obj_gt.at(i), tip).grad_world.normalized();
      p.root_translation += offset * n;
    }
    const Posed root = perturb(p.root(), s.defects.human_root, s.seed, kRootNoise, static_cast<std::uint64_t>(i));
    p.root_rotation = root.rotation();
    p.root_translation = root.translation();
    motion_init.index.push_back(i);
    motion_init.poses.push_back(p);
  }

  // Files.
  const fs::path& root = out_dir;
  io::write_json(root / "script.json", to_json(s));
  write_grid(root / "scene.sdfg", scene_grid);
  write_albedo(root / "scene_albedo.sdfg", scene_albedo);
  write_grid(root / "object.sdfg", object_grid);
  write_albedo(root / "object_albedo.sdfg", object_albedo);
  write_skeleton(root / "human_gt.json", human);
  write_skeleton(root / "human_proxy.json", proxy);
  write_albedo(root / "human_albedo.sdfg", human_albedo);
  io::write_json(root / "human_motion_gt.json", to_json(motion_gt));
  io::write_json(root / "human_motion_init.json", to_json(motion_init));
  io::write_json(root / "c_scn.json", to_json(c_scn));
  io::write_json(root / "c_scn_gt.json", to_json(c_scn_gt));
  io::write_json(root / "c_obj.json", to_json(c_obj));
  io::write_json(root / "p_obj_gt.json", to_json(p_obj_gt));
  io::write_json(root / "gauge_gt.json", to_json(gauge));
  io::write_json(root / "contact_points.json", contact_points_json(grasp));
  io::write_json(root / "contacts_gt.json", to_json(gt));
  io::write_json(root / "contacts_pred.json", to_json(pred));

  nlohmann::json renders = nlohmann::json::array();
  if (s.render_every > 0) {
    ComponentSet cs;
    cs.scene = SceneComponent{scene_grid, scene_albedo};
    cs.object = ObjectComponent{object_grid, p_obj_gt, object_albedo};
    cs.human = HumanComponent{human, motion_gt, human_albedo};
    Camera cam;
    cam.fx = s.fx;
    cam.fy = s.fy;
    cam.cx = s.cx;
    cam.cy = s.cy;
    cam.width = s.width;
    cam.height = s.height;
    RenderConfig cfg;
    cfg.samples_per_component = s.samples_per_component;
    cfg.seed = s.seed;
    cfg.threads = threads;
    for (int i = 0; i < s.frames; i += s.render_every) {
      const RenderBuffers b = render_image(cs, cam.with_extrinsic(*c_scn_gt.find(i)), i, cfg);
      nlohmann::json e = write_buffers(root, frame_stem(i), b);
      e["frame"] = i;
      renders.push_back(e);
    }
  }

  DatasetManifest m;
  m.root = root;
  m.doc = {
      {"schema_version", 1},
      {"name", s.name},
      {"frames", s.frames},
      {"script", "script.json"},
      {"camera", {{"fx", s.fx}, {"fy", s.fy}, {"cx", s.cx}, {"cy", s.cy}, {"width", s.width}, {"height", s.height}}},
      {"trajectories",
       {{"c_scn", "c_scn.json"},
        {"c_scn_gt", "c_scn_gt.json"},
        {"c_obj", "c_obj.json"},
        {"p_obj_gt", "p_obj_gt.json"},
        {"gauge_gt", "gauge_gt.json"}}},
      {"scene", {{"sdf", "scene.sdfg"}, {"albedo", "scene_albedo.sdfg"}}},
      {"object", {{"sdf", "object.sdfg"}, {"albedo", "object_albedo.sdfg"}}},
      {"human",
       {{"skeleton", "human_gt.json"},
        {"proxy", "human_proxy.json"},
        {"albedo", "human_albedo.sdfg"},
        {"motion_gt", "human_motion_gt.json"},
        {"motion_init", "human_motion_init.json"}}},
      {"contacts", {{"points", "contact_points.json"}, {"gt", "contacts_gt.json"}, {"pred", "contacts_pred.json"}}},
      {"renders", renders},
  };
  io::write_json(root / "manifest.json", m.doc);
  return m;
}

DatasetManifest read_manifest(const fs::path& manifest_json) {
  DatasetManifest m;
  m.root = manifest_json.parent_path();
  m.doc = io::read_json(manifest_json);
  require(io::get<int>(m.doc, "schema_version") == 1, ErrorCode::ParseError, "unsupported manifest schema_version");
  auto check = [&](const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorCode::IoFailure, "manifest references a missing file: " + p.string());
  };
  check(m.root / io::get<std::string>(m.doc, "script"));
  for (const char* group : {"trajectories", "scene", "object", "human", "contacts"})
    for (const auto& [key, value] : io::field(m.doc, group).items()) check(m.path(group, key));
  for (const auto& r : io::field(m.doc, "renders"))
    for (const char* key : {"color", "depth", "normal", "mask"}) check(m.root / io::get<std::string>(r, key));
  return m;
}

Camera Dataset::camera(int frame, bool ground_truth) const {
  const Posed* e = (ground_truth ? c_scn_gt : c_scn).find(frame);
  require(e != nullptr, ErrorCode::InvalidArgument, "no camera for frame " + std::to_string(frame));
  return intrinsics.with_extrinsic(*e);
}

ComponentSet Dataset::gt_components() const {
  ComponentSet cs;
  cs.scene = scene;
  cs.object = object;
  cs.human = human;
  return cs;
}

Dataset load_dataset(const fs::path& manifest_json) {
  DatasetManifest m = read_manifest(manifest_json);
  const auto& d = m.doc;
  auto json_at = [&](const char* g, const char* k) { return io::read_json(m.path(g, k)); };
  auto traj = [&](const char* k) { return trajectory_from_json(json_at("trajectories", k)); };

  SceneScript script = scene_script_from_json(io::read_json(m.root / io::get<std::string>(d, "script")));
  CameraTrajectory c_scn = traj("c_scn"), c_scn_gt = traj("c_scn_gt"), c_obj = traj("c_obj");
  ObjectMotion p_obj_gt = object_motion_from_json(json_at("trajectories", "p_obj_gt"));
  const Sim3d gauge = sim3_from_json(json_at("trajectories", "gauge_gt"));

  Skeleton human = read_skeleton(m.path("human", "skeleton"));
  Skeleton proxy = read_skeleton(m.path("human", "proxy"));
  HumanMotion motion_gt = human_motion_from_json(json_at("human", "motion_gt"), human.size());
  HumanMotion motion_init = human_motion_from_json(json_at("human", "motion_init"), human.size());
  require(proxy.size() == human.size(), ErrorCode::ParseError, "proxy and GT skeletons differ in bone count");

  Camera cam;
  const auto& c = io::field(d, "camera");
  cam.fx = io::get<double>(c, "fx");
  cam.fy = io::get<double>(c, "fy");
  cam.cx = io::get<double>(c, "cx");
  cam.cy = io::get<double>(c, "cy");
  cam.width = io::get<int>(c, "width");
  cam.height = io::get<int>(c, "height");

  // Cross-checks: every per-frame artifact covers the same frames.
  const std::vector<int> frames = c_scn_gt.indices();
  auto same = [&](const std::vector<int>& other, const char* what) {
    if (other != frames) throw Error(ErrorCode::FrameMismatch, std::string(what) + " frames differ from c_scn_gt");
  };
  same(c_scn.indices(), "c_scn");
  same(c_obj.indices(), "c_obj");
  same(p_obj_gt.indices(), "p_obj_gt");
  same(motion_gt.index, "human motion_gt");
  same(motion_init.index, "human motion_init");
  require(static_cast<int>(frames.size()) == io::get<int>(d, "frames"), ErrorCode::FrameMismatch,
          "manifest frame count differs from the trajectories");

  ContactPointSet points = contact_points_from_json(json_at("contacts", "points"));
  ContactTimeline cgt = contact_timeline_from_json(json_at("contacts", "gt"));
  ContactTimeline cpred = contact_timeline_from_json(json_at("contacts", "pred"));
  const std::set<int> ids(points.vertex_id.begin(), points.vertex_id.end());
  for (const ContactTimeline* t : {&cgt, &cpred}) {
    std::vector<int> idx;
    for (const auto& f : t->frames) {
      idx.push_back(f.index);
      for (const auto& v : f.verts)
        require(ids.count(v.id) == 1, ErrorCode::ParseError, "contact timeline references an unknown vertex");
    }
    same(idx, "contact timeline");
  }

  SceneComponent scene{read_grid(m.path("scene", "sdf")), read_albedo(m.path("scene", "albedo"))};
  ObjectComponent object{read_grid(m.path("object", "sdf")), p_obj_gt, read_albedo(m.path("object", "albedo"))};
  require(object.sdf.has_sign_change(), ErrorCode::ParseError, "object grid has no surface");
  HumanComponent hc{std::move(human), std::move(motion_gt), read_albedo(m.path("human", "albedo"))};

  std::vector<Observation> obs;
  for (const auto& r : io::field(d, "renders")) {
    const int f = io::get<int>(r, "frame");
    require(std::binary_search(frames.begin(), frames.end(), f), ErrorCode::FrameMismatch,
            "render of unknown frame " + std::to_string(f));
    RenderBuffers b = read_buffers(m.root, r);
    require(b.width() == cam.width && b.height() == cam.height, ErrorCode::DimensionMismatch,
            "render size differs from the camera");
    obs.push_back({f, std::move(b)});
  }

  Dataset ds{std::move(m),      std::move(script), cam,          std::move(c_scn),  std::move(c_scn_gt),
             std::move(c_obj),  std::move(p_obj_gt), gauge,      std::move(scene),  std::move(object),
             std::move(hc),     std::move(proxy),  std::move(motion_init), std::move(points), std::move(cgt),
             std::move(cpred),  std::move(obs)};
  return ds;
}

}  // namespace hoi
