#include "hoi/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "hoi/io.hpp"
#include "hoi/parallel.hpp"

namespace hoi {

namespace {

void validate_frames(const std::vector<TimedPose>& frames, const char* what) {
  require(!frames.empty(), ErrorCode::InvalidArgument, std::string(what) + ": no frames");
  for (size_t i = 1; i < frames.size(); ++i)
    require(frames[i].index > frames[i - 1].index, ErrorCode::InvalidArgument,
            std::string(what) + ": frame indices must be strictly increasing");
}

const Posed* find_frame(const std::vector<TimedPose>& frames, int index) {
  auto it = std::lower_bound(frames.begin(), frames.end(), index,
                             [](const TimedPose& f, int i) { return f.index < i; });
  if (it == frames.end() || it->index != index) return nullptr;
  return &it->pose;
}

std::vector<int> frame_indices(const std::vector<TimedPose>& frames) {
  std::vector<int> out;
  out.reserve(frames.size());
  for (const auto& f : frames) out.push_back(f.index);
  return out;
}

struct FramePair {
  int index;
  Posed obj;
  Posed scn;
};

std::vector<FramePair> match_frames(const CameraTrajectory& c_obj, const CameraTrajectory& c_scn) {
  require(c_obj.indices() == c_scn.indices(), ErrorCode::FrameMismatch,
          "object and scene trajectories cover different frame indices");
  std::vector<FramePair> pairs;
  pairs.reserve(c_obj.size());
  for (size_t i = 0; i < c_obj.size(); ++i)
    pairs.push_back({c_obj.frames()[i].index, c_obj.frames()[i].pose, c_scn.frames()[i].pose});
  return pairs;
}

bool is_inlier(const FrameResidual& r, const RansacConfig& cfg) {
  return r.distance < cfg.center_threshold && r.angle < cfg.angle_threshold;
}

std::vector<size_t> inliers_of(const std::vector<FramePair>& pairs, const std::vector<size_t>& candidates,
                               const Sim3d& gauge, const RansacConfig& cfg) {
  std::vector<size_t> out;
  for (size_t k : candidates)
    if (is_inlier(frame_residual(pairs[k].obj, pairs[k].scn, gauge), cfg)) out.push_back(k);
  return out;
}

// Truncated quadratic (MSAC) cost: a slightly shifted gauge can admit one
// more boundary frame than the exact one, but never at a lower cost.
double consensus_cost(const std::vector<FramePair>& pairs, const std::vector<size_t>& candidates, const Sim3d& gauge,
                      const RansacConfig& cfg) {
  double cost = 0;
  for (size_t k : candidates) {
    const FrameResidual r = frame_residual(pairs[k].obj, pairs[k].scn, gauge);
    const double d = r.distance / cfg.center_threshold, a = r.angle / cfg.angle_threshold;
    cost += is_inlier(r, cfg) ? std::max(d * d, a * a) : 1.0;
  }
  return cost;
}

std::optional<Sim3d> fit_centers(const std::vector<FramePair>& pairs, const std::vector<size_t>& subset) {
  std::vector<Vec3> src, dst;
  src.reserve(subset.size());
  dst.reserve(subset.size());
  for (size_t k : subset) {
    src.push_back(camera_center(pairs[k].obj));
    dst.push_back(camera_center(pairs[k].scn));
  }
  try {
    return umeyama(src, dst, true).transform;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateConfiguration) return std::nullopt;
    throw;
  }
}

struct Consensus {
  Sim3d gauge;
  std::vector<size_t> members;
};

// One RANSAC search over `candidates`. Hypotheses are seeded by
// (seed, phase, hypothesis) so the result does not depend on thread count.
std::optional<Consensus> ransac(const std::vector<FramePair>& pairs, const std::vector<size_t>& candidates,
                                const RansacConfig& cfg, int phase) {
  const size_t n = candidates.size();
  const auto sample_size = static_cast<size_t>(cfg.min_sample);
  if (n < sample_size) return std::nullopt;

  std::vector<int> counts(static_cast<size_t>(cfg.iterations), -1);
  std::vector<double> costs(static_cast<size_t>(cfg.iterations), std::numeric_limits<double>::infinity());
  std::vector<std::optional<Sim3d>> models(static_cast<size_t>(cfg.iterations));
  parallel_for(static_cast<size_t>(cfg.iterations), cfg.threads, [&](size_t h) {
    std::vector<size_t> sample;
    std::uint64_t draw = 0;
    while (sample.size() < sample_size) {
      const auto pick = static_cast<size_t>(unit_from_hash(hash_key(cfg.seed, static_cast<std::uint64_t>(phase), h, draw++)) *
                                            static_cast<double>(n));
      const size_t k = candidates[std::min(pick, n - 1)];
      if (std::find(sample.begin(), sample.end(), k) == sample.end()) sample.push_back(k);
    }
    auto model = fit_centers(pairs, sample);
    if (!model) return;
    counts[h] = static_cast<int>(inliers_of(pairs, candidates, *model, cfg).size());
    costs[h] = consensus_cost(pairs, candidates, *model, cfg);
    models[h] = model;
  });

  size_t best = 0;
  for (size_t h = 1; h < costs.size(); ++h)
    if (costs[h] < costs[best]) best = h;
  if (counts.empty() || counts[best] < static_cast<int>(sample_size)) return std::nullopt;

  // Refit on the consensus until the inlier set is stable.
  Consensus c{*models[best], inliers_of(pairs, candidates, *models[best], cfg)};
  double cost = costs[best];
  for (int iter = 0; iter < 10; ++iter) {
    auto refit = fit_centers(pairs, c.members);
    if (!refit) break;
    const double refit_cost = consensus_cost(pairs, candidates, *refit, cfg);
    if (refit_cost > cost) break;
    auto members = inliers_of(pairs, candidates, *refit, cfg);
    if (members.size() < sample_size) break;
    const bool stable = members == c.members;
    c = Consensus{*refit, std::move(members)};
    cost = refit_cost;
    if (stable) break;
  }
  return c;
}

std::vector<int> to_indices(const std::vector<FramePair>& pairs, const std::vector<size_t>& members) {
  std::vector<int> out;
  out.reserve(members.size());
  for (size_t k : members) out.push_back(pairs[k].index);
  std::sort(out.begin(), out.end());
  return out;
}

const char* tag_name(FrameTag t) { return t == FrameTag::SceneFrame ? "SceneFrame" : "ObjectFrame"; }

}  // namespace

CameraTrajectory::CameraTrajectory(FrameTag tag, std::vector<TimedPose> frames) : tag_(tag), frames_(std::move(frames)) {
  validate_frames(frames_, "CameraTrajectory");
}

std::vector<int> CameraTrajectory::indices() const { return frame_indices(frames_); }
const Posed* CameraTrajectory::find(int index) const { return find_frame(frames_, index); }

ObjectMotion::ObjectMotion(std::vector<TimedPose> frames) : frames_(std::move(frames)) {
  validate_frames(frames_, "ObjectMotion");
}

std::vector<int> ObjectMotion::indices() const { return frame_indices(frames_); }
const Posed* ObjectMotion::find(int index) const { return find_frame(frames_, index); }

const Posed& ObjectMotion::at(int index) const {
  const Posed* p = find(index);
  require(p != nullptr, ErrorCode::InvalidArgument, "object motion has no frame " + std::to_string(index));
  return *p;
}

FrameResidual frame_residual(const Posed& obj_extrinsic, const Posed& scn_extrinsic, const Sim3d& gauge, int index) {
  const Posed aligned = apply_gauge(gauge, obj_extrinsic);
  FrameResidual r;
  r.index = index;
  r.distance = (camera_center(aligned) - camera_center(scn_extrinsic)).norm();
  r.angle = rotation_distance(aligned.rotation(), scn_extrinsic.rotation());
  return r;
}

StaticFrameReport detect_static_frames(const CameraTrajectory& c_obj, const CameraTrajectory& c_scn,
                                       const RansacConfig& cfg) {
  require(c_obj.tag() == FrameTag::ObjectFrame && c_scn.tag() == FrameTag::SceneFrame, ErrorCode::InvalidArgument,
          "detect_static_frames expects (ObjectFrame, SceneFrame) trajectories");
  require(cfg.min_sample >= 3, ErrorCode::InvalidArgument, "RANSAC minimal sample must be at least 3");
  require(cfg.iterations > 0, ErrorCode::InvalidArgument, "RANSAC needs at least one iteration");
  const auto pairs = match_frames(c_obj, c_scn);
  require(pairs.size() >= static_cast<size_t>(cfg.min_sample), ErrorCode::InvalidArgument,
          "too few frames for RANSAC");

  const int min_inliers = cfg.min_inliers > 0
                              ? cfg.min_inliers
                              : std::max(3, static_cast<int>(std::ceil(0.1 * static_cast<double>(pairs.size()))));

  std::vector<size_t> remaining(pairs.size());
  std::iota(remaining.begin(), remaining.end(), size_t{0});

  StaticFrameReport report;
  const int max_phases = cfg.find_rest_phases ? 1 + std::max(0, cfg.max_rest_phases) : 1;
  for (int phase = 0; phase < max_phases; ++phase) {
    auto consensus = ransac(pairs, remaining, cfg, phase);
    if (!consensus || static_cast<int>(consensus->members.size()) < min_inliers) {
      if (phase == 0)
        throw Error(ErrorCode::NoConsensus,
                    "no similarity is supported by " + std::to_string(min_inliers) + " frames; object never static?");
      break;
    }
    report.rest_phases.push_back({consensus->gauge, to_indices(pairs, consensus->members)});
    std::vector<size_t> rest;
    std::set_difference(remaining.begin(), remaining.end(), consensus->members.begin(), consensus->members.end(),
                        std::back_inserter(rest));
    remaining = std::move(rest);
  }

  report.alignment = report.rest_phases.front().alignment;
  report.inlier_frames = report.rest_phases.front().frames;
  for (const auto& phase : report.rest_phases)
    report.static_frames.insert(report.static_frames.end(), phase.frames.begin(), phase.frames.end());
  std::sort(report.static_frames.begin(), report.static_frames.end());
  for (const auto& p : pairs) report.per_frame_residual.push_back(frame_residual(p.obj, p.scn, report.alignment, p.index));
  return report;
}

ObjectMotion disentangle(const CameraTrajectory& c_obj, const CameraTrajectory& c_scn, const Sim3d& align) {
  require(c_obj.tag() == FrameTag::ObjectFrame && c_scn.tag() == FrameTag::SceneFrame, ErrorCode::InvalidArgument,
          "disentangle expects (ObjectFrame, SceneFrame) trajectories");
  const auto pairs = match_frames(c_obj, c_scn);
  std::vector<TimedPose> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.index, p.scn.inverse() * apply_gauge(align, p.obj)});
  return ObjectMotion(std::move(out));
}

CameraTrajectory compose_apparent(const CameraTrajectory& c_scn, const ObjectMotion& p_obj, const Sim3d& align) {
  require(c_scn.tag() == FrameTag::SceneFrame, ErrorCode::InvalidArgument, "compose_apparent expects a SceneFrame trajectory");
  require(c_scn.indices() == p_obj.indices(), ErrorCode::FrameMismatch, "camera and object motion cover different frames");
  const Sim3d inv = align.inverse();
  std::vector<TimedPose> out;
  out.reserve(c_scn.size());
  for (size_t i = 0; i < c_scn.size(); ++i) {
    const auto& f = c_scn.frames()[i];
    out.push_back({f.index, apply_gauge(inv, f.pose * p_obj.frames()[i].pose)});
  }
  return CameraTrajectory(FrameTag::ObjectFrame, std::move(out));
}

nlohmann::json to_json(const CameraTrajectory& t) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : t.frames()) frames.push_back({{"i", f.index}, {"T_world_cam", io::pose_to_json(f.pose)}});
  return {{"frame_tag", tag_name(t.tag())}, {"frames", frames}};
}

CameraTrajectory trajectory_from_json(const nlohmann::json& j) {
  const auto tag = io::get<std::string>(j, "frame_tag");
  require(tag == "SceneFrame" || tag == "ObjectFrame", ErrorCode::ParseError, "unknown frame_tag '" + tag + "'");
  const auto& arr = io::field(j, "frames");
  require(arr.is_array(), ErrorCode::ParseError, "frames must be an array");
  std::vector<TimedPose> frames;
  for (const auto& f : arr) frames.push_back({io::get<int>(f, "i"), io::pose_from_json(io::field(f, "T_world_cam"))});
  try {
    return CameraTrajectory(tag == "SceneFrame" ? FrameTag::SceneFrame : FrameTag::ObjectFrame, std::move(frames));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

nlohmann::json to_json(const ObjectMotion& m) {
  nlohmann::json frames = nlohmann::json::array();
  for (const auto& f : m.frames()) frames.push_back({{"i", f.index}, {"T_world_obj", io::pose_to_json(f.pose)}});
  return {{"frames", frames}};
}

ObjectMotion object_motion_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.contains("frames") && j["frames"].is_array(), ErrorCode::ParseError, "frames must be an array");
  std::vector<TimedPose> frames;
  for (const auto& f : j["frames"]) frames.push_back({io::get<int>(f, "i"), io::pose_from_json(io::field(f, "T_world_obj"))});
  try {
    return ObjectMotion(std::move(frames));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

nlohmann::json to_json(const Sim3d& s) {
  return {{"scale", s.scale()}, {"rotation", io::rot_to_json(s.rotation())}, {"translation", io::vec3_to_json(s.translation())}};
}

Sim3d sim3_from_json(const nlohmann::json& j) {
  const double scale = io::get<double>(j, "scale");
  require(scale > 0, ErrorCode::ParseError, "Sim3 scale must be positive");
  return Sim3d(scale, io::rot_from_json(io::field(j, "rotation")), io::vec3_from_json(io::field(j, "translation")));
}

}  // namespace hoi
