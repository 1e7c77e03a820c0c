#include "hoi/pipeline.hpp"

#include <cmath>

namespace hoi {

ObjectMotion recover_object_motion(const Dataset& ds, const RansacConfig& rc) {
  const StaticFrameReport rep = detect_static_frames(ds.c_obj, ds.c_scn, rc);
  return disentangle(ds.c_obj, ds.c_scn, rep.alignment);
}

std::array<Vec3, 2> fit_constant_albedo(const RefineProblem& pb, const RenderConfig& rc, int stride) {
  require(pb.components.human && pb.components.object, ErrorCode::InvalidArgument, "albedo fit needs a human and an object");
  require(stride >= 1, ErrorCode::InvalidArgument, "stride must be >= 1");
  const Vec3 h0 = pb.components.human->albedo.at(Vec3::Zero());
  const Vec3 o0 = pb.components.object->albedo.at(Vec3::Zero());
  // Color is affine in each component's albedo with coefficient = its weight.
  Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
  Eigen::Matrix<double, 2, 3> aty = Eigen::Matrix<double, 2, 3>::Zero();
  const Observations& obs = pb.observations;
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const FrameView view(pb.components, obs.frames[k], rc.box_pad);
    const Camera& cam = obs.cameras[k];
    const RenderBuffers& b = obs.buffers[k];
    for (int y = 0; y < cam.height; y += stride)
      for (int x = 0; x < cam.width; x += stride) {
        const int pix = y * cam.width + x;
        const CompositeResult r = render_ray(view, cam.ray(x, y), rc, pixel_key(rc.seed, obs.frames[k], pix));
        const Eigen::Vector2d a(r.weight[0], r.weight[1]);
        if (a.squaredNorm() == 0) continue;
        Vec3 target;
        for (int c = 0; c < 3; ++c) target[c] = b.color.at(x, y, c);
        const Vec3 rest = r.color - a[0] * h0 - a[1] * o0;
        ata += a * a.transpose();
        aty += a * (target - rest).transpose();
      }
  }
  const double ridge = 1e-9 * std::max(ata.trace(), 1.0);
  const Eigen::Matrix<double, 2, 3> sol = (ata + ridge * Eigen::Matrix2d::Identity()).ldlt().solve(aty);
  return {Vec3(sol.row(0).transpose().cwiseMax(0.0).cwiseMin(1.0)), Vec3(sol.row(1).transpose().cwiseMax(0.0).cwiseMin(1.0))};
}

RefineProblem build_refine_problem(const Dataset& ds, const PhysParams& phys, const RefineSetup& setup) {
  phys.validate();
  RefineProblem pb;
  const Vec3 rgb0 = setup.initial_albedo.value_or(Vec3::Constant(0.5));
  const SdfGrid& hg = ds.human_proxy.canonical_sdf();
  const SdfGrid& og = ds.object.sdf;
  pb.components.human = HumanComponent{ds.human_proxy, ds.human_init,
                                       AlbedoGrid::constant(hg.box_min(), hg.box_max(), 4 * hg.min_spacing(), rgb0)};
  pb.components.object = ObjectComponent{og, setup.gt_object_motion ? ds.p_obj_gt : recover_object_motion(ds, setup.ransac),
                                         AlbedoGrid::constant(og.box_min(), og.box_max(), 4 * og.min_spacing(), rgb0)};
  pb.components.scene = ds.scene;
  pb.proxy = ds.human_proxy;
  for (const Observation& o : ds.observations) {
    pb.observations.cameras.push_back(ds.camera(o.frame));
    pb.observations.frames.push_back(o.frame);
    pb.observations.buffers.push_back(o.buffers);
  }
  pb.contacts = temporal_filter(ds.contacts_pred, phys);
  pb.contact_points = ds.contact_points;
  if (!setup.initial_albedo) {
    RenderConfig rc;
    rc.samples_per_component = ds.script.samples_per_component;
    rc.seed = ds.script.seed;
    const auto [h, o] = fit_constant_albedo(pb, rc, setup.albedo_stride);
    pb.components.human->albedo = AlbedoGrid::constant(hg.box_min(), hg.box_max(), 4 * hg.min_spacing(), h);
    pb.components.object->albedo = AlbedoGrid::constant(og.box_min(), og.box_max(), 4 * og.min_spacing(), o);
  }
  return pb;
}

namespace {

std::vector<Vec3> world_surface(const ComponentSet& cs, int frame, int n) {
  std::vector<Vec3> pts;
  if (cs.human) {
    const PosedSkeleton h(cs.human->skeleton, cs.human->motion.at(frame));
    for (const Vec3& x : extract_surface(cs.human->skeleton.canonical_sdf(), n).points) pts.push_back(h.forward(x));
  }
  if (cs.object) {
    const Posed& p = cs.object->motion.at(frame);
    for (const Vec3& x : extract_surface(cs.object->sdf, n).points) pts.push_back(p * x);
  }
  return pts;
}

}  // namespace

MetricReport evaluate(const ComponentSet& pred, const Dataset& gt, const EvalOptions& opt) {
  MetricReport r;
  const ComponentSet truth = gt.gt_components();
  const int frame0 = gt.c_scn_gt.indices().front();
  const SurfaceSamples ps{world_surface(pred, frame0, opt.surface_points)};
  const SurfaceSamples gs{world_surface(truth, frame0, opt.surface_points)};
  if (!ps.points.empty() && !gs.points.empty()) {
    const SurfaceMetrics m = surface_metrics(ps, gs, opt.f1_tau, opt.threads);
    r.chamfer_cm = 100 * m.chamfer;
    r.hausdorff_cm = 100 * m.hausdorff;
    r.f1_percent = 100 * m.f1;
  }
  if (pred.human && pred.object) {
    const auto fc = contact_distances(pred, gt.contact_points, gt.contacts_gt);
    r.penetration_cm = 100 * penetration_depth(fc, opt.pd);
    const ContactPrf prf = contact_prf(fc, gt.contacts_gt);
    r.contact_precision = 100 * prf.precision;
    r.contact_recall = 100 * prf.recall;
    r.contact_f1 = 100 * prf.f1;
  }
  if (opt.images && !gt.observations.empty()) {
    RenderConfig rc;
    rc.samples_per_component = gt.script.samples_per_component;
    rc.seed = gt.script.seed;
    rc.threads = opt.threads;
    double p = 0, s = 0;
    for (const Observation& o : gt.observations) {
      const RenderBuffers b = render_image(pred, gt.camera(o.frame, true), o.frame, rc);
      p += psnr(b.color, o.buffers.color);
      s += ssim(b.color, o.buffers.color);
    }
    const double n = static_cast<double>(gt.observations.size());
    r.psnr_db = p / n;
    r.ssim = s / n;
  }
  return r;
}

ComponentSet load_result(const std::filesystem::path& dir, const Dataset& reference) {
  const std::vector<SdfGrid> grids = read_grids(dir / "grids.sdfg");
  require(grids.size() == 4 * 3, ErrorCode::ParseError,
          (dir / "grids.sdfg").string() + ": expected human, object and scene grids with albedo");
  const OptimState s = read_poses(dir / "poses.json", reference.human_proxy.size());
  auto albedo = [&](std::size_t c) { return AlbedoGrid{{grids[3 + 3 * c], grids[4 + 3 * c], grids[5 + 3 * c]}}; };

  ComponentSet cs;
  Skeleton skel = reference.human_proxy;
  skel.set_canonical_sdf(grids[0]);
  HumanMotion hm;
  std::vector<TimedPose> om;
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    hm.index.push_back(s.frames[i]);
    hm.poses.push_back(s.human[i]);
    om.push_back({s.frames[i], s.object[i]});
  }
  cs.human = HumanComponent{std::move(skel), std::move(hm), albedo(0)};
  cs.object = ObjectComponent{grids[1], ObjectMotion(std::move(om)), albedo(1)};
  cs.scene = SceneComponent{grids[2], albedo(2)};
  return cs;
}

}  // namespace hoi
