#include "hoi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "hoi/parallel.hpp"

namespace hoi {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::optional<double> trace_surface(const SdfGrid& grid, const Vec3& start, const Vec3& dir, double tol) {
  // Enter the grid box first: outside it the clamped field overestimates.
  const Vec3 lo = grid.box_min(), hi = grid.box_max();
  double t0 = 0, t1 = kInf;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-15) {
      if (start[a] < lo[a] || start[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - start[a]) / dir[a], tb = (hi[a] - start[a]) / dir[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::nullopt;
  double t = t0, t_prev = t0;
  for (int step = 0; step < 1024 && t <= t1; ++step) {
    const double v = grid.query(start + t * dir).value;
    if (std::abs(v) < tol) return t;
    if (v < 0) {
      double a = t_prev, b = t;
      for (int it = 0; it < 60; ++it) {
        const double m = 0.5 * (a + b);
        const double vm = grid.query(start + m * dir).value;
        if (std::abs(vm) < tol) return m;
        (vm > 0 ? a : b) = m;
      }
      return std::nullopt;
    }
    t_prev = t;
    t += std::max(0.9 * v, 0.5 * tol);
  }
  return std::nullopt;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double max_of(const std::vector<double>& v) { return *std::max_element(v.begin(), v.end()); }

double fraction_within(const std::vector<double>& v, double tau) {
  std::size_t k = 0;
  for (double x : v) k += x <= tau;
  return static_cast<double>(k) / static_cast<double>(v.size());
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

void check_sets(const SurfaceSamples& a, const SurfaceSamples& b) {
  require(!a.points.empty() && !b.points.empty(), ErrorCode::EmptyInput, "surface metrics need non-empty point sets");
}

std::vector<double> gaussian_window() {
  std::vector<double> w(11);
  double s = 0;
  for (int i = 0; i < 11; ++i) s += w[static_cast<std::size_t>(i)] = std::exp(-(i - 5) * (i - 5) / (2 * 1.5 * 1.5));
  for (double& x : w) x /= s;
  return w;
}

// Valid-region separable filtering of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& k) {
  const int ow = w - 10, oh = h - 10;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0;
      for (int i = 0; i < 11; ++i) s += k[static_cast<std::size_t>(i)] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

}  // namespace

SurfaceSamples extract_surface(const SdfGrid& grid, int n_points, std::uint64_t seed, const std::string& source) {
  require(n_points > 0, ErrorCode::InvalidArgument, "extract_surface needs n_points > 0");
  if (!grid.has_sign_change()) throw Error(ErrorCode::NoSurface, "grid has no zero crossing");
  const Vec3 lo = grid.box_min(), hi = grid.box_max();
  const Vec3 center = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
  const double radius = half.norm() + grid.min_spacing();
  const double tol = 0.1 * grid.min_spacing();
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  const auto n = static_cast<std::size_t>(n_points);

  SurfaceSamples out;
  out.source = source;
  for (int round = 0; round < 64 && out.points.size() < n; ++round) {
    const auto r = static_cast<std::uint64_t>(round);
    Rot3d spin;
    if (round > 0) {
      const Vec3 w(unit_from_hash(hash_key(seed, r, 0)), unit_from_hash(hash_key(seed, r, 1)),
                   unit_from_hash(hash_key(seed, r, 2)));
      spin = Rot3d::exp(M_PI * (2.0 * w - Vec3::Ones()));
    }
    std::vector<std::optional<Vec3>> hits(n);
    parallel_for(n, 1, [&](std::size_t i) {
      const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = golden * static_cast<double>(i);
      const Vec3 start = center + radius * (spin * Vec3(rho * std::cos(phi), rho * std::sin(phi), z));
      Vec3 target = center;
      if (round > 0) {
        const std::uint64_t key = hash_key(seed, r, 3 + i);
        const Vec3 u(unit_from_hash(hash_key(key, 0)), unit_from_hash(hash_key(key, 1)), unit_from_hash(hash_key(key, 2)));
        target += 0.9 * (2.0 * u - Vec3::Ones()).cwiseProduct(half);
      }
      const Vec3 dir = (target - start).normalized();
      if (const auto t = trace_surface(grid, start, dir, tol)) hits[i] = start + *t * dir;
    });
    for (const auto& h : hits)
      if (h && out.points.size() < n) out.points.push_back(*h);
  }
  return out;
}

PointIndex::PointIndex(const std::vector<Vec3>& points) : points_(points) {
  require(!points_.empty(), ErrorCode::EmptyInput, "point index needs points");
  Vec3 lo = points_[0], hi = points_[0];
  for (const Vec3& p : points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = std::max((hi - lo).maxCoeff(), 1e-9);
  cell_ = std::max(extent / std::cbrt(static_cast<double>(points_.size())), 1e-9);
  origin_ = lo;
  for (int a = 0; a < 3; ++a) dims_[a] = std::min(static_cast<int>((hi[a] - lo[a]) / cell_) + 1, 1024);
  const auto cells = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  auto cell_of = [&](const Vec3& p) {
    Eigen::Vector3i c;
    for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>((p[a] - origin_[a]) / cell_), 0, dims_[a] - 1);
    return static_cast<std::size_t>(c[0]) + static_cast<std::size_t>(dims_[0]) * (c[1] + static_cast<std::size_t>(dims_[1]) * c[2]);
  };
  start_.assign(cells + 1, 0);
  for (const Vec3& p : points_) ++start_[cell_of(p) + 1];
  for (std::size_t c = 0; c < cells; ++c) start_[c + 1] += start_[c];
  order_.resize(points_.size());
  std::vector<std::uint32_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) order_[fill[cell_of(points_[i])]++] = static_cast<std::uint32_t>(i);
}

double PointIndex::nearest(const Vec3& q) const {
  Eigen::Vector3i c;
  for (int a = 0; a < 3; ++a) c[a] = std::clamp(static_cast<int>(std::floor((q[a] - origin_[a]) / cell_)), 0, dims_[a] - 1);
  double best = kInf;
  for (int r = 0;; ++r) {
    const Eigen::Vector3i lo = (c.array() - r).max(0), hi = (c.array() + r).min(dims_.array() - 1);
    for (int z = lo[2]; z <= hi[2]; ++z)
      for (int y = lo[1]; y <= hi[1]; ++y)
        for (int x = lo[0]; x <= hi[0]; ++x) {
          if (std::max({std::abs(x - c[0]), std::abs(y - c[1]), std::abs(z - c[2])}) != r) continue;
          const std::size_t cell =
              static_cast<std::size_t>(x) + static_cast<std::size_t>(dims_[0]) * (y + static_cast<std::size_t>(dims_[1]) * z);
          for (std::uint32_t k = start_[cell]; k < start_[cell + 1]; ++k)
            best = std::min(best, (points_[order_[k]] - q).norm());
        }
    if ((c.array() - r <= 0).all() && (c.array() + r >= dims_.array() - 1).all()) return best;
    // Everything not yet visited lies outside the cube of rings <= r.
    const Vec3 cube_lo = origin_ + cell_ * (c.array() - r).cast<double>().matrix();
    const Vec3 cube_hi = origin_ + cell_ * (c.array() + r + 1).cast<double>().matrix();
    if ((q.array() >= cube_lo.array()).all() && (q.array() <= cube_hi.array()).all()) {
      const double bound = std::min((q - cube_lo).minCoeff(), (cube_hi - q).minCoeff());
      if (best <= bound) return best;
    }
  }
}

std::vector<double> nearest_distances(const std::vector<Vec3>& query, const std::vector<Vec3>& target, int threads) {
  const PointIndex index(target);
  std::vector<double> d(query.size());
  parallel_for(query.size(), threads, [&](std::size_t i) { d[i] = index.nearest(query[i]); });
  return d;
}

SurfaceMetrics surface_metrics(const SurfaceSamples& pred, const SurfaceSamples& gt, double tau, int threads) {
  check_sets(pred, gt);
  require(tau > 0, ErrorCode::InvalidArgument, "F1 threshold must be positive");
  const auto d_pg = nearest_distances(pred.points, gt.points, threads);
  const auto d_gp = nearest_distances(gt.points, pred.points, threads);
  SurfaceMetrics m;
  m.chamfer = 0.5 * (mean_of(d_pg) + mean_of(d_gp));
  m.hausdorff = std::max(max_of(d_pg), max_of(d_gp));
  m.precision = fraction_within(d_pg, tau);
  m.recall = fraction_within(d_gp, tau);
  m.f1 = harmonic(m.precision, m.recall);
  return m;
}

double chamfer(const SurfaceSamples& pred, const SurfaceSamples& gt) { return surface_metrics(pred, gt).chamfer; }
double hausdorff(const SurfaceSamples& pred, const SurfaceSamples& gt) { return surface_metrics(pred, gt).hausdorff; }
double f1_score(const SurfaceSamples& pred, const SurfaceSamples& gt, double tau) {
  return surface_metrics(pred, gt, tau).f1;
}

double psnr(const Image& pred, const Image& gt) {
  require(pred.same_shape(gt), ErrorCode::DimensionMismatch, "psnr: image shapes differ");
  require(!pred.data.empty(), ErrorCode::EmptyInput, "psnr: empty image");
  double se = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = pred.data[i] - gt.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.data.size());
  return mse == 0 ? kPsnrCap : std::min(kPsnrCap, -10.0 * std::log10(mse));
}

double ssim(const Image& pred, const Image& gt) {
  require(pred.same_shape(gt), ErrorCode::DimensionMismatch, "ssim: image shapes differ");
  require(pred.width >= 11 && pred.height >= 11, ErrorCode::DimensionMismatch, "ssim needs images of at least 11x11");
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const auto k = gaussian_window();
  const int w = pred.width, h = pred.height;
  const auto plane_size = static_cast<std::size_t>(w) * h;
  double total = 0;
  for (int ch = 0; ch < pred.channels; ++ch) {
    std::vector<double> x(plane_size), y(plane_size), xx(plane_size), yy(plane_size), xy(plane_size);
    for (std::size_t i = 0; i < plane_size; ++i) {
      x[i] = pred.data[i * pred.channels + ch];
      y[i] = gt.data[i * gt.channels + ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
    const auto exx = filter_valid(xx, w, h, k), eyy = filter_valid(yy, w, h, k), exy = filter_valid(xy, w, h, k);
    double s = 0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = exx[i] - mx[i] * mx[i], vy = eyy[i] - my[i] * my[i], cxy = exy[i] - mx[i] * my[i];
      s += ((2 * mx[i] * my[i] + c1) * (2 * cxy + c2)) / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += s / static_cast<double>(mx.size());
  }
  return total / pred.channels;
}

double penetration_depth(const std::vector<FrameContacts>& frames, PdAggregation agg) {
  double sum = 0;
  std::size_t count = 0;
  for (const auto& f : frames) {
    if (f.xi.empty()) continue;
    if (agg == PdAggregation::MeanOfFrameMax) {
      sum += std::max(0.0, -*std::min_element(f.xi.begin(), f.xi.end()));
      ++count;
    } else {
      for (double xi : f.xi) sum += std::max(0.0, -xi);
      count += f.xi.size();
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

ContactPrf contact_prf(const std::vector<FrameContacts>& frames, const ContactTimeline& gt, double tau_c) {
  ContactPrf r;
  for (const auto& f : frames) {
    require(f.vertex_id.size() == f.xi.size(), ErrorCode::DimensionMismatch, "contact ids and values differ in length");
    auto active = gt.active_vertices(f.frame);
    std::sort(active.begin(), active.end());
    for (std::size_t i = 0; i < f.xi.size(); ++i) {
      const bool pred = std::abs(f.xi[i]) < tau_c;
      const bool truth = std::binary_search(active.begin(), active.end(), f.vertex_id[i]);
      r.tp += pred && truth;
      r.fp += pred && !truth;
      r.fn += !pred && truth;
    }
  }
  r.precision = r.tp + r.fp ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp) : 0.0;
  r.recall = r.tp + r.fn ? static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn) : 0.0;
  r.f1 = harmonic(r.precision, r.recall);
  return r;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("chamfer_cm", chamfer_cm);
  put("hausdorff_cm", hausdorff_cm);
  put("f1_at_2cm_percent", f1_percent);
  put("psnr_db", psnr_db);
  put("ssim", ssim);
  put("penetration_depth_cm", penetration_cm);
  put("contact_precision_percent", contact_precision);
  put("contact_recall_percent", contact_recall);
  put("contact_f1_percent", contact_f1);
  return j;
}

std::string MetricReport::table() const {
  const std::vector<std::pair<std::string, std::optional<double>>> cols{
      {"CD[cm]", chamfer_cm},       {"HD[cm]", hausdorff_cm},          {"F1@2cm[%]", f1_percent},
      {"PSNR[dB]", psnr_db},        {"SSIM", ssim},                     {"PD[cm]", penetration_cm},
      {"Prec[%]", contact_precision}, {"Rec[%]", contact_recall}, {"F1c[%]", contact_f1}};
  std::ostringstream head, row;
  for (const auto& [name, v] : cols) {
    std::ostringstream cell;
    if (v)
      cell << std::fixed << std::setprecision(3) << *v;
    else
      cell << "-";
    const int width = static_cast<int>(std::max(name.size(), cell.str().size())) + 2;
    head << std::setw(width) << name;
    row << std::setw(width) << cell.str();
  }
  return head.str() + "\n" + row.str() + "\n";
}

}  // namespace hoi
