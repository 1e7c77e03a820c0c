#include "hoi/sdf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

#include "hoi/io.hpp"

namespace hoi {

namespace {

SdfSample query_node(const AnalyticSdf::Sphere& s, const Vec3& x) {
  const Vec3 d = x - s.center;
  const double n = d.norm();
  SdfSample out;
  out.value = n - s.radius;
  if (n > 0) {
    out.gradient = d / n;
  } else {
    out.degenerate = true;
  }
  return out;
}

SdfSample query_node(const AnalyticSdf::Box& b, const Vec3& x) {
  const Vec3 p = x - b.center;
  const Vec3 sgn(p.x() < 0 ? -1.0 : 1.0, p.y() < 0 ? -1.0 : 1.0, p.z() < 0 ? -1.0 : 1.0);
  const Vec3 q = p.cwiseAbs() - b.half_extents;
  SdfSample out;
  Eigen::Index axis = 0;
  const double qmax = q.maxCoeff(&axis);
  if (qmax > 0) {
    const Vec3 outside = q.cwiseMax(0.0);
    const double d = outside.norm();
    out.value = d;
    out.gradient = sgn.cwiseProduct(outside) / d;
  } else {
    out.value = qmax;
    out.gradient = Vec3::Zero();
    out.gradient[axis] = sgn[axis];
  }
  return out;
}

SdfSample query_node(const AnalyticSdf::Capsule& c, const Vec3& x) {
  const Vec3 ab = c.b - c.a;
  const double len2 = ab.squaredNorm();
  const double h = len2 > 0 ? std::clamp((x - c.a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  const Vec3 d = x - (c.a + h * ab);
  const double n = d.norm();
  SdfSample out;
  out.value = n - c.radius;
  if (n > 0) {
    out.gradient = d / n;
  } else {
    out.degenerate = true;
  }
  return out;
}

SdfSample query_node(const AnalyticSdf::HalfSpace& h, const Vec3& x) {
  SdfSample out;
  out.value = h.normal.dot(x) - h.offset;
  out.gradient = h.normal;
  return out;
}

SdfSample query_node(const AnalyticSdf::Union& u, const Vec3& x) {
  SdfSample best;
  best.value = std::numeric_limits<double>::infinity();
  for (const auto& child : *u.children) {
    SdfSample s = child.query(x);
    if (s.value < best.value) best = s;
  }
  return best;
}

SdfSample query_node(const AnalyticSdf::Transformed& t, const Vec3& x) { return transform_query(*t.child, t.pose, x); }

template <typename T>
void put(std::vector<char>& out, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

template <typename T>
T take(const std::vector<char>& in, std::size_t& offset) {
  require(offset + sizeof(T) <= in.size(), ErrorCode::ParseError, "truncated SDFG record");
  char buf[sizeof(T)];
  std::memcpy(buf, in.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  offset += sizeof(T);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace

AnalyticSdf AnalyticSdf::sphere(const Vec3& center, double radius) {
  require(radius > 0, ErrorCode::InvalidArgument, "sphere radius must be positive");
  return AnalyticSdf(Sphere{center, radius});
}

AnalyticSdf AnalyticSdf::box(const Vec3& center, const Vec3& half_extents) {
  require((half_extents.array() > 0).all(), ErrorCode::InvalidArgument, "box half extents must be positive");
  return AnalyticSdf(Box{center, half_extents});
}

AnalyticSdf AnalyticSdf::capsule(const Vec3& a, const Vec3& b, double radius) {
  require(radius > 0, ErrorCode::InvalidArgument, "capsule radius must be positive");
  return AnalyticSdf(Capsule{a, b, radius});
}

AnalyticSdf AnalyticSdf::half_space(const Vec3& normal, double offset) {
  const double n = normal.norm();
  require(n > 0, ErrorCode::InvalidArgument, "half-space normal must be non-zero");
  return AnalyticSdf(HalfSpace{normal / n, offset / n});
}

AnalyticSdf AnalyticSdf::make_union(std::vector<AnalyticSdf> children) {
  require(!children.empty(), ErrorCode::InvalidArgument, "union needs at least one child");
  return AnalyticSdf(Union{std::make_shared<const std::vector<AnalyticSdf>>(std::move(children))});
}

AnalyticSdf AnalyticSdf::transformed(const Posed& pose, AnalyticSdf child) {
  return AnalyticSdf(Transformed{pose, std::make_shared<const AnalyticSdf>(std::move(child))});
}

SdfSample AnalyticSdf::query(const Vec3& x) const {
  return std::visit([&](const auto& n) { return query_node(n, x); }, node_);
}

SdfGrid::SdfGrid(const Vec3& origin, const Vec3& spacing, const Dims& dims, std::vector<float> values,
                 OutsidePolicy policy)
    : origin_(origin), spacing_(spacing), dims_(dims), values_(std::move(values)), policy_(policy) {
  require(dims[0] >= 2 && dims[1] >= 2 && dims[2] >= 2, ErrorCode::InvalidArgument, "grid dims must be >= 2 per axis");
  require((spacing.array() > 0).all() && spacing.allFinite(), ErrorCode::InvalidArgument, "grid spacing must be positive");
  require(origin.allFinite(), ErrorCode::InvalidArgument, "grid origin must be finite");
  require(values_.size() == static_cast<size_t>(dims[0]) * dims[1] * dims[2], ErrorCode::InvalidArgument,
          "grid value count does not match dims");
}

Vec3 SdfGrid::box_max() const {
  return origin_ + Vec3((dims_[0] - 1) * spacing_.x(), (dims_[1] - 1) * spacing_.y(), (dims_[2] - 1) * spacing_.z());
}

TrilinearStencil SdfGrid::stencil(const Vec3& x) const {
  TrilinearStencil st;
  std::array<int, 3> cell{};
  std::array<double, 3> frac{};
  std::array<bool, 3> active{};
  Vec3 projected = x;
  for (int a = 0; a < 3; ++a) {
    const double u = (x[a] - origin_[a]) / spacing_[a];
    const double hi = dims_[a] - 1;
    double uc = u;
    active[a] = true;
    if (policy_ == OutsidePolicy::Clamp && (u < 0 || u > hi)) {
      uc = std::clamp(u, 0.0, hi);
      active[a] = false;
      projected[a] = origin_[a] + uc * spacing_[a];
    }
    int i0 = static_cast<int>(std::floor(std::clamp(uc, 0.0, hi)));
    i0 = std::min(i0, dims_[a] - 2);
    cell[a] = i0;
    frac[a] = uc - i0;
  }
  st.outside_offset = x - projected;
  int n = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx, ++n) {
        const std::array<int, 3> d{dx, dy, dz};
        std::array<double, 3> w{};
        std::array<double, 3> dw{};
        for (int a = 0; a < 3; ++a) {
          w[a] = d[a] ? frac[a] : 1.0 - frac[a];
          dw[a] = (d[a] ? 1.0 : -1.0) / spacing_[a];
        }
        st.index[n] = linear_index(cell[0] + dx, cell[1] + dy, cell[2] + dz);
        st.weight[n] = w[0] * w[1] * w[2];
        st.dweight[n] = Vec3(active[0] ? dw[0] * w[1] * w[2] : 0.0, active[1] ? w[0] * dw[1] * w[2] : 0.0,
                             active[2] ? w[0] * w[1] * dw[2] : 0.0);
      }
  return st;
}

SdfSample SdfGrid::query(const Vec3& x) const {
  const TrilinearStencil st = stencil(x);
  SdfSample s;
  for (int n = 0; n < 8; ++n) {
    const double v = values_[static_cast<size_t>(st.index[n])];
    s.value += st.weight[n] * v;
    s.gradient += st.dweight[n] * v;
  }
  const double d = st.outside_offset.norm();
  if (d > 0) {
    s.value += d;
    s.gradient += st.outside_offset / d;
  }
  return s;
}

double SdfGrid::interpolate_clamped(const Vec3& x) const {
  const Vec3 xc = x.cwiseMax(box_min()).cwiseMin(box_max());
  const TrilinearStencil st = stencil(xc);
  double v = 0;
  for (int n = 0; n < 8; ++n) v += st.weight[n] * values_[static_cast<size_t>(st.index[n])];
  return v;
}

bool SdfGrid::has_sign_change() const {
  const auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
  return *lo <= 0.0f && *hi >= 0.0f && *lo < *hi;
}

SdfGrid bake(const AnalyticSdf& f, const Vec3& origin, const Vec3& spacing, const SdfGrid::Dims& dims,
             OutsidePolicy policy) {
  return bake_field([&](const Vec3& x) { return f.value(x); }, origin, spacing, dims, policy);
}

SdfGrid bake_box(const AnalyticSdf& f, const Vec3& lo, const Vec3& hi, double spacing, OutsidePolicy policy) {
  require(spacing > 0, ErrorCode::InvalidArgument, "spacing must be positive");
  SdfGrid::Dims dims{};
  for (int a = 0; a < 3; ++a) dims[a] = std::max(2, static_cast<int>(std::ceil((hi[a] - lo[a]) / spacing - 1e-9)) + 1);
  return bake(f, lo, Vec3::Constant(spacing), dims, policy);
}

void append_grid_bytes(const SdfGrid& g, std::vector<char>& out) {
  out.insert(out.end(), {'S', 'D', 'F', 'G'});
  put<std::uint32_t>(out, 1);
  for (int a = 0; a < 3; ++a) put<std::uint32_t>(out, static_cast<std::uint32_t>(g.dims()[a]));
  for (int a = 0; a < 3; ++a) put<double>(out, g.origin()[a]);
  for (int a = 0; a < 3; ++a) put<double>(out, g.spacing()[a]);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(g.policy()));
  out.reserve(out.size() + g.values().size() * 4);
  for (float v : g.values()) put<float>(out, v);
}

std::vector<char> encode_grid(const SdfGrid& g) {
  std::vector<char> out;
  append_grid_bytes(g, out);
  return out;
}

SdfGrid decode_grid(const std::vector<char>& bytes, std::size_t& offset) {
  require(offset + 4 <= bytes.size() && std::memcmp(bytes.data() + offset, "SDFG", 4) == 0, ErrorCode::ParseError,
          "bad SDFG magic");
  offset += 4;
  const auto version = take<std::uint32_t>(bytes, offset);
  require(version == 1, ErrorCode::ParseError, "unsupported SDFG version " + std::to_string(version));
  SdfGrid::Dims dims{};
  for (int a = 0; a < 3; ++a) dims[a] = static_cast<int>(take<std::uint32_t>(bytes, offset));
  Vec3 origin, spacing;
  for (int a = 0; a < 3; ++a) origin[a] = take<double>(bytes, offset);
  for (int a = 0; a < 3; ++a) spacing[a] = take<double>(bytes, offset);
  const auto policy = take<std::uint8_t>(bytes, offset);
  require(policy <= 1, ErrorCode::ParseError, "unknown outside policy");
  require(dims[0] >= 2 && dims[1] >= 2 && dims[2] >= 2, ErrorCode::ParseError, "grid dims must be >= 2");
  const std::size_t count = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  require(offset + count * 4 <= bytes.size(), ErrorCode::ParseError, "truncated SDFG values");
  std::vector<float> values(count);
  for (auto& v : values) v = take<float>(bytes, offset);
  try {
    return SdfGrid(origin, spacing, dims, std::move(values), static_cast<OutsidePolicy>(policy));
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

SdfGrid decode_grid(const std::vector<char>& bytes) {
  std::size_t offset = 0;
  SdfGrid g = decode_grid(bytes, offset);
  require(offset == bytes.size(), ErrorCode::ParseError, "trailing bytes after SDFG record");
  return g;
}

void write_grid(const std::filesystem::path& path, const SdfGrid& g) { io::write_bytes(path, encode_grid(g)); }

SdfGrid read_grid(const std::filesystem::path& path) { return decode_grid(io::read_bytes(path)); }

void write_grids(const std::filesystem::path& path, const std::vector<const SdfGrid*>& grids) {
  std::vector<char> out;
  for (const SdfGrid* g : grids) append_grid_bytes(*g, out);
  io::write_bytes(path, out);
}

std::vector<SdfGrid> read_grids(const std::filesystem::path& path) {
  const auto bytes = io::read_bytes(path);
  std::vector<SdfGrid> out;
  std::size_t offset = 0;
  while (offset < bytes.size()) out.push_back(decode_grid(bytes, offset));
  return out;
}

}  // namespace hoi
