#include "vetta/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

#include "vetta/nn/rng.hpp"

namespace vetta::eval {

namespace {

double dist(const tree::Vec3& a, const tree::Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

void require_nonempty(const PointSet& a, const PointSet& b, const char* what) {
  if (a.empty() || b.empty()) throw MetricError(std::string(what) + ": empty point set");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

NearestIndex::NearestIndex(const PointSet& points) : points_(points) {
  if (points_.empty()) throw MetricError("nearest index: empty point set");
  tree::Vec3 hi = points_.front();
  lo_ = points_.front();
  for (const auto& p : points_)
    for (std::size_t a = 0; a < 3; ++a) {
      if (!std::isfinite(p[a])) throw MetricError("nearest index: non-finite point");
      lo_[a] = std::min(lo_[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  const double span = std::max({hi[0] - lo_[0], hi[1] - lo_[1], hi[2] - lo_[2]});
  int axes = 0;
  for (std::size_t a = 0; a < 3; ++a) axes += hi[a] - lo_[a] > 1e-12 * std::max(1.0, span);
  const double per_axis = std::pow(static_cast<double>(points_.size()), 1.0 / std::max(axes, 1));
  cell_ = span > 0 ? span / std::max(1.0, std::ceil(per_axis)) : 1.0;
  for (std::size_t a = 0; a < 3; ++a) dims_[a] = static_cast<long long>(std::floor((hi[a] - lo_[a]) / cell_)) + 1;
  const auto n_cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  std::vector<std::size_t> cell_of(points_.size());
  start_.assign(n_cells + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto c = static_cast<std::size_t>(
        (cell_index(points_[i], 0) * dims_[1] + cell_index(points_[i], 1)) * dims_[2] + cell_index(points_[i], 2));
    cell_of[i] = c;
    ++start_[c + 1];
  }
  for (std::size_t c = 0; c < n_cells; ++c) start_[c + 1] += start_[c];
  order_.resize(points_.size());
  std::vector<std::size_t> fill(start_.begin(), start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) order_[fill[cell_of[i]]++] = i;
}

long long NearestIndex::cell_index(const tree::Vec3& p, std::size_t axis) const {
  const double f = std::floor((p[axis] - lo_[axis]) / cell_);
  return static_cast<long long>(std::clamp(f, 0.0, static_cast<double>(dims_[axis] - 1)));
}

double NearestIndex::nearest(const tree::Vec3& q) const {
  // Search Chebyshev rings of cells around the (clamped) query cell. Points
  // in rings beyond r are at least r cells away from the query.
  const long long c[3] = {cell_index(q, 0), cell_index(q, 1), cell_index(q, 2)};
  const long long max_r = std::max({dims_[0], dims_[1], dims_[2]});
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](long long x, long long y, long long z) {
    const auto cell = static_cast<std::size_t>((x * dims_[1] + y) * dims_[2] + z);
    for (std::size_t k = start_[cell]; k < start_[cell + 1]; ++k) best = std::min(best, dist(q, points_[order_[k]]));
  };
  for (long long r = 0; r <= max_r; ++r) {
    const long long x0 = std::max(0LL, c[0] - r), x1 = std::min(dims_[0] - 1, c[0] + r);
    const long long y0 = std::max(0LL, c[1] - r), y1 = std::min(dims_[1] - 1, c[1] + r);
    const long long z0 = std::max(0LL, c[2] - r), z1 = std::min(dims_[2] - 1, c[2] + r);
    for (long long x = x0; x <= x1; ++x)
      for (long long y = y0; y <= y1; ++y) {
        if (std::llabs(x - c[0]) == r || std::llabs(y - c[1]) == r) {
          for (long long z = z0; z <= z1; ++z) scan(x, y, z);
        } else {
          if (c[2] - r >= 0) scan(x, y, c[2] - r);
          if (r > 0 && c[2] + r < dims_[2]) scan(x, y, c[2] + r);
        }
      }
    if (best <= static_cast<double>(r) * cell_) break;
  }
  return best;
}

std::vector<double> NearestIndex::nearest_all(const PointSet& queries) const {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(nearest(q));
  return out;
}

std::vector<double> nearest_distances(const PointSet& queries, const PointSet& points) {
  require_nonempty(queries, points, "nearest_distances");
  return NearestIndex(points).nearest_all(queries);
}

std::vector<double> nearest_distances_naive(const PointSet& queries, const PointSet& points) {
  require_nonempty(queries, points, "nearest_distances_naive");
  std::vector<double> out;
  for (const auto& q : queries) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : points) best = std::min(best, dist(q, p));
    out.push_back(best);
  }
  return out;
}

double centerline_hausdorff(const PointSet& a, const PointSet& b) {
  require_nonempty(a, b, "centerline_hausdorff");
  const auto ab = nearest_distances(a, b), ba = nearest_distances(b, a);
  return std::max(*std::max_element(ab.begin(), ab.end()), *std::max_element(ba.begin(), ba.end()));
}

double avg_centerline_distance(const PointSet& a, const PointSet& b) {
  require_nonempty(a, b, "avg_centerline_distance");
  const auto ab = nearest_distances(a, b), ba = nearest_distances(b, a);
  double sa = 0, sb = 0;
  for (double d : ab) sa += d;
  for (double d : ba) sb += d;
  return 0.5 * (sa / static_cast<double>(ab.size()) + sb / static_cast<double>(ba.size()));
}

double centerline_f1(const PointSet& a, const PointSet& b, double tau) {
  require_nonempty(a, b, "centerline_f1");
  if (!(tau > 0)) throw MetricError("centerline_f1: tau must be positive");
  const auto ab = nearest_distances(a, b), ba = nearest_distances(b, a);
  const double precision =
      static_cast<double>(std::count_if(ab.begin(), ab.end(), [&](double d) { return d <= tau; })) /
      static_cast<double>(ab.size());
  const double recall = static_cast<double>(std::count_if(ba.begin(), ba.end(), [&](double d) { return d <= tau; })) /
                        static_cast<double>(ba.size());
  if (precision + recall == 0) return 0.0;
  return 2 * precision * recall / (precision + recall);
}

namespace {

std::vector<geom::Point4> edge_path(const tree::VesselTree& t, const tree::TreeEdge& e) {
  if (e.polyline && e.polyline->points.size() >= 2) return e.polyline->points;
  const auto& a = t.node(e.parent);
  const auto& b = t.node(e.child);
  return {{a.pos[0], a.pos[1], a.pos[2], a.r.value_or(0.0)}, {b.pos[0], b.pos[1], b.pos[2], b.r.value_or(0.0)}};
}

/// Densified samples (position + radius) along every edge.
std::vector<geom::Point4> dense_samples(const tree::VesselTree& t, double spacing) {
  if (!(spacing > 0)) throw MetricError("sampling spacing must be positive");
  std::vector<geom::Point4> out;
  if (t.edges.empty()) {
    if (t.empty()) throw MetricError("cannot sample an empty tree");
    const auto& r = t.node(t.root);
    out.push_back({r.pos[0], r.pos[1], r.pos[2], r.r.value_or(0.0)});
    return out;
  }
  for (const auto& e : t.edges) {
    const auto path = edge_path(t, e);
    out.push_back(path.front());
    for (std::size_t i = 1; i < path.size(); ++i) {
      const auto& p = path[i - 1];
      const auto& q = path[i];
      const double len = geom::distance3(p, q);
      const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / spacing)));
      for (std::size_t s = 1; s <= n; ++s) {
        const double u = static_cast<double>(s) / static_cast<double>(n);
        out.push_back({p[0] + (q[0] - p[0]) * u, p[1] + (q[1] - p[1]) * u, p[2] + (q[2] - p[2]) * u,
                       p[3] + (q[3] - p[3]) * u});
      }
    }
  }
  return out;
}

}  // namespace

PointSet centerline_points(const tree::VesselTree& t, double spacing) {
  PointSet out;
  for (const auto& p : dense_samples(t, spacing)) out.push_back({p[0], p[1], p[2]});
  return out;
}

std::vector<Sphere> tube_spheres(const tree::VesselTree& t, double spacing) {
  std::vector<Sphere> out;
  for (const auto& p : dense_samples(t, spacing)) {
    if (!(p[3] > 0)) throw MetricError("tube_spheres: tree needs positive radii");
    out.push_back({{p[0], p[1], p[2]}, p[3]});
  }
  return out;
}

double dice_spheres(const std::vector<Sphere>& a, const std::vector<Sphere>& b, std::size_t resolution) {
  if (a.empty() || b.empty()) throw MetricError("dice: empty volume");
  if (resolution < 2) throw MetricError("dice: resolution must be at least 2");
  tree::Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity()};
  tree::Vec3 hi{-lo[0], -lo[1], -lo[2]};
  for (const auto* set : {&a, &b})
    for (const auto& s : *set)
      for (std::size_t k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], s.c[k] - s.r);
        hi[k] = std::max(hi[k], s.c[k] + s.r);
      }
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]});
  const double h = span / static_cast<double>(resolution);
  const std::size_t n = resolution;
  auto raster = [&](const std::vector<Sphere>& set) {
    std::vector<std::uint8_t> grid(n * n * n, 0);
    for (const auto& s : set) {
      std::size_t from[3], to[3];
      for (std::size_t k = 0; k < 3; ++k) {
        const double f = std::floor((s.c[k] - s.r - lo[k]) / h - 0.5);
        const double g = std::ceil((s.c[k] + s.r - lo[k]) / h - 0.5);
        from[k] = static_cast<std::size_t>(std::clamp(f, 0.0, static_cast<double>(n - 1)));
        to[k] = static_cast<std::size_t>(std::clamp(g, 0.0, static_cast<double>(n - 1)));
      }
      const double r2 = s.r * s.r;
      for (std::size_t i = from[0]; i <= to[0]; ++i) {
        const double dx = lo[0] + (static_cast<double>(i) + 0.5) * h - s.c[0];
        for (std::size_t j = from[1]; j <= to[1]; ++j) {
          const double dy = lo[1] + (static_cast<double>(j) + 0.5) * h - s.c[1];
          for (std::size_t k = from[2]; k <= to[2]; ++k) {
            const double dz = lo[2] + (static_cast<double>(k) + 0.5) * h - s.c[2];
            if (dx * dx + dy * dy + dz * dz <= r2) grid[(i * n + j) * n + k] = 1;
          }
        }
      }
    }
    return grid;
  };
  const auto ga = raster(a), gb = raster(b);
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t q = 0; q < ga.size(); ++q) {
    na += ga[q];
    nb += gb[q];
    both += ga[q] & gb[q];
  }
  if (na + nb == 0) throw MetricError("dice: both volumes are empty at this resolution");
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double dice_voxel(const tree::VesselTree& a, const tree::VesselTree& b, std::size_t resolution) {
  auto min_radius = [](const tree::VesselTree& t) {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& n : t.nodes)
      if (n.r) m = std::min(m, *n.r);
    for (const auto& e : t.edges)
      if (e.polyline)
        for (const auto& p : e.polyline->points) m = std::min(m, p[3]);
    if (!std::isfinite(m) || !(m > 0)) throw MetricError("dice_voxel: trees need positive radii");
    return m;
  };
  const double spacing = 0.5 * std::min(min_radius(a), min_radius(b));
  return dice_spheres(tube_spheres(a, spacing), tube_spheres(b, spacing), resolution);
}

PointSet surface_points(const tree::VesselTree& t, double spacing, std::size_t ring_points, std::uint64_t seed) {
  if (ring_points == 0) throw MetricError("surface_points: ring_points must be positive");
  const double phase = nn::Rng(seed).uniform(0.0, 2.0 * std::numbers::pi);
  PointSet out;
  auto ring = [&](const geom::Point4& p, const tree::Vec3& dir) {
    // Orthonormal frame around the tangent.
    const tree::Vec3 ref = std::abs(dir[0]) < 0.9 ? tree::Vec3{1, 0, 0} : tree::Vec3{0, 1, 0};
    tree::Vec3 u{dir[1] * ref[2] - dir[2] * ref[1], dir[2] * ref[0] - dir[0] * ref[2], dir[0] * ref[1] - dir[1] * ref[0]};
    const double un = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    for (auto& c : u) c /= un;
    const tree::Vec3 v{dir[1] * u[2] - dir[2] * u[1], dir[2] * u[0] - dir[0] * u[2], dir[0] * u[1] - dir[1] * u[0]};
    for (std::size_t k = 0; k < ring_points; ++k) {
      const double th = phase + 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(ring_points);
      const double c = std::cos(th) * p[3], s = std::sin(th) * p[3];
      out.push_back({p[0] + c * u[0] + s * v[0], p[1] + c * u[1] + s * v[1], p[2] + c * u[2] + s * v[2]});
    }
  };
  if (t.edges.empty()) throw MetricError("surface_points: tree has no edges");
  for (const auto& e : t.edges) {
    const auto path = edge_path(t, e);
    for (std::size_t i = 1; i < path.size(); ++i) {
      const auto& p = path[i - 1];
      const auto& q = path[i];
      const double len = geom::distance3(p, q);
      if (!(len > 0)) continue;
      const tree::Vec3 dir{(q[0] - p[0]) / len, (q[1] - p[1]) / len, (q[2] - p[2]) / len};
      const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil(len / spacing)));
      for (std::size_t s = (i == 1 ? 0 : 1); s <= n; ++s) {
        const double w = static_cast<double>(s) / static_cast<double>(n);
        ring({p[0] + (q[0] - p[0]) * w, p[1] + (q[1] - p[1]) * w, p[2] + (q[2] - p[2]) * w, p[3] + (q[3] - p[3]) * w},
             dir);
      }
    }
  }
  if (out.empty()) throw MetricError("surface_points: degenerate tree");
  return out;
}

SurfaceDistances surface_point_distances(const tree::VesselTree& a, const tree::VesselTree& b, double spacing,
                                         std::size_t ring_points, std::uint64_t seed) {
  const auto pa = surface_points(a, spacing, ring_points, seed);
  const auto pb = surface_points(b, spacing, ring_points, seed);
  return {centerline_hausdorff(pa, pb), avg_centerline_distance(pa, pb)};
}

SampleMetrics compare_trees(const std::string& id, const tree::VesselTree& prediction, const tree::VesselTree& target,
                            const MetricOptions& opts) {
  SampleMetrics m;
  m.id = id;
  const auto a = centerline_points(prediction, opts.spacing);
  const auto b = centerline_points(target, opts.spacing);
  m.chd = centerline_hausdorff(a, b);
  m.acd = avg_centerline_distance(a, b);
  m.cf1 = centerline_f1(a, b, opts.tau);
  if (opts.volumetric) {
    m.dice = dice_voxel(prediction, target, opts.dice_resolution);
    const auto s = surface_point_distances(prediction, target, opts.surface_spacing, opts.ring_points, opts.seed);
    m.surface_hd = s.hausdorff;
    m.surface_asd = s.average;
  }
  return m;
}

std::string metrics_csv(const std::vector<SampleMetrics>& rows) {
  const bool vol = !rows.empty() && rows.front().dice.has_value();
  std::ostringstream os;
  os << "sample_id,chd,acd,cf1";
  if (vol) os << ",dice,surface_hd,surface_asd";
  os << "\n";
  for (const auto& r : rows) {
    os << r.id << "," << fmt(r.chd) << "," << fmt(r.acd) << "," << fmt(r.cf1);
    if (vol) os << "," << fmt(r.dice.value_or(0)) << "," << fmt(r.surface_hd.value_or(0)) << ","
                << fmt(r.surface_asd.value_or(0));
    os << "\n";
  }
  return os.str();
}

nlohmann::json metrics_summary(const std::vector<SampleMetrics>& rows) {
  if (rows.empty()) throw MetricError("metrics_summary: no samples");
  double chd = 0, acd = 0, cf1 = 0, dice = 0, hd = 0, asd = 0;
  for (const auto& r : rows) {
    chd += r.chd;
    acd += r.acd;
    cf1 += r.cf1;
    dice += r.dice.value_or(0);
    hd += r.surface_hd.value_or(0);
    asd += r.surface_asd.value_or(0);
  }
  const double n = static_cast<double>(rows.size());
  nlohmann::json j{{"count", rows.size()}, {"chd", chd / n}, {"acd", acd / n}, {"cf1", cf1 / n}};
  if (rows.front().dice) {
    j["dice"] = dice / n;
    j["surface_hd"] = hd / n;
    j["surface_asd"] = asd / n;
  }
  return j;
}

}  // namespace vetta::eval
