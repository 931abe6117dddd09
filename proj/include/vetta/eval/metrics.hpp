#pragma once

#include <array>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vetta/tree/tree.hpp"

namespace vetta::eval {

using PointSet = std::vector<tree::Vec3>;

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exact nearest-neighbour distances from each point of `queries` to `points`
/// using a uniform grid hash.
class NearestIndex {
 public:
  explicit NearestIndex(const PointSet& points);
  double nearest(const tree::Vec3& q) const;
  std::vector<double> nearest_all(const PointSet& queries) const;

 private:
  long long cell_index(const tree::Vec3& p, std::size_t axis) const;

  PointSet points_;
  tree::Vec3 lo_{0, 0, 0};
  double cell_ = 1.0;
  std::array<long long, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;  // CSR offsets per cell
  std::vector<std::size_t> order_;
};

std::vector<double> nearest_distances(const PointSet& queries, const PointSet& points);
std::vector<double> nearest_distances_naive(const PointSet& queries, const PointSet& points);

double centerline_hausdorff(const PointSet& a, const PointSet& b);
double avg_centerline_distance(const PointSet& a, const PointSet& b);
double centerline_f1(const PointSet& a, const PointSet& b, double tau);

/// Points along every edge: the polyline when present (densified so that
/// consecutive samples are at most `spacing` apart), the straight segment
/// otherwise. A lone root contributes its position.
PointSet centerline_points(const tree::VesselTree& t, double spacing);

struct Sphere {
  tree::Vec3 c{0, 0, 0};
  double r = 0;
};

/// Spheres swept along every edge centerline at spacing well below the radius.
std::vector<Sphere> tube_spheres(const tree::VesselTree& t, double spacing);

/// Dice of two sphere unions rasterized on a shared res^3 grid spanning both.
double dice_spheres(const std::vector<Sphere>& a, const std::vector<Sphere>& b, std::size_t resolution);
double dice_voxel(const tree::VesselTree& a, const tree::VesselTree& b, std::size_t resolution = 64);

struct SurfaceDistances {
  double hausdorff = 0;
  double average = 0;
};

/// Rings of `ring_points` surface samples around centerline points spaced
/// `spacing` apart; ring phase comes from `seed`.
PointSet surface_points(const tree::VesselTree& t, double spacing, std::size_t ring_points, std::uint64_t seed);
SurfaceDistances surface_point_distances(const tree::VesselTree& a, const tree::VesselTree& b, double spacing = 0.25,
                                         std::size_t ring_points = 16, std::uint64_t seed = 0);

struct SampleMetrics {
  std::string id;
  double chd = 0;
  double acd = 0;
  double cf1 = 0;
  std::optional<double> dice;
  std::optional<double> surface_hd;
  std::optional<double> surface_asd;
};

struct MetricOptions {
  double spacing = 0.005;  // centerline sampling in data units
  double tau = 0.05;
  bool volumetric = false;  // 3D: dice and surface distances
  std::size_t dice_resolution = 64;
  double surface_spacing = 0.25;
  std::size_t ring_points = 16;
  std::uint64_t seed = 0;
};

SampleMetrics compare_trees(const std::string& id, const tree::VesselTree& prediction, const tree::VesselTree& target,
                            const MetricOptions& opts);

std::string metrics_csv(const std::vector<SampleMetrics>& rows);
nlohmann::json metrics_summary(const std::vector<SampleMetrics>& rows);

}  // namespace vetta::eval
