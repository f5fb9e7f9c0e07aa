#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <string>
#include <vector>

namespace locoplan {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

struct DegeneratePolygon : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Convex steppable surface patch. Vertices must be coplanar (1e-9) and
// convex in their plane projection. The unit normal is derived from the
// vertex loop and oriented so its z component is non-negative.
struct TerrainPolygon {
  std::string id;
  std::vector<Vec3> vertices;
  double mu = 0.7;
  Vec3 normal = Vec3::UnitZ();

  // Validates and derives the normal; throws DegeneratePolygon on
  // collinear vertices, non-coplanar input, non-convex loops or mu <= 0.
  static TerrainPolygon make(std::string id, std::vector<Vec3> vertices,
                             double mu = 0.7);

  // n . x = plane_offset() for points on the supporting plane.
  double plane_offset() const { return normal.dot(vertices.front()); }
  Vec3 centroid3d() const;
  double top_height() const;  // max vertex z
};

// A x <= b (edge rows, unit row norms) plus the supporting-plane equality.
struct HalfspaceRegion {
  Eigen::MatrixXd A_ineq;    // rows x 3, one row per polygon edge
  Eigen::VectorXd b_ineq;
  Eigen::RowVector3d A_eq;   // unit plane normal
  double b_eq = 0.0;

  bool contains(const Vec3& p, double tol = 1e-9) const;
};

HalfspaceRegion polygon_to_halfspaces(const TerrainPolygon& poly);

// Inscribed polyhedral friction cone: admissible forces satisfy
// facets[i] . f <= 0 for all i, which implies f . normal >= 0 and
// |f_tangential| <= mu * (f . normal).
struct FrictionPyramid {
  Vec3 normal = Vec3::UnitZ();
  double mu = 0.7;
  std::vector<Vec3> facets;

  static FrictionPyramid make(const Vec3& normal, double mu, int n_facets = 4);
  bool admits(const Vec3& f, double tol = 1e-9) const;
};

// Axis-aligned cell in world xy. Cells are half-open: [xmin,xmax) x [ymin,ymax).
struct CellRect {
  double xmin = 0, ymin = 0, xmax = 0, ymax = 0;
  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }
  Vec2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
};

// --- 2D helpers used by classification and foothold projection ---

std::vector<Vec2> project_xy(const TerrainPolygon& poly);
std::vector<Vec2> clip_polygon_to_rect(const std::vector<Vec2>& poly,
                                       const CellRect& cell);
double polygon_area_2d(const std::vector<Vec2>& poly);
Vec2 polygon_centroid_2d(const std::vector<Vec2>& poly);
bool point_in_polygon_2d(const std::vector<Vec2>& poly, const Vec2& p,
                         double tol = 1e-9);
Vec2 closest_point_in_polygon_2d(const std::vector<Vec2>& poly, const Vec2& p);

enum class TerrainFamily { Unstructured, Rebar };

// Unstructured terrain type ids.
enum : int {
  kFlat = 0,
  kHigh = 1,
  kLow = 2,
  kDenseStone = 3,
  kSparseStone = 4,
  kGap = 5,
  kHighGap = 6,
  kLowGap = 7,
  kObstacle = 8,
};

// Rebar cells are typed by the pair (sparsity along x, sparsity along y),
// each in {Dense, Sparse, ExtremeSparse, Limited}; Limited covers both the
// single-rebar and no-rebar cases. Type id = 4*cx + cy; (Limited, Limited)
// maps to the obstacle id 15.
enum class RebarSparsity : int { Dense = 0, Sparse = 1, ExtremeSparse = 2, Limited = 3 };

struct ClassificationRules {
  TerrainFamily family = TerrainFamily::Unstructured;
  double gap_threshold = 0.15;    // overlap-area ratio below => gap family
  double elev_threshold = 0.08;   // m above/below reference => high/low
  double reference_height = 0.0;
  double full_coverage = 0.90;    // single-polygon ratio at/above => flat/high/low
  double stone_dense_max_gap = 0.10;
  double rebar_dense_max_gap = 0.15;   // dense band tops out here
  double rebar_sparse_max_gap = 0.35;  // sparse band; beyond => extreme sparse
  double alignment_tol_deg = 20.0;     // skew tolerance for rebar direction
  double rebar_min_aspect = 2.0;       // elongation needed to count as a rebar
  bool extreme_is_obstacle = false;    // map extreme-sparse cells to obstacle

  int num_types() const { return family == TerrainFamily::Rebar ? 16 : 9; }
  int obstacle_type() const { return family == TerrainFamily::Rebar ? 15 : 8; }
  const char* type_name(int t) const;
};

// Deterministic total map from local geometry to a terrain type id in
// [0, rules.num_types()). Inputs are the polygon overlap count, the
// per-direction spacing of the overlapping pieces, the total overlap-area
// ratio and the mean height of the overlap.
int classify_cell(const std::vector<TerrainPolygon>& polys,
                  const CellRect& cell, const ClassificationRules& rules);

// Largest support gap along one axis among intervals, including the gaps to
// the cell border. Intervals are merged before measuring.
double max_gap_along_axis(std::vector<std::pair<double, double>> intervals,
                          double lo, double hi);

}  // namespace locoplan
