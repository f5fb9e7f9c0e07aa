#include "locoplan/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace locoplan {

namespace {

Vec3 newell_normal(const std::vector<Vec3>& v) {
  Vec3 n = Vec3::Zero();
  for (size_t i = 0; i < v.size(); ++i) {
    const Vec3& a = v[i];
    const Vec3& b = v[(i + 1) % v.size()];
    n.x() += (a.y() - b.y()) * (a.z() + b.z());
    n.y() += (a.z() - b.z()) * (a.x() + b.x());
    n.z() += (a.x() - b.x()) * (a.y() + b.y());
  }
  return n;
}

}  // namespace

TerrainPolygon TerrainPolygon::make(std::string id, std::vector<Vec3> vertices,
                                    double mu) {
  if (vertices.size() < 3)
    throw DegeneratePolygon("polygon '" + id + "': fewer than 3 vertices");
  if (!(mu > 0.0))
    throw DegeneratePolygon("polygon '" + id + "': mu must be positive");

  Vec3 n = newell_normal(vertices);
  const double nn = n.norm();
  double scale = 0.0;
  for (const Vec3& v : vertices) scale = std::max(scale, v.norm());
  if (nn <= 1e-12 * std::max(1.0, scale * scale))
    throw DegeneratePolygon("polygon '" + id + "': vertices are collinear");
  n /= nn;
  if (n.z() < 0.0) n = -n;

  const double d = n.dot(vertices.front());
  for (const Vec3& v : vertices) {
    if (std::abs(n.dot(v) - d) > 1e-9 * std::max(1.0, scale))
      throw DegeneratePolygon("polygon '" + id + "': vertices not coplanar");
  }

  // Convexity: consecutive edge cross products may not flip sign along n.
  int sign = 0;
  const size_t k = vertices.size();
  for (size_t i = 0; i < k; ++i) {
    const Vec3 e0 = vertices[(i + 1) % k] - vertices[i];
    const Vec3 e1 = vertices[(i + 2) % k] - vertices[(i + 1) % k];
    const double c = n.dot(e0.cross(e1));
    if (std::abs(c) <= 1e-12) continue;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    else if (s != sign)
      throw DegeneratePolygon("polygon '" + id + "': not convex");
  }

  TerrainPolygon out;
  out.id = std::move(id);
  out.vertices = std::move(vertices);
  out.mu = mu;
  out.normal = n;
  return out;
}

Vec3 TerrainPolygon::centroid3d() const {
  Vec3 c = Vec3::Zero();
  for (const Vec3& v : vertices) c += v;
  return c / double(vertices.size());
}

double TerrainPolygon::top_height() const {
  double z = vertices.front().z();
  for (const Vec3& v : vertices) z = std::max(z, v.z());
  return z;
}

bool HalfspaceRegion::contains(const Vec3& p, double tol) const {
  if (std::abs(A_eq.dot(p) - b_eq) > tol) return false;
  for (int i = 0; i < A_ineq.rows(); ++i)
    if (A_ineq.row(i).dot(p) > b_ineq(i) + tol) return false;
  return true;
}

HalfspaceRegion polygon_to_halfspaces(const TerrainPolygon& poly) {
  const size_t k = poly.vertices.size();
  HalfspaceRegion region;
  region.A_eq = poly.normal.transpose();
  region.b_eq = poly.plane_offset();
  region.A_ineq.resize(long(k), 3);
  region.b_ineq.resize(long(k));

  const Vec3 c = poly.centroid3d();
  for (size_t i = 0; i < k; ++i) {
    const Vec3& a = poly.vertices[i];
    const Vec3& b = poly.vertices[(i + 1) % k];
    Vec3 u = (b - a).cross(poly.normal);
    const double un = u.norm();
    if (un <= 1e-14) throw DegeneratePolygon("polygon '" + poly.id + "': zero-length edge");
    u /= un;
    double rhs = u.dot(a);
    if (u.dot(c) > rhs) {  // make the centroid feasible
      u = -u;
      rhs = -rhs;
    }
    region.A_ineq.row(long(i)) = u.transpose();
    region.b_ineq(long(i)) = rhs;
  }
  return region;
}

FrictionPyramid FrictionPyramid::make(const Vec3& normal, double mu, int n_facets) {
  if (n_facets < 3) n_facets = 4;
  FrictionPyramid pyr;
  pyr.normal = normal.normalized();
  pyr.mu = mu;

  const Vec3 seed = std::abs(pyr.normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t1 = (seed - pyr.normal * seed.dot(pyr.normal)).normalized();
  const Vec3 t2 = pyr.normal.cross(t1);

  // Inscribed approximation: facet count k gives coefficient mu*cos(pi/k).
  const double eta = mu * std::cos(M_PI / double(n_facets));
  pyr.facets.reserve(size_t(n_facets));
  for (int i = 0; i < n_facets; ++i) {
    const double phi = 2.0 * M_PI * double(i) / double(n_facets);
    const Vec3 u = std::cos(phi) * t1 + std::sin(phi) * t2;
    pyr.facets.push_back(u - eta * pyr.normal);
  }
  return pyr;
}

bool FrictionPyramid::admits(const Vec3& f, double tol) const {
  for (const Vec3& g : facets)
    if (g.dot(f) > tol) return false;
  return true;
}

std::vector<Vec2> project_xy(const TerrainPolygon& poly) {
  std::vector<Vec2> out;
  out.reserve(poly.vertices.size());
  for (const Vec3& v : poly.vertices) out.push_back(v.head<2>());
  return out;
}

std::vector<Vec2> clip_polygon_to_rect(const std::vector<Vec2>& poly,
                                       const CellRect& cell) {
  // Sutherland-Hodgman against each rectangle side.
  auto clip = [](const std::vector<Vec2>& in, auto inside, auto intersect) {
    std::vector<Vec2> out;
    const size_t k = in.size();
    for (size_t i = 0; i < k; ++i) {
      const Vec2& a = in[i];
      const Vec2& b = in[(i + 1) % k];
      const bool ia = inside(a), ib = inside(b);
      if (ia) {
        out.push_back(a);
        if (!ib) out.push_back(intersect(a, b));
      } else if (ib) {
        out.push_back(intersect(a, b));
      }
    }
    return out;
  };
  auto lerp_x = [](const Vec2& a, const Vec2& b, double x) {
    const double t = (x - a.x()) / (b.x() - a.x());
    return Vec2(x, a.y() + t * (b.y() - a.y()));
  };
  auto lerp_y = [](const Vec2& a, const Vec2& b, double y) {
    const double t = (y - a.y()) / (b.y() - a.y());
    return Vec2(a.x() + t * (b.x() - a.x()), y);
  };

  std::vector<Vec2> p = poly;
  if (p.empty()) return p;
  p = clip(p, [&](const Vec2& v) { return v.x() >= cell.xmin; },
           [&](const Vec2& a, const Vec2& b) { return lerp_x(a, b, cell.xmin); });
  if (p.empty()) return p;
  p = clip(p, [&](const Vec2& v) { return v.x() <= cell.xmax; },
           [&](const Vec2& a, const Vec2& b) { return lerp_x(a, b, cell.xmax); });
  if (p.empty()) return p;
  p = clip(p, [&](const Vec2& v) { return v.y() >= cell.ymin; },
           [&](const Vec2& a, const Vec2& b) { return lerp_y(a, b, cell.ymin); });
  if (p.empty()) return p;
  p = clip(p, [&](const Vec2& v) { return v.y() <= cell.ymax; },
           [&](const Vec2& a, const Vec2& b) { return lerp_y(a, b, cell.ymax); });
  return p;
}

double polygon_area_2d(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

Vec2 polygon_centroid_2d(const std::vector<Vec2>& poly) {
  if (poly.empty()) return Vec2::Zero();
  double a2 = 0.0;
  Vec2 c = Vec2::Zero();
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& p = poly[i];
    const Vec2& q = poly[(i + 1) % poly.size()];
    const double w = p.x() * q.y() - q.x() * p.y();
    a2 += w;
    c += w * (p + q);
  }
  if (std::abs(a2) < 1e-14) {
    c = Vec2::Zero();
    for (const Vec2& p : poly) c += p;
    return c / double(poly.size());
  }
  return c / (3.0 * a2);
}

bool point_in_polygon_2d(const std::vector<Vec2>& poly, const Vec2& p, double tol) {
  if (poly.size() < 3) return false;
  // Convex test: p on the inner side of every edge, either orientation.
  const Vec2 c = polygon_centroid_2d(poly);
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    Vec2 e = b - a;
    Vec2 n(e.y(), -e.x());  // one of the two edge normals
    const double nl = n.norm();
    if (nl < 1e-14) continue;
    n /= nl;
    if (n.dot(c - a) > 0) n = -n;  // outward
    if (n.dot(p - a) > tol) return false;
  }
  return true;
}

Vec2 closest_point_in_polygon_2d(const std::vector<Vec2>& poly, const Vec2& p) {
  if (poly.empty()) return p;
  if (poly.size() == 1) return poly.front();
  if (point_in_polygon_2d(poly, p, 0.0)) return p;
  double best = std::numeric_limits<double>::infinity();
  Vec2 arg = poly.front();
  for (size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    const Vec2 e = b - a;
    const double len2 = e.squaredNorm();
    double t = len2 > 0 ? (p - a).dot(e) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const Vec2 q = a + t * e;
    const double d = (q - p).squaredNorm();
    if (d < best) {
      best = d;
      arg = q;
    }
  }
  return arg;
}

double max_gap_along_axis(std::vector<std::pair<double, double>> intervals,
                          double lo, double hi) {
  if (intervals.empty()) return hi - lo;
  std::sort(intervals.begin(), intervals.end());
  // merge
  std::vector<std::pair<double, double>> merged;
  for (const auto& iv : intervals) {
    if (!merged.empty() && iv.first <= merged.back().second + 1e-12)
      merged.back().second = std::max(merged.back().second, iv.second);
    else
      merged.push_back(iv);
  }
  double gap = std::max(0.0, merged.front().first - lo);
  for (size_t i = 0; i + 1 < merged.size(); ++i)
    gap = std::max(gap, merged[i + 1].first - merged[i].second);
  gap = std::max(gap, hi - merged.back().second);
  return gap;
}

const char* ClassificationRules::type_name(int t) const {
  if (family == TerrainFamily::Rebar) {
    static const char* names[16] = {
        "rebar_dd", "rebar_ds", "rebar_de", "rebar_dl",
        "rebar_sd", "rebar_ss", "rebar_se", "rebar_sl",
        "rebar_ed", "rebar_es", "rebar_ee", "rebar_el",
        "rebar_ld", "rebar_ls", "rebar_le", "obstacle"};
    return t >= 0 && t < 16 ? names[t] : "invalid";
  }
  static const char* names[9] = {"flat",       "high",     "low",
                                 "dense_stone", "sparse_stone", "gap",
                                 "high_gap",   "low_gap",  "obstacle"};
  return t >= 0 && t < 9 ? names[t] : "invalid";
}

namespace {

struct Overlap {
  double area = 0;
  double height = 0;           // plane height at the clipped centroid
  double xlo = 0, xhi = 0;     // xy extent of the clipped piece
  double ylo = 0, yhi = 0;
  const TerrainPolygon* poly = nullptr;
};

double plane_height_at(const TerrainPolygon& poly, const Vec2& p) {
  const Vec3& n = poly.normal;
  if (std::abs(n.z()) < 1e-9) return poly.centroid3d().z();
  return (poly.plane_offset() - n.x() * p.x() - n.y() * p.y()) / n.z();
}

// Direction of the longest edge, and the aspect ratio of the xy projection
// measured in that direction's frame.
std::pair<Vec2, double> dominant_direction(const std::vector<Vec2>& proj) {
  Vec2 dir(1, 0);
  double best = -1;
  for (size_t i = 0; i < proj.size(); ++i) {
    const Vec2 e = proj[(i + 1) % proj.size()] - proj[i];
    const double l = e.norm();
    if (l > best) {
      best = l;
      dir = e / l;
    }
  }
  double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
  const Vec2 nrm(-dir.y(), dir.x());
  for (const Vec2& p : proj) {
    const double u = dir.dot(p), v = nrm.dot(p);
    ulo = std::min(ulo, u);
    uhi = std::max(uhi, u);
    vlo = std::min(vlo, v);
    vhi = std::max(vhi, v);
  }
  const double len = uhi - ulo, wid = vhi - vlo;
  return {dir, wid > 1e-12 ? len / wid : 1e12};
}

}  // namespace

int classify_cell(const std::vector<TerrainPolygon>& polys,
                  const CellRect& cell, const ClassificationRules& rules) {
  std::vector<Overlap> hits;
  double cover_area = 0;
  for (const TerrainPolygon& poly : polys) {
    const auto clipped = clip_polygon_to_rect(project_xy(poly), cell);
    const double a = polygon_area_2d(clipped);
    if (a <= 1e-12) continue;
    Overlap o;
    o.area = a;
    o.height = plane_height_at(poly, polygon_centroid_2d(clipped));
    o.xlo = o.ylo = 1e300;
    o.xhi = o.yhi = -1e300;
    for (const Vec2& p : clipped) {
      o.xlo = std::min(o.xlo, p.x());
      o.xhi = std::max(o.xhi, p.x());
      o.ylo = std::min(o.ylo, p.y());
      o.yhi = std::max(o.yhi, p.y());
    }
    o.poly = &poly;
    hits.push_back(o);
    cover_area += a;
  }

  const double ratio = std::min(1.0, cover_area / cell.area());
  double mean_h = rules.reference_height;
  if (cover_area > 1e-12) {
    mean_h = 0;
    for (const Overlap& o : hits) mean_h += o.area * o.height;
    mean_h /= cover_area;
  }
  const int elev = mean_h > rules.reference_height + rules.elev_threshold ? 1
                   : mean_h < rules.reference_height - rules.elev_threshold ? -1
                   : 0;

  if (rules.family == TerrainFamily::Unstructured) {
    if (ratio < rules.gap_threshold)
      return elev > 0 ? kHighGap : elev < 0 ? kLowGap : kGap;
    if (hits.size() == 1 && ratio >= rules.full_coverage)
      return elev > 0 ? kHigh : elev < 0 ? kLow : kFlat;
    // stepping stones: spacing is the larger of the per-axis support gaps
    std::vector<std::pair<double, double>> xs, ys;
    for (const Overlap& o : hits) {
      xs.push_back({o.xlo, o.xhi});
      ys.push_back({o.ylo, o.yhi});
    }
    const double gap = std::max(max_gap_along_axis(xs, cell.xmin, cell.xmax),
                                max_gap_along_axis(ys, cell.ymin, cell.ymax));
    return gap <= rules.stone_dense_max_gap ? kDenseStone : kSparseStone;
  }

  // Rebar family: group elongated pieces by alignment with the two axes.
  const double tol = std::cos(rules.alignment_tol_deg * M_PI / 180.0);
  std::vector<std::pair<double, double>> along_x, along_y;  // x/y intervals
  for (const Overlap& o : hits) {
    const auto [dir, aspect] = dominant_direction(project_xy(*o.poly));
    if (aspect < rules.rebar_min_aspect) continue;
    if (std::abs(dir.y()) >= tol) {
      // runs along y; its x interval contributes to spacing along x
      along_x.push_back({o.xlo, o.xhi});
    } else if (std::abs(dir.x()) >= tol) {
      along_y.push_back({o.ylo, o.yhi});
    }
  }

  auto classify_dir = [&](std::vector<std::pair<double, double>> iv, double lo,
                          double hi) {
    if (iv.size() <= 1) return RebarSparsity::Limited;
    const double g = max_gap_along_axis(std::move(iv), lo, hi);
    if (g <= rules.rebar_dense_max_gap) return RebarSparsity::Dense;
    if (g <= rules.rebar_sparse_max_gap) return RebarSparsity::Sparse;
    return RebarSparsity::ExtremeSparse;
  };
  const RebarSparsity cx = classify_dir(std::move(along_x), cell.xmin, cell.xmax);
  const RebarSparsity cy = classify_dir(std::move(along_y), cell.ymin, cell.ymax);

  if (cx == RebarSparsity::Limited && cy == RebarSparsity::Limited)
    return rules.obstacle_type();
  if (rules.extreme_is_obstacle &&
      (cx == RebarSparsity::ExtremeSparse || cy == RebarSparsity::ExtremeSparse))
    return rules.obstacle_type();
  return 4 * int(cx) + int(cy);
}

}  // namespace locoplan
