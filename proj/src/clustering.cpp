#include "mcseg/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace mcseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = std::numbers::pi;

double dist(const PointMm& a, const PointMm& b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

struct MeanStd {
  double mean = 0.0, stdev = 0.0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= v.size();
  double var = 0.0;
  for (double x : v) var += (x - out.mean) * (x - out.mean);
  out.stdev = std::sqrt(var / v.size());
  return out;
}

double cross(const PointMm& o, const PointMm& a, const PointMm& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Andrew monotone chain, strict turns (collinear points dropped); returns the
// hull as CCW points, fewer than 3 when the input is degenerate.
std::vector<PointMm> convex_hull(std::vector<PointMm> pts) {
  std::sort(pts.begin(), pts.end(), [](const PointMm& a, const PointMm& b) {
    return a.x != b.x ? a.x < b.x : a.y < b.y;
  });
  pts.erase(std::unique(pts.begin(), pts.end(),
                        [](const PointMm& a, const PointMm& b) {
                          return a.x == b.x && a.y == b.y;
                        }),
            pts.end());
  const std::size_t n = pts.size();
  if (n < 3) return pts;
  std::vector<PointMm> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  const std::size_t lower = k + 1;
  for (std::size_t i = n - 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);  // last point repeats the first
  return hull;
}

double polygon_area(const std::vector<PointMm>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const PointMm& a = poly[i];
    const PointMm& b = poly[(i + 1) % poly.size()];
    s += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(s);
}

double polygon_perimeter(const std::vector<PointMm>& poly) {
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i)
    s += dist(poly[i], poly[(i + 1) % poly.size()]);
  return s;
}

double hull_diameter(const std::vector<PointMm>& poly) {
  double best = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i)
    for (std::size_t j = i + 1; j < poly.size(); ++j)
      best = std::max(best, dist(poly[i], poly[j]));
  return best;
}

// Minimum caliper width: over hull edges, the largest vertex distance to the
// edge's supporting line, minimized.
double hull_min_width(const std::vector<PointMm>& poly) {
  double best = kInf;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const PointMm& a = poly[i];
    const PointMm& b = poly[(i + 1) % poly.size()];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len = std::sqrt(ex * ex + ey * ey);
    if (len == 0.0) continue;
    double widest = 0.0;
    for (const PointMm& v : poly)
      widest = std::max(widest,
                        std::abs(ex * (v.y - a.y) - ey * (v.x - a.x)) / len);
    best = std::min(best, widest);
  }
  return best == kInf ? 0.0 : best;
}

}  // namespace

std::vector<ObjectShape> measure_objects(const LabeledMask& mask,
                                         double pixel_spacing_mm) {
  const double s = pixel_spacing_mm;
  std::vector<ObjectShape> shapes(mask.count);
  std::vector<long> area(mask.count, 0), edges(mask.count, 0);
  std::vector<double> sx(mask.count, 0.0), sy(mask.count, 0.0);

  const auto label_at = [&](int x, int y) -> int {
    if (x < 0 || y < 0 || x >= mask.width || y >= mask.height) return 0;
    return mask.labels[static_cast<std::size_t>(y) * mask.width + x];
  };
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int l = label_at(x, y);
      if (l <= 0) continue;
      ++area[l - 1];
      sx[l - 1] += x;
      sy[l - 1] += y;
      edges[l - 1] += (label_at(x - 1, y) != l) + (label_at(x + 1, y) != l) +
                      (label_at(x, y - 1) != l) + (label_at(x, y + 1) != l);
    }
  }
  // Second pass for the pixel-center covariance per object.
  std::vector<double> sxx(mask.count, 0.0), syy(mask.count, 0.0), sxy(mask.count, 0.0);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const int l = label_at(x, y);
      if (l <= 0) continue;
      const double dx = x - sx[l - 1] / area[l - 1];
      const double dy = y - sy[l - 1] / area[l - 1];
      sxx[l - 1] += dx * dx;
      syy[l - 1] += dy * dy;
      sxy[l - 1] += dx * dy;
    }
  }
  for (int i = 0; i < mask.count; ++i) {
    ObjectShape& o = shapes[i];
    o.cx_mm = sx[i] / area[i] * s;
    o.cy_mm = sy[i] / area[i] * s;
    o.area_mm2 = static_cast<double>(area[i]) * s * s;
    const double per = static_cast<double>(edges[i]) * s;
    o.circularity = per > 0.0 ? 4.0 * kPi * o.area_mm2 / (per * per) : 0.0;
    const double a = sxx[i] / area[i], c = syy[i] / area[i], b = sxy[i] / area[i];
    const double l1 = 0.5 * (a + c) + 0.5 * std::sqrt((a - c) * (a - c) + 4.0 * b * b);
    o.major_axis_mm = 4.0 * std::sqrt(std::max(0.0, l1)) * s;
  }
  return shapes;
}

OpticsProfile optics_order(const std::vector<PointMm>& points, int min_samples,
                           double max_eps) {
  if (points.empty()) throw DataError("no points to order");
  if (min_samples < 2) throw ParameterError("min_samples must be >= 2");
  if (!(max_eps > 0.0)) throw ParameterError("max_eps must be positive");
  const int n = static_cast<int>(points.size());

  // Core distance: (min_samples-1)-th nearest other point, inf beyond max_eps.
  std::vector<double> core(n, kInf);
  std::vector<double> scratch;
  for (int i = 0; i < n; ++i) {
    scratch.clear();
    for (int j = 0; j < n; ++j)
      if (j != i) scratch.push_back(dist(points[i], points[j]));
    const int k = min_samples - 1;
    if (static_cast<int>(scratch.size()) >= k) {
      std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
      const double d = scratch[k - 1];
      if (d <= max_eps) core[i] = d;
    }
  }

  OpticsProfile profile;
  profile.order.reserve(n);
  profile.reachability.reserve(n);
  profile.core_distance.reserve(n);

  std::vector<char> processed(n, 0), in_seeds(n, 0);
  std::vector<double> reach(n, kInf);

  const auto expand = [&](int p) {
    if (std::isinf(core[p])) return;
    for (int q = 0; q < n; ++q) {
      if (processed[q] || q == p) continue;
      const double d = dist(points[p], points[q]);
      if (d > max_eps) continue;
      const double candidate = std::max(core[p], d);
      if (!in_seeds[q]) {
        in_seeds[q] = 1;
        reach[q] = candidate;
      } else if (candidate < reach[q]) {
        reach[q] = candidate;
      }
    }
  };

  for (int start = 0; start < n; ++start) {
    if (processed[start]) continue;
    processed[start] = 1;
    profile.order.push_back(start);
    profile.reachability.push_back(kInf);
    profile.core_distance.push_back(core[start]);
    expand(start);
    for (;;) {
      int next = -1;
      for (int q = 0; q < n; ++q)
        if (in_seeds[q] && !processed[q] && (next < 0 || reach[q] < reach[next]))
          next = q;
      if (next < 0) break;
      processed[next] = 1;
      in_seeds[next] = 0;
      profile.order.push_back(next);
      profile.reachability.push_back(reach[next]);
      profile.core_distance.push_back(core[next]);
      expand(next);
    }
  }
  return profile;
}

std::vector<int> extract_clusters(const OpticsProfile& profile, double eps_cut) {
  if (eps_cut < 0.0) throw ParameterError("eps_cut must be >= 0");
  std::vector<int> labels(profile.order.size(), -1);
  int current = -1, next_label = 0;
  for (std::size_t i = 0; i < profile.order.size(); ++i) {
    const double r = profile.reachability[i];
    const double c = profile.core_distance[i];
    const bool r_exceeds = std::isinf(r) || r > eps_cut;
    const bool core_within = !std::isinf(c) && c <= eps_cut;
    int label;
    if (r_exceeds) {
      label = core_within ? (current = next_label++) : -1;
    } else {
      label = current;
    }
    labels[profile.order[i]] = label;
  }
  return labels;
}

const std::array<std::string, kClusterFeatureCount>& cluster_feature_names() {
  static const std::array<std::string, kClusterFeatureCount> names = {
      "point_count",          "hull_area_mm2",
      "hull_perimeter_mm",    "point_density_per_mm2",
      "hull_circularity",     "hull_aspect_ratio",
      "eccentricity",         "orientation_rad",
      "nn_dist_mean_mm",      "nn_dist_std_mm",
      "nn_dist_min_mm",       "nn_dist_max_mm",
      "pair_dist_mean_mm",    "pair_dist_std_mm",
      "radius_of_gyration_mm", "object_area_mean_mm2",
      "object_area_std_mm2",  "object_area_min_mm2",
      "object_area_max_mm2",  "object_circularity_mean",
      "object_circularity_std", "object_major_axis_mean_mm",
      "object_major_axis_std_mm", "central_fraction"};
  return names;
}

ClusterFeatures cluster_features(const std::vector<ObjectShape>& members) {
  if (members.empty()) throw DataError("cluster has no members");
  const int n = static_cast<int>(members.size());
  std::vector<PointMm> pts(n);
  for (int i = 0; i < n; ++i) pts[i] = {members[i].cx_mm, members[i].cy_mm};

  ClusterFeatures f{};
  f[0] = n;

  const std::vector<PointMm> hull = convex_hull(pts);
  const bool degenerate = hull.size() < 3;
  const double hull_area = degenerate ? 0.0 : polygon_area(hull);
  const double hull_per = degenerate ? 0.0 : polygon_perimeter(hull);
  f[1] = hull_area;
  f[2] = hull_per;
  f[3] = hull_area > 0.0 ? n / hull_area : 0.0;
  f[4] = hull_per > 0.0 ? 4.0 * kPi * hull_area / (hull_per * hull_per) : 0.0;
  if (!degenerate) {
    const double width = hull_min_width(hull);
    f[5] = width > 0.0 ? hull_diameter(hull) / width : 1.0;
  } else {
    f[5] = 1.0;
  }

  PointMm centroid{0.0, 0.0};
  for (const PointMm& p : pts) {
    centroid.x += p.x;
    centroid.y += p.y;
  }
  centroid.x /= n;
  centroid.y /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0, rg = 0.0;
  for (const PointMm& p : pts) {
    const double dx = p.x - centroid.x, dy = p.y - centroid.y;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
    rg += dx * dx + dy * dy;
  }
  sxx /= n;
  syy /= n;
  sxy /= n;
  const double disc = std::sqrt((sxx - syy) * (sxx - syy) + 4.0 * sxy * sxy);
  const double l1 = 0.5 * (sxx + syy) + 0.5 * disc;
  const double l2 = 0.5 * (sxx + syy) - 0.5 * disc;
  f[6] = l1 > 0.0 ? 1.0 - std::max(0.0, l2) / l1 : 0.0;
  f[7] = (sxy == 0.0 && sxx == syy) ? 0.0 : 0.5 * std::atan2(2.0 * sxy, sxx - syy);

  if (n >= 2) {
    std::vector<double> nn(n, kInf), pairwise;
    pairwise.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double d = dist(pts[i], pts[j]);
        pairwise.push_back(d);
        nn[i] = std::min(nn[i], d);
        nn[j] = std::min(nn[j], d);
      }
    }
    const MeanStd nn_ms = mean_std(nn);
    f[8] = nn_ms.mean;
    f[9] = nn_ms.stdev;
    f[10] = *std::min_element(nn.begin(), nn.end());
    f[11] = *std::max_element(nn.begin(), nn.end());
    const MeanStd pw = mean_std(pairwise);
    f[12] = pw.mean;
    f[13] = pw.stdev;
  }
  f[14] = std::sqrt(rg / n);

  std::vector<double> areas(n), circs(n), majors(n);
  for (int i = 0; i < n; ++i) {
    areas[i] = members[i].area_mm2;
    circs[i] = members[i].circularity;
    majors[i] = members[i].major_axis_mm;
  }
  const MeanStd am = mean_std(areas);
  f[15] = am.mean;
  f[16] = am.stdev;
  f[17] = *std::min_element(areas.begin(), areas.end());
  f[18] = *std::max_element(areas.begin(), areas.end());
  const MeanStd cm = mean_std(circs);
  f[19] = cm.mean;
  f[20] = cm.stdev;
  const MeanStd mm = mean_std(majors);
  f[21] = mm.mean;
  f[22] = mm.stdev;

  if (hull_area > 0.0) {
    const double limit = 0.5 * std::sqrt(hull_area / kPi);
    int inside = 0;
    for (const PointMm& p : pts) inside += dist(p, centroid) <= limit;
    f[23] = static_cast<double>(inside) / n;
  } else {
    f[23] = 1.0;
  }
  return f;
}

std::vector<std::vector<double>> standardize(
    const std::vector<std::vector<double>>& rows) {
  if (rows.size() < 2) throw DataError("standardize needs at least 2 rows");
  const std::size_t d = rows[0].size();
  for (const std::vector<double>& r : rows)
    if (r.size() != d) throw DataError("ragged feature matrix");

  std::vector<double> mean(d, 0.0), stdev(d, 0.0);
  for (const std::vector<double>& r : rows)
    for (std::size_t c = 0; c < d; ++c) mean[c] += r[c];
  for (std::size_t c = 0; c < d; ++c) mean[c] /= rows.size();
  for (const std::vector<double>& r : rows)
    for (std::size_t c = 0; c < d; ++c)
      stdev[c] += (r[c] - mean[c]) * (r[c] - mean[c]);
  for (std::size_t c = 0; c < d; ++c) stdev[c] = std::sqrt(stdev[c] / rows.size());

  std::vector<std::vector<double>> out(rows.size(), std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < d; ++c)
      out[i][c] = stdev[c] > 0.0 ? (rows[i][c] - mean[c]) / stdev[c] : 0.0;
  return out;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

KmeansResult kmeans(const std::vector<std::vector<double>>& rows, int k,
                    std::uint64_t seed, int restarts) {
  const int n = static_cast<int>(rows.size());
  if (k < 1) throw ParameterError("k must be >= 1");
  if (restarts < 1) throw ParameterError("restarts must be >= 1");
  if (n < k) throw DataError("fewer rows than clusters");
  const std::size_t d = rows[0].size();
  for (const std::vector<double>& r : rows)
    if (r.size() != d) throw DataError("ragged feature matrix");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, n - 1);

  KmeansResult best;
  bool have_best = false;
  for (int restart = 0; restart < restarts; ++restart) {
    // Greedy farthest-point seeding from a random first center.
    std::vector<std::vector<double>> centers;
    centers.push_back(rows[pick(rng)]);
    std::vector<double> d2(n);
    for (int i = 0; i < n; ++i) d2[i] = sq_dist(rows[i], centers[0]);
    while (static_cast<int>(centers.size()) < k) {
      int far = 0;
      for (int i = 1; i < n; ++i)
        if (d2[i] > d2[far]) far = i;
      centers.push_back(rows[far]);
      for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(rows[i], centers.back()));
    }

    std::vector<int> labels(n, -1);
    for (int iter = 0; iter < 200; ++iter) {
      bool changed = false;
      for (int i = 0; i < n; ++i) {
        int bestc = 0;
        double bestd = sq_dist(rows[i], centers[0]);
        for (int c = 1; c < k; ++c) {
          const double dd = sq_dist(rows[i], centers[c]);
          if (dd < bestd) {
            bestd = dd;
            bestc = c;
          }
        }
        if (labels[i] != bestc) {
          labels[i] = bestc;
          changed = true;
        }
      }
      std::vector<int> size(k, 0);
      for (int i = 0; i < n; ++i) ++size[labels[i]];
      for (int c = 0; c < k; ++c) {
        if (size[c] > 0) continue;
        // Move the point farthest from its center into the empty cluster.
        int far = -1;
        double fard = -1.0;
        for (int i = 0; i < n; ++i) {
          if (size[labels[i]] <= 1) continue;
          const double dd = sq_dist(rows[i], centers[labels[i]]);
          if (dd > fard) {
            fard = dd;
            far = i;
          }
        }
        if (far < 0) break;
        --size[labels[far]];
        labels[far] = c;
        ++size[c];
        changed = true;
      }
      std::vector<std::vector<double>> next(k, std::vector<double>(d, 0.0));
      for (int i = 0; i < n; ++i)
        for (std::size_t c = 0; c < d; ++c) next[labels[i]][c] += rows[i][c];
      for (int c = 0; c < k; ++c) {
        if (size[c] == 0) {
          next[c] = centers[c];
          continue;
        }
        for (std::size_t j = 0; j < d; ++j) next[c][j] /= size[c];
      }
      centers = std::move(next);
      if (!changed) break;
    }

    double inertia = 0.0;
    for (int i = 0; i < n; ++i) inertia += sq_dist(rows[i], centers[labels[i]]);
    if (!have_best || inertia < best.inertia) {
      best.labels = labels;
      best.inertia = inertia;
      best.centers = centers;
      have_best = true;
    }
  }
  return best;
}

double homogeneity(const std::vector<int>& true_labels,
                   const std::vector<int>& pred_labels) {
  if (true_labels.size() != pred_labels.size())
    throw DataError("label vectors differ in length");
  if (true_labels.empty()) throw DataError("empty label vectors");
  const double total = static_cast<double>(true_labels.size());

  std::map<int, long> class_count, cluster_count;
  std::map<std::pair<int, int>, long> joint;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    ++class_count[true_labels[i]];
    ++cluster_count[pred_labels[i]];
    ++joint[{pred_labels[i], true_labels[i]}];
  }

  double h_c = 0.0;
  for (const auto& [c, cnt] : class_count) {
    const double p = cnt / total;
    h_c -= p * std::log(p);
  }
  if (h_c == 0.0) return 1.0;

  double h_ck = 0.0;
  for (const auto& [key, cnt] : joint) {
    const double p = cnt / total;
    h_ck -= p * std::log(static_cast<double>(cnt) / cluster_count[key.first]);
  }
  return std::clamp(1.0 - h_ck / h_c, 0.0, 1.0);
}

std::vector<ClusterLabelRow> duplicate_multilabel(
    const std::vector<std::pair<int, std::string>>& cluster_image,
    const std::map<std::string, std::vector<std::string>>& image_labels) {
  std::vector<ClusterLabelRow> rows;
  for (const auto& [cluster, image] : cluster_image) {
    const auto it = image_labels.find(image);
    if (it == image_labels.end() || it->second.empty())
      throw DataError("image '" + image + "' has no distribution label");
    for (const std::string& label : it->second) rows.push_back({cluster, label});
  }
  return rows;
}

}  // namespace mcseg
