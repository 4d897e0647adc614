#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mcseg/core.hpp"

namespace mcseg {

struct PointMm {
  double x = 0.0, y = 0.0;
};

// Shape summary of one segmented object. Perimeter is the exposed pixel-edge
// count times the pixel spacing (exact for the pixel-boundary interpretation);
// circularity is 4*pi*A/P^2 under that estimator; the major axis is
// 4*sqrt(lambda_max) of the pixel-center covariance, scaled to mm.
struct ObjectShape {
  double cx_mm = 0.0, cy_mm = 0.0;
  double area_mm2 = 0.0;
  double circularity = 0.0;
  double major_axis_mm = 0.0;
};

std::vector<ObjectShape> measure_objects(const LabeledMask& mask,
                                         double pixel_spacing_mm);

// OPTICS visit order with reachability and core distances (parallel arrays,
// indexed by visit position; order[i] is the point index). The first point of
// each expansion group has reachability infinity. Core distance = distance to
// the (min_samples-1)-th nearest *other* point — the point counts toward its
// own neighborhood — and is infinity when that neighbor lies beyond max_eps.
struct OpticsProfile {
  std::vector<int> order;
  std::vector<double> reachability;
  std::vector<double> core_distance;
};

OpticsProfile optics_order(const std::vector<PointMm>& points, int min_samples,
                           double max_eps);

// Eps-cut extraction, DBSCAN-equivalent: a point whose reachability exceeds
// eps_cut (or is undefined) starts a new cluster if its core distance is
// within eps_cut, and is noise otherwise; any other point joins the cluster
// most recently started. Returns one label per point, -1 for noise.
std::vector<int> extract_clusters(const OpticsProfile& profile, double eps_cut);

inline constexpr int kClusterFeatureCount = 24;
using ClusterFeatures = std::array<double, kClusterFeatureCount>;

const std::array<std::string, kClusterFeatureCount>& cluster_feature_names();

// Fixed-order descriptor vector for one cluster of segmented objects:
//   1 point count; 2 convex hull area (mm^2); 3 hull perimeter (mm);
//   4 point density (count / hull area); 5 hull circularity 4*pi*A/P^2;
//   6 hull aspect ratio (diameter / min caliper width);
//   7 centroid-covariance eccentricity (1 - lambda_min/lambda_max);
//   8 principal orientation angle (rad, 0.5*atan2(2Sxy, Sxx-Syy));
//   9-12 nearest-neighbor distance mean/std/min/max (mm);
//   13-14 pairwise distance mean/std (mm); 15 radius of gyration (mm);
//   16-19 member area mean/std/min/max (mm^2);
//   20-21 member circularity mean/std; 22-23 member major axis mean/std (mm);
//   24 fraction of members within half the hull-equivalent radius of the
//      centroid.
// Degenerate fallbacks (fewer than 3 members, or a collapsed hull): hull area,
// perimeter, density, and circularity 0; aspect ratio 1; eccentricity and
// orientation 0 when the covariance is isotropic or undefined; NN and pairwise
// statistics 0 for singletons; central fraction 1 when the hull has no area.
// All statistics use the population standard deviation.
ClusterFeatures cluster_features(const std::vector<ObjectShape>& members);

// Column-wise z-score with population stdev; zero-variance columns map to 0.
std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& rows);

struct KmeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<std::vector<double>> centers;
};

// Lloyd iterations from greedy farthest-point seeding (first center drawn
// uniformly per restart); best inertia over `restarts` restarts; empty
// clusters repaired by moving the point farthest from its center.
KmeansResult kmeans(const std::vector<std::vector<double>>& rows, int k,
                    std::uint64_t seed, int restarts = 10);

// 1 - H(C|K)/H(C) with natural-log entropies; 1.0 when H(C) = 0.
double homogeneity(const std::vector<int>& true_labels,
                   const std::vector<int>& pred_labels);

struct ClusterLabelRow {
  int cluster = 0;
  std::string label;
};

// One output row per (cluster, image label) pair; clusters from images that
// carry several distribution labels appear once per label.
std::vector<ClusterLabelRow> duplicate_multilabel(
    const std::vector<std::pair<int, std::string>>& cluster_image,
    const std::map<std::string, std::vector<std::string>>& image_labels);

}  // namespace mcseg
