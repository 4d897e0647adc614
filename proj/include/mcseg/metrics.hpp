#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcseg/combiner.hpp"
#include "mcseg/core.hpp"

namespace mcseg {

// Intersection over union of two masks; both empty yields 1.
double iou(const BinaryMask& a, const BinaryMask& b);

// Mean of the foreground IoU and the IoU of the complemented masks.
double mean_iou_per_image(const BinaryMask& pred, const BinaryMask& ref);

struct ObjectStats {
  long area = 0;
  double cx = 0.0, cy = 0.0;  // pixel centroid
};

std::vector<ObjectStats> object_stats(const LabeledMask& mask);  // index label-1

struct ObjectIou {
  int ref_label = 0;
  int pred_label = 0;  // 0 when no prediction object intersects
  double value = 0.0;
};

// Per reference object of area >= 2 px: IoU against the prediction object with
// maximal intersection (ties: larger IoU, then smaller prediction label).
// Reference objects below 2 px are skipped; an empty result means the metric
// is absent for the image.
std::vector<ObjectIou> iou_per_object(const LabeledMask& pred, const LabeledMask& ref);

struct MatchRule {
  double max_centroid_dist_px = 5.0;
  double min_iou = 0.3;
};

struct MatchResult {
  long tp = 0, fp = 0, fn = 0;
  std::vector<std::pair<int, int>> pairs;  // (pred label, ref label)
};

// A prediction object can match a reference object if their centroid distance
// is <= rule.max_centroid_dist_px or their IoU >= rule.min_iou. Qualifying
// pairs are assigned greedily, one-to-one, in ascending centroid-distance
// order (ties: prediction label, then reference label).
MatchResult match_objects(const LabeledMask& pred, const LabeledMask& ref,
                          const MatchRule& rule);

// One evaluation image: candidate objects, the proximity map they are scored
// against, and the reference objects.
struct FrocImage {
  LabeledMask candidates;
  ProximityMap proximity;
  LabeledMask refs;
  double pixel_spacing_mm = 0.070;
};

// Detection tallies per threshold (parallel to the threshold grid).
struct ImageTally {
  std::vector<long> tp, fp;
  long n_ref = 0;
  double area_cm2 = 0.0;
};

ImageTally image_tally(const FrocImage& image, const std::vector<double>& thresholds,
                       double o_thr, OverlapMode mode, const MatchRule& rule);

std::vector<ImageTally> froc_tallies(const std::vector<FrocImage>& images,
                                     const std::vector<double>& thresholds, double o_thr,
                                     OverlapMode mode, const MatchRule& rule,
                                     int threads = 1);

struct FrocPoint {
  double p_thr = 0.0;
  long tp = 0, fp = 0, n_ref = 0;
  double tpr = 0.0;
  double fp_per_cm2 = 0.0;
};

std::vector<FrocPoint> froc_curve(const std::vector<ImageTally>& tallies,
                                  const std::vector<double>& thresholds);

// Uniform threshold grid over [0,1] with `count` points.
std::vector<double> threshold_grid(int count);

// Trapezoid area under TPR(FP) for FP in [0, fp_max], constant-extended beyond
// the observed endpoints and normalized by fp_max so the result is in [0,1].
double partial_auc(const std::vector<FrocPoint>& points, double fp_max);

struct PaucSummary {
  double mean = 0.0;
  double low95 = 0.0;
  double high95 = 0.0;
  int samples = 0;
  std::uint64_t seed = 0;
};

// Bootstrap over images: resample with replacement, rebuild the aggregate
// curve, integrate; percentile CI at 2.5/97.5.
PaucSummary pauc_bootstrap(const std::vector<ImageTally>& tallies,
                           const std::vector<double>& thresholds, double fp_max,
                           int samples, std::uint64_t seed);

// Curve point closest to (TPR 1, FP 0) by Euclidean distance; ties prefer
// higher TPR, then the earlier point.
std::size_t operating_point(const std::vector<FrocPoint>& points);

void write_froc_csv(const std::vector<FrocPoint>& points, const std::string& path);
void write_froc_svg(const std::vector<FrocPoint>& points, const std::string& path);

}  // namespace mcseg
