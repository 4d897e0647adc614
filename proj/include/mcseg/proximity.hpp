#pragma once

#include "mcseg/core.hpp"

namespace mcseg {

struct ProximityParams {
  double xi = 10.0;   // characteristic distance, pixels
  double alpha = 1.0; // shape parameter, nonzero
};

// g(r) = (exp(alpha*(1 - r/xi)) - 1) / (exp(alpha) - 1) for r <= xi, else 0.
// Strictly decreasing in r for any nonzero alpha, g(0) = 1, g(xi) = 0.
double proximity_g(double r, const ProximityParams& params);

// Exact squared Euclidean distance to the nearest set pixel (two-pass lower
// envelope transform); unreachable pixels get a value larger than any image
// distance.
std::vector<double> squared_distance_transform(const BinaryMask& sources);

// P(x,y) = g(distance to nearest annotation pixel). Equals the max of g over
// all annotation pixels because g is strictly decreasing.
ProximityMap proximity_map(const BinaryMask& annotations, const ProximityParams& params,
                           double pixel_spacing_mm = 0.070);

// Region mask {P >= p_thr}; p_thr outside [0,1] is a parameter error.
BinaryMask threshold_map(const ProximityMap& map, double p_thr);

}  // namespace mcseg
