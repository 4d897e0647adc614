#pragma once

#include <vector>

#include "mcseg/core.hpp"
#include "mcseg/scale_space.hpp"

namespace mcseg {

struct HessianPlanes {
  int width = 0;
  int height = 0;
  std::vector<double> xx, xy, yy;
};

// Central differences with reflect padding:
//   hxx = f(x+1,y) - 2 f(x,y) + f(x-1,y)
//   hyy = f(x,y+1) - 2 f(x,y) + f(x,y-1)
//   hxy = (f(x+1,y+1) - f(x+1,y-1) - f(x-1,y+1) + f(x-1,y-1)) / 4
HessianPlanes hessian_planes(const std::vector<double>& slice, int width, int height);

// Pixel is set iff tr(H) < 0 and (det(H) < 0 or |det(H)|/tr(H)^2 <= h_thr).
BinaryMask hessian_mask(const std::vector<double>& slice, int width, int height, double h_thr);

// One mask per stack slice.
std::vector<BinaryMask> hessian_masks(const DoGStack& stack, double h_thr, int threads = 1);

// 8-connected components, labels 1..count assigned in raster discovery order.
LabeledMask label_components(const BinaryMask& mask);

// For each blob, looks up the Hessian mask at the blob's scale and unions the
// 8-connected component spanning the blob center into one mask. If the exact
// center pixel is unset, the nearest set pixel within a 2 px radius is used
// (ties: smaller linear index); blobs with no set pixel in range contribute
// nothing.
BinaryMask extract_blob_objects(const std::vector<Blob>& blobs,
                                const std::vector<BinaryMask>& masks);

struct HdogParams {
  double sigma_min = 1.18;
  double sigma_max = 3.1;
  int n_scales = 8;
  double t_dog = 0.006;
  double o_dog = 1.0;
  double h_thr = 1.4;
};

struct HdogResult {
  BinaryMask mask;
  std::vector<Blob> blobs;
};

// Full candidate-object stage: stack, maxima, overlap pruning, Hessian masks,
// object extraction.
HdogResult hdog_segment(const GrayImage& img, const HdogParams& params, int threads = 1);

}  // namespace mcseg
