#pragma once

#include <vector>

#include "mcseg/core.hpp"

namespace mcseg {

// Geometric scale sequence sigma_n = k^n * sigma_min with
// k = (sigma_max/sigma_min)^(1/(n_scales-1)); the last entry is pinned to
// sigma_max exactly.
struct ScaleSequence {
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  double k = 0.0;
  std::vector<double> sigmas;
};

ScaleSequence make_scale_sequence(double sigma_min, double sigma_max, int n_scales);

// Unit-sum sampled Gaussian, radius ceil(4*sigma); kernel[radius] is the center tap.
std::vector<double> gaussian_kernel(double sigma);

// Separable blur with reflect padding (index -1 maps to 0, -2 to 1, ...).
GrayImage gaussian_blur(const GrayImage& img, double sigma);

// Scale-normalized difference stack. Slice n holds
// sigma_n/(sigma_{n+1}-sigma_n) * (L(sigma_n) - L(sigma_{n+1})), the order that
// makes bright blobs positive local maxima.
struct DoGStack {
  int width = 0;
  int height = 0;
  ScaleSequence scales;
  std::vector<std::vector<double>> slices;  // scales.sigmas.size() - 1 slices

  double at(int slice, int x, int y) const {
    return slices[slice][static_cast<std::size_t>(y) * width + x];
  }
};

DoGStack dog_stack(const GrayImage& img, const ScaleSequence& scales, int threads = 1);

struct Blob {
  int x = 0;
  int y = 0;
  double sigma = 0.0;     // sigma_n of the winning slice
  double response = 0.0;  // stack value at the maximum
  int scale_index = 0;    // winning slice index
};

// 26-neighborhood local maxima of the stack with value >= t_dog. Boundary
// voxels compare against existing neighbors only. Plateau ties break by
// linear voxel index (slice-major, then row-major): a voxel must be strictly
// greater than lower-index neighbors and >= higher-index ones.
std::vector<Blob> detect_blobs(const DoGStack& stack, double t_dog);

// Treats blobs as discs of radius sqrt(2)*sigma. Whenever
// intersection/area(smaller disc) > o_dog, the smaller-sigma blob is removed
// (ties: lower response, then larger linear voxel index). Blobs are visited in
// descending response order so the result is independent of input order.
std::vector<Blob> prune_overlaps(std::vector<Blob> blobs, double o_dog);

}  // namespace mcseg
