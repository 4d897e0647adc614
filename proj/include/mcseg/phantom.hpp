#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcseg/core.hpp"

namespace mcseg {

// Synthetic image description. Blob "radius" is the half-maximum radius of the
// Gaussian bump (the truth disc radius); the bump's sigma is r/sqrt(2 ln 2).
// The five layout archetypes place blob centers as distinct spatial
// distributions (geometry is artifact-defined):
//   diffuse   — uniform over the usable area
//   grouped   — `clusters` compact groups of radius cluster_spread_px
//   regional  — one broad disc of radius 4x cluster_spread_px
//   linear    — a jittered line segment
//   segmental — a narrow wedge fanning out from a point
struct PhantomSpec {
  int width = 448, height = 448;
  double pixel_spacing_mm = 0.070;
  double background_amplitude = 0.05;      // stdev of the smooth field
  double background_correlation_px = 16.0; // smoothing sigma of the field
  double background_level = 0.30;          // mean gray level
  double noise_stdev = 0.002;              // iid pixel noise
  int blob_count = 20;
  double radius_min_px = 2.0, radius_max_px = 6.0;  // half-max radius
  double contrast_min = 0.10, contrast_max = 0.30;
  double min_center_dist_px = 0.0;  // 0 = unconstrained
  int clusters = 1;
  int points_per_cluster = 0;  // informational; blob_count is authoritative
  double cluster_spread_px = 12.0;
  std::string archetype = "diffuse";
};

void validate_phantom_spec(const PhantomSpec& spec);  // throws ParameterError

struct PhantomBlob {
  double cx = 0.0, cy = 0.0;  // continuous center, pixel units
  double radius_px = 0.0;     // truth disc (half-max) radius
  double sigma_px = 0.0;      // Gaussian bump sigma
  double contrast = 0.0;
  int cluster = 0;            // generating group index
};

struct Phantom {
  GrayImage image;
  BinaryMask truth;          // union of half-max discs
  LabeledMask truth_labels;  // one label per blob, placement order
  BinaryMask annotations;    // single pixel for radius < 3 px, else full disc
  std::vector<PhantomBlob> blobs;
  std::string archetype;
};

// Deterministic per seed: one generator drives, in order, the background
// field, the layout, each blob's radius/contrast/placement attempts, and the
// final iid noise. A blob whose placement fails 100 attempts (margin or
// min-distance) raises DataError naming the blob.
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

}  // namespace mcseg
