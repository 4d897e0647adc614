#pragma once

#include <cstdint>
#include <string>

#include "mcseg/core.hpp"

namespace mcseg {

// Flat pipeline configuration. Loadable from a flat JSON object; unknown keys
// are rejected so typos fail loudly.
struct PipelineConfig {
  // blob detection
  double sigma_min = 1.18;
  double sigma_max = 3.1;
  int n_scales = 8;
  double t_dog = 0.006;
  double o_dog = 1.0;
  double h_thr = 1.4;
  // proximity
  double xi = 10.0;
  double alpha = 1.0;
  // combining
  double p_thr = 0.5;
  double o_thr = 0.3;
  std::string overlap_mode = "geq";  // "geq" retains overlap >= o_thr, "leq" the complement
  // detection matching
  double match_max_dist_px = 5.0;
  double match_min_iou = 0.3;
  // evaluation
  double pixel_spacing_mm = 0.070;
  int pauc_samples = 100;
  double pauc_fp_max = 1.0;  // FP/cm^2 integration bound
  int froc_thresholds = 101;
  // clustering
  int optics_min_samples = 5;
  double optics_max_eps_mm = 10.0;
  double eps_cut_mm = 5.0;
  int kmeans_k = 5;
  int kmeans_restarts = 10;
  // execution
  std::uint64_t seed = 1;
  int threads = 1;
};

PipelineConfig load_config(const std::string& path);

// Throws ParameterError naming the offending field.
void validate_config(const PipelineConfig& cfg);

}  // namespace mcseg
