#include "mcseg/pipeline.hpp"

#include "mcseg/proximity.hpp"

namespace mcseg {

HdogParams hdog_params_from(const PipelineConfig& cfg) {
  HdogParams params;
  params.sigma_min = cfg.sigma_min;
  params.sigma_max = cfg.sigma_max;
  params.n_scales = cfg.n_scales;
  params.t_dog = cfg.t_dog;
  params.o_dog = cfg.o_dog;
  params.h_thr = cfg.h_thr;
  return params;
}

SegmentResult run_segment(const GrayImage& image, const ProximityMap& proximity,
                          const PipelineConfig& cfg) {
  validate_config(cfg);
  if (image.width != proximity.width || image.height != proximity.height)
    throw DataError("image and proximity map dimensions disagree");

  SegmentResult result;
  result.hdog = hdog_segment(image, hdog_params_from(cfg), cfg.threads);
  result.candidates = label_components(result.hdog.mask);
  result.region = threshold_map(proximity, cfg.p_thr);
  result.final_mask = combine(result.candidates, result.region, cfg.o_thr,
                              overlap_mode_from_string(cfg.overlap_mode));
  return result;
}

}  // namespace mcseg
