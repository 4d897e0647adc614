#pragma once

#include "mcseg/combiner.hpp"
#include "mcseg/config.hpp"
#include "mcseg/core.hpp"
#include "mcseg/hessian_blob.hpp"

namespace mcseg {

struct SegmentResult {
  HdogResult hdog;         // candidate mask + surviving blobs
  LabeledMask candidates;  // connected components of the candidate mask
  BinaryMask region;       // proximity map thresholded at p_thr
  BinaryMask final_mask;   // retained candidate objects
};

// Full segmentation: blob candidates from the image, region mask from the
// proximity map, overlap fusion. Equals the composition of the hdog,
// threshold, and combine stages exactly.
SegmentResult run_segment(const GrayImage& image, const ProximityMap& proximity,
                          const PipelineConfig& cfg);

HdogParams hdog_params_from(const PipelineConfig& cfg);

}  // namespace mcseg
