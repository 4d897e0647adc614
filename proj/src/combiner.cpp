#include "mcseg/combiner.hpp"

namespace mcseg {

OverlapMode overlap_mode_from_string(const std::string& name) {
  if (name == "geq") return OverlapMode::geq;
  if (name == "leq") return OverlapMode::leq;
  throw ParameterError("overlap_mode must be 'geq' or 'leq'");
}

BinaryMask combine(const LabeledMask& candidates, const BinaryMask& region, double o_thr,
                   OverlapMode mode) {
  if (candidates.width != region.width || candidates.height != region.height)
    throw DataError("combine: candidate and region dimensions differ");
  if (!(o_thr >= 0.0 && o_thr <= 1.0)) throw ParameterError("o_thr must be in [0,1]");

  std::vector<long> total(candidates.count + 1, 0);
  std::vector<long> inside(candidates.count + 1, 0);
  for (std::size_t i = 0; i < candidates.labels.size(); ++i) {
    const std::int32_t label = candidates.labels[i];
    if (label == 0) continue;
    ++total[label];
    if (region.bits[i]) ++inside[label];
  }

  std::vector<std::uint8_t> keep(candidates.count + 1, 0);
  for (int label = 1; label <= candidates.count; ++label) {
    if (total[label] == 0) continue;
    const bool meets =
        static_cast<double>(inside[label]) >= o_thr * static_cast<double>(total[label]);
    keep[label] = (mode == OverlapMode::geq) == meets ? 1 : 0;
  }

  BinaryMask out(candidates.width, candidates.height);
  for (std::size_t i = 0; i < candidates.labels.size(); ++i) {
    const std::int32_t label = candidates.labels[i];
    if (label != 0 && keep[label]) out.bits[i] = 1;
  }
  return out;
}

}  // namespace mcseg
