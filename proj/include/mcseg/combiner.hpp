#pragma once

#include "mcseg/core.hpp"

namespace mcseg {

enum class OverlapMode {
  geq,  // retain candidates with |O ∩ region| / |O| >= o_thr
  leq,  // exact complement: retain those with overlap < o_thr
};

OverlapMode overlap_mode_from_string(const std::string& name);

// Whole-object gate: each candidate object is kept or dropped in full; the
// output is the union of retained objects.
BinaryMask combine(const LabeledMask& candidates, const BinaryMask& region, double o_thr,
                   OverlapMode mode = OverlapMode::geq);

}  // namespace mcseg
