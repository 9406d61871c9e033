#pragma once

#include "unmtlab/common.hpp"

namespace unmtlab {

// Corruption model for denoising auto-encoding: independent per-token drops,
// replacements by <unk>, and a bounded local shuffle.
struct NoiseSpec {
  double p_drop = 0.1;
  double p_blank = 0.1;
  int shuffle_k = 3;

  void validate() const;
};

// At least one token always survives (decoders need a non-empty source).
// Shuffling sorts by index + uniform(0, shuffle_k+1), which bounds every
// token's displacement by shuffle_k.
Sentence apply_noise(const Sentence& sentence, const NoiseSpec& spec, Rng& rng);

}  // namespace unmtlab
