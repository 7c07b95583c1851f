#pragma once

#include <cstdint>
#include <vector>

#include "hfgcn/skeleton.hpp"

namespace hfgcn {

struct SynthConfig {
  std::size_t classes = 8;
  std::size_t per_class = 8;
  std::size_t frames = 32;
  std::size_t joints = 25;
  std::size_t person_slots = 1;
  /// 0 gives identical samples within a class. Per unit of noise each sample
  /// gets per-part phase jitter (1 rad) and amplitude jitter (30 %), a slow
  /// per-joint drift (0.026 m), a linear whole-body walk (0.1 m over the
  /// clip), a per-frame rigid shake of each body part (0.034 m) and
  /// per-frame joint jitter (0.01 m), all Gaussian.
  double noise = 0.0;
  std::uint64_t seed = 7;
};

/// Class c moves every body part p of a canonical NTU-25 pose along
/// a_cp d_cp sin(2 pi f_cp t / T + phi_cp), scaled by each joint's distance
/// from the part's anchor. The class parameters come from the seed, so the
/// same seed always yields the same families. Samples are ordered by class,
/// then by index within the class; ids are "synth_c<class>_n<index>".
std::vector<SkeletonSequence> synth_dataset(const SynthConfig& cfg);

}  // namespace hfgcn
