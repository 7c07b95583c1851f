#include "hfgcn/preprocess.hpp"

#include <stdexcept>

namespace hfgcn {

std::string modality_name(Modality m) {
  switch (m) {
    case Modality::joint:
      return "joint";
    case Modality::bone:
      return "bone";
    case Modality::joint_motion:
      return "jmotion";
    case Modality::bone_motion:
      return "bmotion";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  if (name == "joint") return Modality::joint;
  if (name == "bone") return Modality::bone;
  if (name == "jmotion") return Modality::joint_motion;
  if (name == "bmotion") return Modality::bone_motion;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "' (joint|bone|jmotion|bmotion)");
}

void center_on_joint(SkeletonSequence& seq, std::size_t joint) {
  if (joint >= seq.joints) throw LayoutError("center_on_joint: joint out of range");
  if (seq.frames == 0 || seq.person_slots == 0 || !seq.present[0]) return;
  float origin[3];
  for (std::size_t c = 0; c < 3; ++c) origin[c] = seq.at(0, 0, joint, c);
  for (std::size_t m = 0; m < seq.person_slots; ++m) {
    if (!seq.present[m]) continue;
    for (std::size_t t = 0; t < seq.frames; ++t) {
      bool empty = true;
      for (std::size_t v = 0; v < seq.joints && empty; ++v)
        for (std::size_t c = 0; c < 3; ++c) empty = empty && seq.at(m, t, v, c) == 0.0f;
      if (empty) continue;
      for (std::size_t v = 0; v < seq.joints; ++v)
        for (std::size_t c = 0; c < 3; ++c) seq.at(m, t, v, c) -= origin[c];
    }
  }
}

SkeletonSequence resize_temporal(const SkeletonSequence& seq, std::size_t t_target) {
  if (seq.frames == 0) throw std::invalid_argument("resize_temporal: empty sequence");
  if (t_target == 0) throw std::invalid_argument("resize_temporal: target length must be >= 1");
  if (seq.frames == t_target) return seq;

  SkeletonSequence out(seq.sample_id, seq.label, seq.person_slots, t_target, seq.joints);
  out.present = seq.present;
  const std::size_t span = seq.frames - 1;
  const std::size_t steps = t_target > 1 ? t_target - 1 : 1;
  for (std::size_t i = 0; i < t_target; ++i) {
    // integer numerator keeps the bracketing frame and both endpoints exact
    const std::size_t num = i * span;
    const std::size_t lo = num / steps;
    const double frac = static_cast<double>(num % steps) / static_cast<double>(steps);
    const std::size_t hi = lo + 1 < seq.frames ? lo + 1 : lo;
    for (std::size_t m = 0; m < seq.person_slots; ++m)
      for (std::size_t v = 0; v < seq.joints; ++v)
        for (std::size_t c = 0; c < 3; ++c) {
          const double a = seq.at(m, lo, v, c);
          const double b = seq.at(m, hi, v, c);
          out.at(m, i, v, c) = static_cast<float>(frac == 0.0 ? a : a + frac * (b - a));
        }
  }
  return out;
}

ModalityTensor to_joint_modality(const SkeletonSequence& seq) {
  const std::size_t slots = seq.person_slots;
  Tensor data({3, seq.frames, seq.joints, slots});
  for (std::size_t m = 0; m < slots; ++m)
    for (std::size_t t = 0; t < seq.frames; ++t)
      for (std::size_t v = 0; v < seq.joints; ++v)
        for (std::size_t c = 0; c < 3; ++c)
          data[((c * seq.frames + t) * seq.joints + v) * slots + m] = seq.at(m, t, v, c);
  return {Modality::joint, std::move(data)};
}

ModalityTensor derive_bone(const ModalityTensor& joint, const BonePairList& bones) {
  if (joint.modality != Modality::joint) throw std::invalid_argument("derive_bone: input must be the joint modality");
  const Tensor& x = joint.data;
  if (x.dim() != 4 || x.extent(0) != 3) throw ShapeError("derive_bone: expected (3,T,V,M)");
  const std::size_t frames = x.extent(1), joints = x.extent(2), slots = x.extent(3);
  bones.validate(joints);
  Tensor out(x.shape());
  for (const BonePair& bp : bones.pairs) {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t m = 0; m < slots; ++m) {
          const std::size_t row = (c * frames + t) * joints;
          out[(row + bp.child) * slots + m] = x[(row + bp.child) * slots + m] - x[(row + bp.parent) * slots + m];
        }
  }
  return {Modality::bone, std::move(out)};
}

ModalityTensor derive_motion(const ModalityTensor& in) {
  const Tensor& x = in.data;
  if (x.dim() != 4) throw ShapeError("derive_motion: expected (C,T,V,M)");
  const std::size_t channels = x.extent(0), frames = x.extent(1);
  if (frames < 2) throw std::invalid_argument("derive_motion: need at least two frames");
  const std::size_t block = x.extent(2) * x.extent(3);
  Tensor out(x.shape());
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t t = 0; t + 1 < frames; ++t) {
      const double* now = x.data() + (c * frames + t) * block;
      const double* next = now + block;
      double* dst = out.data() + (c * frames + t) * block;
      for (std::size_t i = 0; i < block; ++i) dst[i] = next[i] - now[i];
    }
  Modality m = in.modality;
  if (m == Modality::joint) {
    m = Modality::joint_motion;
  } else if (m == Modality::bone) {
    m = Modality::bone_motion;
  } else {
    throw std::invalid_argument("derive_motion: input must be joint or bone");
  }
  return {m, std::move(out)};
}

ModalityTensor make_modality(const SkeletonSequence& seq, Modality modality, std::size_t frames,
                             const LayoutInfo& layout, bool center) {
  SkeletonSequence work = seq;
  if (center) center_on_joint(work, layout.center_joint);
  ModalityTensor joint = to_joint_modality(resize_temporal(work, frames));
  switch (modality) {
    case Modality::joint:
      return joint;
    case Modality::bone:
      return derive_bone(joint, layout.bones);
    case Modality::joint_motion:
      return derive_motion(joint);
    case Modality::bone_motion:
      return derive_motion(derive_bone(joint, layout.bones));
  }
  return joint;
}

}  // namespace hfgcn
