#pragma once

#include <string>
#include <string_view>

#include "hfgcn/skeleton.hpp"
#include "hfgcn/tensor.hpp"

namespace hfgcn {

enum class Modality { joint, bone, joint_motion, bone_motion };

std::string modality_name(Modality m);
/// Accepts joint|bone|jmotion|bmotion.
Modality parse_modality(std::string_view name);

/// One input stream with data of shape (C=3, T, V, M).
struct ModalityTensor {
  Modality modality = Modality::joint;
  Tensor data;
};

/// Subtracts the given joint of person 0 at frame 0 from every present frame
/// of every present person. Absent (all-zero) frames stay zero.
void center_on_joint(SkeletonSequence& seq, std::size_t joint);

/// Linear interpolation to t_target frames; output frame i samples input
/// position i (T_raw - 1) / (t_target - 1), so both endpoints map exactly.
/// Equal lengths return the input unchanged.
SkeletonSequence resize_temporal(const SkeletonSequence& seq, std::size_t t_target);

/// (3, T, V, person_slots) joint modality in 64-bit precision.
ModalityTensor to_joint_modality(const SkeletonSequence& seq);

/// bone[c,t,v,m] = joint[c,t,v,m] - joint[c,t,parent(v),m]; the root bone is zero.
ModalityTensor derive_bone(const ModalityTensor& joint, const BonePairList& bones);

/// Forward difference along T with a zero final frame. Requires T >= 2.
ModalityTensor derive_motion(const ModalityTensor& x);

/// Full pipeline for one stream: center, resize, and derive.
ModalityTensor make_modality(const SkeletonSequence& seq, Modality modality, std::size_t frames,
                             const LayoutInfo& layout, bool center = true);

}  // namespace hfgcn
