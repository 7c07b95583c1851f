#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hfgcn/tensor.hpp"

namespace hfgcn {

/// Raised when a skeleton does not match the configured joint layout.
class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BonePair {
  std::size_t child;
  std::size_t parent;
};

/// One (child, parent) pair per joint; the root pairs with itself.
struct BonePairList {
  std::vector<BonePair> pairs;

  std::size_t parent_of(std::size_t joint) const;
  std::size_t root() const;
  /// Every joint 0..joints-1 appears exactly once as child, indices in range,
  /// exactly one root, and following parents always reaches it.
  void validate(std::size_t joints) const;
};

enum class SkeletonLayout { ntu25 };

struct LayoutInfo {
  SkeletonLayout layout;
  std::string name;
  std::size_t joints;
  std::size_t center_joint;  // spine middle
  BonePairList bones;
};

const LayoutInfo& layout_info(SkeletonLayout layout);
SkeletonLayout parse_layout(std::string_view name);

/// Raw 3-D joint tracks of one clip. Coordinates are stored in 32-bit floats
/// with shape (person_slots, frames, joints, 3); absent persons are zero and
/// flagged in `present`.
struct SkeletonSequence {
  std::string sample_id;
  std::uint32_t label = 0;
  std::size_t person_slots = 0;
  std::size_t frames = 0;
  std::size_t joints = 0;
  std::vector<float> coords;
  std::vector<bool> present;

  SkeletonSequence() = default;
  SkeletonSequence(std::string id, std::uint32_t label, std::size_t person_slots, std::size_t frames,
                   std::size_t joints);

  std::size_t persons() const;
  std::size_t index(std::size_t m, std::size_t t, std::size_t v, std::size_t c) const {
    return ((m * frames + t) * joints + v) * 3 + c;
  }
  float& at(std::size_t m, std::size_t t, std::size_t v, std::size_t c) { return coords[index(m, t, v, c)]; }
  float at(std::size_t m, std::size_t t, std::size_t v, std::size_t c) const { return coords[index(m, t, v, c)]; }

  /// Throws if coordinates are non-finite or extents are inconsistent.
  void validate() const;

  friend bool operator==(const SkeletonSequence&, const SkeletonSequence&) = default;
};

}  // namespace hfgcn
