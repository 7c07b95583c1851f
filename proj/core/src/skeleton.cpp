#include "hfgcn/skeleton.hpp"

#include <algorithm>
#include <cmath>

namespace hfgcn {

namespace {

BonePairList ntu25_bones() {
  // 1-based (child, parent) pairs of the Kinect v2 skeleton; 21 (spine
  // shoulder) is the root.
  static constexpr std::pair<int, int> kPairs[] = {
      {1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},   {7, 6},   {8, 7},   {9, 21},
      {10, 9},  {11, 10}, {12, 11}, {13, 1},  {14, 13}, {15, 14}, {16, 15}, {17, 1},  {18, 17},
      {19, 18}, {20, 19}, {21, 21}, {22, 23}, {23, 8},  {24, 25}, {25, 12}};
  BonePairList list;
  for (auto [c, p] : kPairs) {
    list.pairs.push_back({static_cast<std::size_t>(c - 1), static_cast<std::size_t>(p - 1)});
  }
  return list;
}

}  // namespace

std::size_t BonePairList::parent_of(std::size_t joint) const {
  for (const auto& p : pairs)
    if (p.child == joint) return p.parent;
  throw LayoutError("bone list: joint " + std::to_string(joint) + " has no entry");
}

std::size_t BonePairList::root() const {
  for (const auto& p : pairs)
    if (p.child == p.parent) return p.child;
  throw LayoutError("bone list: no root");
}

void BonePairList::validate(std::size_t joints) const {
  if (pairs.size() != joints) {
    throw LayoutError("bone list: " + std::to_string(pairs.size()) + " pairs for " + std::to_string(joints) +
                      " joints");
  }
  std::vector<int> seen(joints, 0);
  std::size_t roots = 0;
  for (const auto& p : pairs) {
    if (p.child >= joints || p.parent >= joints) throw LayoutError("bone list: index out of range");
    ++seen[p.child];
    if (p.child == p.parent) ++roots;
  }
  for (std::size_t v = 0; v < joints; ++v) {
    if (seen[v] != 1) throw LayoutError("bone list: joint " + std::to_string(v) + " is not a child exactly once");
  }
  if (roots != 1) throw LayoutError("bone list: expected one root, found " + std::to_string(roots));
  for (std::size_t v = 0; v < joints; ++v) {
    std::size_t cur = v;
    for (std::size_t steps = 0; parent_of(cur) != cur; ++steps) {
      if (steps > joints) throw LayoutError("bone list: cycle through joint " + std::to_string(v));
      cur = parent_of(cur);
    }
  }
}

const LayoutInfo& layout_info(SkeletonLayout layout) {
  static const LayoutInfo ntu{SkeletonLayout::ntu25, "ntu25", 25, 1, ntu25_bones()};
  switch (layout) {
    case SkeletonLayout::ntu25:
      return ntu;
  }
  throw LayoutError("unknown layout");
}

SkeletonLayout parse_layout(std::string_view name) {
  if (name == "ntu25") return SkeletonLayout::ntu25;
  throw LayoutError("unknown skeleton layout '" + std::string(name) + "'");
}

SkeletonSequence::SkeletonSequence(std::string id, std::uint32_t label_, std::size_t person_slots_,
                                   std::size_t frames_, std::size_t joints_)
    : sample_id(std::move(id)),
      label(label_),
      person_slots(person_slots_),
      frames(frames_),
      joints(joints_),
      coords(person_slots_ * frames_ * joints_ * 3, 0.0f),
      present(person_slots_, false) {}

std::size_t SkeletonSequence::persons() const {
  return static_cast<std::size_t>(std::count(present.begin(), present.end(), true));
}

void SkeletonSequence::validate() const {
  if (coords.size() != person_slots * frames * joints * 3 || present.size() != person_slots) {
    throw LayoutError("sequence '" + sample_id + "': coordinate count does not match extents");
  }
  for (float v : coords) {
    if (!std::isfinite(v)) throw LayoutError("sequence '" + sample_id + "': non-finite coordinate");
  }
}

}  // namespace hfgcn
