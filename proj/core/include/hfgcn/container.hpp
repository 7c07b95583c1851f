#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "hfgcn/skeleton.hpp"

namespace hfgcn {

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kContainerVersion = 1;

struct ContainerInfo {
  std::uint32_t version = kContainerVersion;
  std::uint32_t joints = 25;
  std::uint32_t max_persons = 2;
};

// Binary layout, little-endian:
//   "HFG1" | u32 version | u32 count | u32 V | u32 M_max
//   per sample: u32 id length | id bytes | u32 label | u32 T_raw |
//               M_max*T_raw*V*3 f32 | u32 CRC-32 of the preceding sample bytes
void write_container(std::ostream& os, std::span<const SkeletonSequence> samples, const ContainerInfo& info);
std::vector<SkeletonSequence> read_container(std::istream& is, ContainerInfo* info = nullptr);

/// Writes through a sibling temporary file and renames it into place.
void write_container(const std::filesystem::path& path, std::span<const SkeletonSequence> samples,
                     const ContainerInfo& info);
std::vector<SkeletonSequence> read_container(const std::filesystem::path& path, ContainerInfo* info = nullptr);

std::uint32_t crc32_bytes(std::span<const unsigned char> bytes);

}  // namespace hfgcn
