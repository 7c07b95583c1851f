#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "hfgcn/skeleton.hpp"

namespace hfgcn {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ParseOptions {
  std::size_t max_persons = 2;
  std::string sample_id;
  std::uint32_t label = 0;
};

/// Reads the NTU RGB+D `.skeleton` text layout:
///
///   <frame count>
///   per frame: <body count>
///     per body: <body info line: id and 9 tracking fields>
///               <joint count>
///               <joint line: x y z and 9 further fields> x joint count
///
/// Bodies are matched across frames by id. When more than max_persons bodies
/// appear, the ones with the largest summed frame-to-frame joint displacement
/// are kept. Retained bodies are ordered by that energy, highest first.
SkeletonSequence parse_skeleton_text(std::string_view text, SkeletonLayout layout, const ParseOptions& options = {});

/// Summed Euclidean frame-to-frame displacement over all joints of one body
/// track of shape (frames, joints, 3).
double motion_energy(const std::vector<float>& track, std::size_t frames, std::size_t joints);

/// Action label from an NTU file stem such as "S001C002P003R002A013" (A013 -> 12).
std::optional<std::uint32_t> ntu_label_from_name(std::string_view stem);

}  // namespace hfgcn
