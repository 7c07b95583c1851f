#include "hfgcn/ntu_reader.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>

namespace hfgcn {

namespace {

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  // Next non-blank line split on whitespace.
  std::vector<std::string_view> next(const char* expecting) {
    while (pos_ < text_.size()) {
      const auto end = text_.find('\n', pos_);
      std::string_view line = text_.substr(pos_, end == std::string_view::npos ? std::string_view::npos : end - pos_);
      pos_ = end == std::string_view::npos ? text_.size() : end + 1;
      ++line_no_;
      auto tokens = split(line);
      if (!tokens.empty()) return tokens;
    }
    throw ParseError(line_no_ + 1, std::string("unexpected end of file, expecting ") + expecting);
  }

  std::size_t line() const { return line_no_; }

  bool at_end() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c != ' ' && c != '\t' && c != '\r' && c != '\n') return false;
      ++pos_;
      if (c == '\n') ++line_no_;
    }
    return true;
  }

 private:
  static std::vector<std::string_view> split(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
      const std::size_t start = i;
      while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
      if (i > start) out.push_back(line.substr(start, i - start));
    }
    return out;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
};

std::size_t parse_count(std::string_view tok, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    throw ParseError(line, "expected a count, got '" + std::string(tok) + "'");
  }
  return v;
}

float parse_float(std::string_view tok, std::size_t line) {
  // std::from_chars for floating point is unavailable on older toolchains.
  std::string s(tok);
  char* end = nullptr;
  const float v = std::strtof(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) {
    throw ParseError(line, "expected a finite number, got '" + s + "'");
  }
  return v;
}

}  // namespace

double motion_energy(const std::vector<float>& track, std::size_t frames, std::size_t joints) {
  double energy = 0.0;
  for (std::size_t t = 0; t + 1 < frames; ++t) {
    for (std::size_t v = 0; v < joints; ++v) {
      double d2 = 0.0;
      for (std::size_t c = 0; c < 3; ++c) {
        const double d = static_cast<double>(track[((t + 1) * joints + v) * 3 + c]) -
                         static_cast<double>(track[(t * joints + v) * 3 + c]);
        d2 += d * d;
      }
      energy += std::sqrt(d2);
    }
  }
  return energy;
}

SkeletonSequence parse_skeleton_text(std::string_view text, SkeletonLayout layout, const ParseOptions& options) {
  const LayoutInfo& info = layout_info(layout);
  if (options.max_persons < 1) throw std::invalid_argument("parse_skeleton_text: max_persons must be >= 1");
  LineReader reader(text);

  auto header = reader.next("frame count");
  if (header.size() != 1) throw ParseError(reader.line(), "frame count line must hold one value");
  const std::size_t frames = parse_count(header[0], reader.line());
  if (frames == 0) throw ParseError(reader.line(), "sequence has no frames");

  // body id -> (frames, joints, 3) track, in order of first appearance
  std::vector<std::string> order;
  std::map<std::string, std::vector<float>> tracks;
  const std::size_t frame_block = info.joints * 3;

  for (std::size_t t = 0; t < frames; ++t) {
    auto body_line = reader.next("body count");
    if (body_line.size() != 1) throw ParseError(reader.line(), "body count line must hold one value");
    const std::size_t bodies = parse_count(body_line[0], reader.line());
    for (std::size_t b = 0; b < bodies; ++b) {
      auto body_info = reader.next("body info");
      if (body_info.size() != 10) {
        throw ParseError(reader.line(), "body info line must hold 10 fields, got " + std::to_string(body_info.size()));
      }
      const std::string id(body_info[0]);
      auto joint_line = reader.next("joint count");
      if (joint_line.size() != 1) throw ParseError(reader.line(), "joint count line must hold one value");
      const std::size_t joint_count = parse_count(joint_line[0], reader.line());
      if (joint_count != info.joints) {
        throw LayoutError("line " + std::to_string(reader.line()) + ": " + std::to_string(joint_count) +
                          " joints, layout " + info.name + " expects " + std::to_string(info.joints));
      }
      auto [it, inserted] = tracks.try_emplace(id, std::vector<float>(frames * frame_block, 0.0f));
      if (inserted) order.push_back(id);
      for (std::size_t v = 0; v < joint_count; ++v) {
        auto joint = reader.next("joint line");
        if (joint.size() != 12) {
          throw ParseError(reader.line(), "joint line must hold 12 fields, got " + std::to_string(joint.size()));
        }
        for (std::size_t c = 0; c < 3; ++c) {
          it->second[t * frame_block + v * 3 + c] = parse_float(joint[c], reader.line());
        }
      }
    }
  }
  if (!reader.at_end()) throw ParseError(reader.line() + 1, "trailing content after the last frame");
  if (order.empty()) throw ParseError(reader.line(), "no bodies in any frame");

  std::vector<double> energy(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) energy[i] = motion_energy(tracks[order[i]], frames, info.joints);
  std::vector<std::size_t> rank(order.size());
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::stable_sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) { return energy[a] > energy[b]; });

  SkeletonSequence seq(options.sample_id, options.label, options.max_persons, frames, info.joints);
  const std::size_t keep = std::min(order.size(), options.max_persons);
  for (std::size_t m = 0; m < keep; ++m) {
    const auto& track = tracks[order[rank[m]]];
    std::copy(track.begin(), track.end(), seq.coords.begin() + static_cast<long>(m * frames * frame_block));
    seq.present[m] = true;
  }
  return seq;
}

std::optional<std::uint32_t> ntu_label_from_name(std::string_view stem) {
  const auto pos = stem.rfind('A');
  if (pos == std::string_view::npos || pos + 1 >= stem.size()) return std::nullopt;
  std::uint32_t v = 0;
  const char* begin = stem.data() + pos + 1;
  const char* end = stem.data() + stem.size();
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || v == 0) return std::nullopt;
  return v - 1;
}

}  // namespace hfgcn
