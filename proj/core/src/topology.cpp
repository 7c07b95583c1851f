#include "hfgcn/topology.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

#include "hfgcn/ops.hpp"

namespace hfgcn {

Tensor self_loop_graph(const BonePairList& bones, std::size_t joints) {
  Tensor a({joints, joints});
  for (std::size_t v = 0; v < joints; ++v) a.at({v, v}) = 1.0;
  for (const BonePair& bp : bones.pairs) {
    if (bp.child >= joints || bp.parent >= joints) {
      throw LayoutError("adjacency: bone (" + std::to_string(bp.child) + "," + std::to_string(bp.parent) +
                        ") out of range for " + std::to_string(joints) + " joints");
    }
    if (bp.child == bp.parent) continue;
    a.at({bp.child, bp.parent}) = 1.0;
    a.at({bp.parent, bp.child}) = 1.0;
  }
  return a;
}

AdjacencyMatrix build_adjacency(const BonePairList& bones, std::size_t joints) {
  Tensor a = self_loop_graph(bones, joints);
  std::vector<double> inv_sqrt(joints);
  for (std::size_t i = 0; i < joints; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < joints; ++j) deg += a.at({i, j});
    inv_sqrt[i] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < joints; ++i)
    for (std::size_t j = 0; j < joints; ++j) a.at({i, j}) *= inv_sqrt[i] * inv_sqrt[j];
  return {std::move(a)};
}

std::vector<std::size_t> hop_distances(const BonePairList& bones, std::size_t joints, std::size_t source) {
  const Tensor a = self_loop_graph(bones, joints);
  constexpr auto kUnreached = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(joints, kUnreached);
  std::deque<std::size_t> queue{source};
  dist.at(source) = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v = 0; v < joints; ++v) {
      if (a.at({u, v}) != 0.0 && dist[v] == kUnreached) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  return dist;
}

Partition hop_distance_rings(const BonePairList& bones, std::size_t joints, std::size_t center,
                             const std::vector<std::size_t>& bounds) {
  const auto dist = hop_distances(bones, joints, center);
  Partition rings(bounds.size() + 1);
  for (std::size_t v = 0; v < joints; ++v) {
    const auto ring = static_cast<std::size_t>(std::upper_bound(bounds.begin(), bounds.end(), dist[v]) - bounds.begin());
    rings[ring].push_back(v);
  }
  return rings;
}

HypergraphIncidence build_partition_hypergraph(const Partition& partition, std::size_t joints, std::string name) {
  std::vector<std::size_t> hits(joints, 0);
  std::vector<std::size_t> out_of_range;
  for (std::size_t e = 0; e < partition.size(); ++e) {
    if (partition[e].empty()) throw LayoutError("hypergraph " + name + ": hyperedge " + std::to_string(e) + " is empty");
    for (std::size_t v : partition[e]) {
      if (v >= joints) {
        out_of_range.push_back(v);
      } else {
        ++hits[v];
      }
    }
  }
  std::vector<std::size_t> overlap, gap;
  for (std::size_t v = 0; v < joints; ++v) {
    if (hits[v] == 0) gap.push_back(v);
    if (hits[v] > 1) overlap.push_back(v);
  }
  if (partition.empty() || !overlap.empty() || !gap.empty() || !out_of_range.empty()) {
    auto list = [](const std::vector<std::size_t>& xs) {
      std::string s;
      for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
      return s.empty() ? std::string("none") : s;
    };
    throw LayoutError("hypergraph " + name + ": not a partition of " + std::to_string(joints) +
                      " joints; overlapping joints [" + list(overlap) + "], missing joints [" + list(gap) +
                      "], out-of-range joints [" + list(out_of_range) + "]");
  }
  Tensor h({joints, partition.size()});
  for (std::size_t e = 0; e < partition.size(); ++e)
    for (std::size_t v : partition[e]) h.at({v, e}) = 1.0;
  return {std::move(name), std::move(h)};
}

Tensor propagation_matrix(const HypergraphIncidence& hg) {
  const Tensor& h = hg.h;
  const std::size_t joints = hg.joints();
  const std::size_t edges = hg.edges();
  std::vector<double> dv(joints, 0.0), de(edges, 0.0);
  for (std::size_t v = 0; v < joints; ++v)
    for (std::size_t e = 0; e < edges; ++e) {
      dv[v] += h.at({v, e});
      de[e] += h.at({v, e});
    }
  Tensor s({joints, joints});
  for (std::size_t i = 0; i < joints; ++i)
    for (std::size_t j = 0; j < joints; ++j) {
      double acc = 0.0;
      for (std::size_t e = 0; e < edges; ++e) acc += h.at({i, e}) * h.at({j, e}) / de[e];
      s.at({i, j}) = acc / dv[i];
    }
  return s;
}

HypergraphSet::HypergraphSet(std::vector<HypergraphIncidence> members) : members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("HypergraphSet: no hypergraphs");
  const std::size_t joints = members_.front().joints();
  stacked_ = Tensor({members_.size(), joints, joints});
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (members_[i].joints() != joints) throw ShapeError("HypergraphSet: joint counts differ");
    propagation_.push_back(propagation_matrix(members_[i]));
    std::copy_n(propagation_.back().data(), joints * joints, stacked_.data() + i * joints * joints);
  }
}

Var apply_hypergraphs(Tape& tape, const Var& x, const HypergraphSet& hs) {
  if (x.value().dim() != 4 || x.shape()[3] != hs.joints()) {
    throw ShapeError("apply_hypergraphs: input " + shape_string(x.shape()) + " vs " + std::to_string(hs.joints()) +
                     " joints");
  }
  return ops::contract(tape, "sij,bctj->sbcti", tape.constant(hs.stacked()), x);
}

Partition parse_partition(std::string_view text) {
  Partition out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::vector<std::size_t> edge;
    std::size_t i = 0;
    bool any = false;
    while (i < line.size()) {
      while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == ',')) ++i;
      if (i >= line.size()) break;
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(line.data() + i, line.data() + line.size(), v);
      if (ec != std::errc()) {
        throw std::invalid_argument("partition line " + std::to_string(line_no) + ": expected a joint index");
      }
      i = static_cast<std::size_t>(ptr - line.data());
      edge.push_back(v);
      any = true;
    }
    if (any) out.push_back(std::move(edge));
  }
  return out;
}

Partition load_partition_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open partition file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_partition(ss.str());
}

std::string format_partition(const Partition& partition, std::string_view header_comment) {
  std::ostringstream os;
  if (!header_comment.empty()) os << "# " << header_comment << '\n';
  for (const auto& edge : partition) {
    for (std::size_t i = 0; i < edge.size(); ++i) os << (i ? "," : "") << edge[i];
    os << '\n';
  }
  return os.str();
}

Partition ntu25_partition(std::string_view name) {
  if (name == "h1") {
    // 5-group joint labelling of the prior hypergraph construction
    static constexpr int kLabel[25] = {0, 4, 2, 2, 2, 2, 1, 1, 2, 2, 1, 1, 2, 3, 3, 3, 2, 3, 3, 3, 1, 0, 1, 0, 1};
    Partition p(5);
    for (std::size_t v = 0; v < 25; ++v) p[static_cast<std::size_t>(kLabel[v])].push_back(v);
    return p;
  }
  if (name == "h2") {
    // torso + head, left arm, right arm, left leg, right leg
    return {{0, 1, 2, 3, 20}, {4, 5, 6, 7, 21, 22}, {8, 9, 10, 11, 23, 24}, {12, 13, 14, 15}, {16, 17, 18, 19}};
  }
  if (name == "h3") {
    const LayoutInfo& info = layout_info(SkeletonLayout::ntu25);
    return hop_distance_rings(info.bones, info.joints, info.center_joint, {3, 6});
  }
  throw std::invalid_argument("unknown hypergraph '" + std::string(name) + "' (h1|h2|h3)");
}

HypergraphIncidence layout_hypergraph(const LayoutInfo& layout, std::string_view name,
                                      const std::filesystem::path& data_dir) {
  Partition p;
  if (!data_dir.empty()) {
    p = load_partition_file(data_dir / (layout.name + "_" + std::string(name) + ".txt"));
  } else if (layout.layout == SkeletonLayout::ntu25) {
    p = ntu25_partition(name);
  } else {
    throw LayoutError("no built-in hypergraphs for layout " + layout.name);
  }
  return build_partition_hypergraph(p, layout.joints, std::string(name));
}

}  // namespace hfgcn
