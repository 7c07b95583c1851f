#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hfgcn/skeleton.hpp"
#include "hfgcn/tape.hpp"
#include "hfgcn/tensor.hpp"

namespace hfgcn {

/// Symmetric D^{-1/2} (A_phys + I) D^{-1/2} over the physical bone graph.
struct AdjacencyMatrix {
  Tensor a;  // (V, V)
};

/// A_phys + I before normalisation; duplicate and self bones collapse.
Tensor self_loop_graph(const BonePairList& bones, std::size_t joints);
AdjacencyMatrix build_adjacency(const BonePairList& bones, std::size_t joints);

/// Hop distance of every joint from `source` along bones.
std::vector<std::size_t> hop_distances(const BonePairList& bones, std::size_t joints, std::size_t source);

using Partition = std::vector<std::vector<std::size_t>>;

/// Groups joints by hop distance from `center`: ring k holds distances in
/// [bounds[k-1], bounds[k]) with implicit 0 first and +inf last bounds.
Partition hop_distance_rings(const BonePairList& bones, std::size_t joints, std::size_t center,
                             const std::vector<std::size_t>& bounds);

/// V x E vertex-to-hyperedge membership.
struct HypergraphIncidence {
  std::string name;
  Tensor h;

  std::size_t joints() const { return h.extent(0); }
  std::size_t edges() const { return h.extent(1); }
};

/// Partition sets must be disjoint, non-empty and cover 0..joints-1; the
/// error message lists every offending joint.
HypergraphIncidence build_partition_hypergraph(const Partition& partition, std::size_t joints, std::string name);

/// S = D_v^{-1} H D_e^{-1} H^T with unit hyperedge weights; row-stochastic.
Tensor propagation_matrix(const HypergraphIncidence& h);

/// Immutable set of enabled hypergraphs with precomputed propagation matrices.
class HypergraphSet {
 public:
  HypergraphSet() = default;
  explicit HypergraphSet(std::vector<HypergraphIncidence> members);

  std::size_t size() const { return members_.size(); }
  std::size_t joints() const { return members_.empty() ? 0 : members_.front().joints(); }
  const HypergraphIncidence& member(std::size_t i) const { return members_.at(i); }
  const Tensor& propagation(std::size_t i) const { return propagation_.at(i); }
  /// (S, V, V) stack of the propagation matrices.
  const Tensor& stacked() const { return stacked_; }

 private:
  std::vector<HypergraphIncidence> members_;
  std::vector<Tensor> propagation_;
  Tensor stacked_;
};

/// hX[i,b,c,t,v] = sum_u S_i[v,u] x[b,c,t,u]; x is (B,C,T,V), result (S,B,C,T,V).
Var apply_hypergraphs(Tape& tape, const Var& x, const HypergraphSet& hs);

/// Plain-text partition: one hyperedge per line, comma-separated joint
/// indices, '#' starts a comment.
Partition parse_partition(std::string_view text);
Partition load_partition_file(const std::filesystem::path& path);
std::string format_partition(const Partition& partition, std::string_view header_comment = {});

/// Built-in NTU-25 partitions, identical to core/data/ntu25_h{1,2,3}.txt.
Partition ntu25_partition(std::string_view name);

/// Hypergraphs h1/h2/h3 for a layout. When `data_dir` is non-empty the
/// partitions are read from <data_dir>/<layout>_<name>.txt.
HypergraphIncidence layout_hypergraph(const LayoutInfo& layout, std::string_view name,
                                      const std::filesystem::path& data_dir = {});

}  // namespace hfgcn
