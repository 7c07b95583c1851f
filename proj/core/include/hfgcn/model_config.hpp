#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "hfgcn/skeleton.hpp"

namespace hfgcn {

enum class ModelVariant { hfgcn, baseline };
/// per_branch: HA_s = softmax(q.k + q.hk_s) for each hypergraph s.
/// summed: one map softmax(q.k + sum_s q.hk_s) shared by all branches.
enum class HamMode { per_branch, summed };
/// Input of the xi embedding in the left HGCM branch.
enum class XiInput { hx, x };

struct BlockSpec {
  std::size_t in_channels;
  std::size_t out_channels;
  std::size_t stride;

  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

struct ModelConfig {
  ModelVariant variant = ModelVariant::hfgcn;
  SkeletonLayout layout = SkeletonLayout::ntu25;
  std::size_t joints = 25;
  std::size_t frames = 64;
  std::size_t persons = 2;
  std::vector<BlockSpec> blocks;
  std::size_t reduction = 8;
  std::size_t num_classes = 60;
  std::vector<std::string> hypergraphs = {"h1", "h2", "h3"};
  HamMode ham_mode = HamMode::per_branch;
  XiInput xi_input = XiInput::hx;
  std::string hypergraph_dir;  // empty: built-in partitions

  /// 10 blocks: 64 x4, 128 x3, 256 x3, stride 2 entering the 128 and 256 stages.
  static std::vector<BlockSpec> standard_blocks();
  /// `count` blocks starting at `width`; the width doubles with stride 2 at
  /// the start of the second half.
  static std::vector<BlockSpec> reduced_blocks(std::size_t count, std::size_t width);

  static ModelConfig standard();

  std::size_t branches() const { return variant == ModelVariant::hfgcn ? hypergraphs.size() : 2; }
  /// Embedding width C_e = C_in / r; 8 for the 3-channel input block.
  std::size_t embed_width(std::size_t in_channels) const;
  std::size_t final_channels() const { return blocks.empty() ? 3 : blocks.back().out_channels; }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::string variant_name(ModelVariant v);
ModelVariant parse_variant(const std::string& s);
std::string ham_mode_name(HamMode m);
HamMode parse_ham_mode(const std::string& s);
std::string xi_input_name(XiInput x);
XiInput parse_xi_input(const std::string& s);

/// "3:64:1,64:64:1,..." (in:out:stride per block).
std::string format_blocks(const std::vector<BlockSpec>& blocks);
std::vector<BlockSpec> parse_blocks(const std::string& text);

/// Model keys of the key=value run configuration, one "key=value" per line in
/// a fixed order.
std::string format_model_config(const ModelConfig& cfg);
/// Applies one key; returns false when the key is not a model key. Malformed
/// values throw std::invalid_argument.
bool set_model_key(ModelConfig& cfg, const std::string& key, const std::string& value);

}  // namespace hfgcn
