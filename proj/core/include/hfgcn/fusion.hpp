#pragma once

#include <string>
#include <vector>

#include "hfgcn/training.hpp"

namespace hfgcn {

/// probability: weighted sum of the softmax scores.
/// logit: weighted sum of log-probabilities, which equals the weighted sum of
/// logits up to a per-sample constant and so gives the same argmax.
enum class FuseSpace { probability, logit };

struct FusedScores {
  std::size_t num_classes = 0;
  std::vector<ScoreRow> rows;  // fused scores, in the order of the first table
  std::vector<std::size_t> predictions;
  double top1 = 0.0;
};

/// Rows are matched by sample id; every table must hold the same ids, labels
/// and class count. Empty weights mean all ones.
FusedScores fuse_scores(const std::vector<ScoreTable>& tables, std::vector<double> weights = {},
                        FuseSpace space = FuseSpace::probability);

}  // namespace hfgcn
