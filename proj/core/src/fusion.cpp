#include "hfgcn/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

namespace hfgcn {

FusedScores fuse_scores(const std::vector<ScoreTable>& tables, std::vector<double> weights, FuseSpace space) {
  if (tables.empty()) throw std::invalid_argument("fuse_scores: no score tables");
  if (weights.empty()) weights.assign(tables.size(), 1.0);
  if (weights.size() != tables.size()) {
    throw std::invalid_argument("fuse_scores: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(tables.size()) + " tables");
  }
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw std::invalid_argument("fuse_scores: weights must be finite and >= 0");
  }
  const ScoreTable& first = tables.front();
  const std::size_t k = first.num_classes;

  FusedScores out;
  out.num_classes = k;
  for (const auto& row : first.rows) out.rows.push_back({row.sample_id, row.label, std::vector<double>(k, 0.0)});
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < out.rows.size(); ++i) {
    if (!index.emplace(out.rows[i].sample_id, i).second) {
      throw std::invalid_argument("fuse_scores: duplicate sample id " + out.rows[i].sample_id);
    }
  }

  for (std::size_t t = 0; t < tables.size(); ++t) {
    const ScoreTable& table = tables[t];
    if (table.num_classes != k) throw std::invalid_argument("fuse_scores: class count differs in table " + std::to_string(t));
    if (table.rows.size() != out.rows.size()) {
      throw std::invalid_argument("fuse_scores: table " + std::to_string(t) + " has a different sample count");
    }
    for (const auto& row : table.rows) {
      const auto it = index.find(row.sample_id);
      if (it == index.end()) {
        throw std::invalid_argument("fuse_scores: sample " + row.sample_id + " missing from table 0");
      }
      ScoreRow& dst = out.rows[it->second];
      if (dst.label != row.label) throw std::invalid_argument("fuse_scores: label mismatch for " + row.sample_id);
      if (row.scores.size() != k) throw std::invalid_argument("fuse_scores: row width mismatch for " + row.sample_id);
      for (std::size_t j = 0; j < k; ++j) {
        double s = row.scores[j];
        if (space == FuseSpace::logit) s = std::log(std::max(s, std::numeric_limits<double>::min()));
        dst.scores[j] += weights[t] * s;
      }
    }
  }

  std::size_t correct = 0;
  for (const auto& row : out.rows) {
    const std::size_t pred = std::max_element(row.scores.begin(), row.scores.end()) - row.scores.begin();
    out.predictions.push_back(pred);
    correct += pred == row.label;
  }
  out.top1 = out.rows.empty() ? 0.0 : double(correct) / double(out.rows.size());
  return out;
}

}  // namespace hfgcn
