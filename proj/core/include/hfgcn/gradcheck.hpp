#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hfgcn/tape.hpp"

namespace hfgcn {

struct GradCheckOptions {
  double step = 1e-5;
  /// Coordinates probed per parameter; all of them when the parameter is smaller.
  std::size_t samples_per_parameter = 6;
  std::uint64_t seed = 1;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst_parameter;
};

/// Builds a scalar loss on the given tape from the current parameter values.
using LossFn = std::function<Var(Tape&)>;

/// Compares reverse-mode gradients with central differences. The error of a
/// coordinate is |analytic - numeric| / max(1, |numeric|); the maximum over all
/// probed coordinates is returned. Throws std::domain_error on a non-finite loss.
GradCheckResult finite_diff_check(const LossFn& loss, const std::vector<Parameter*>& params,
                                  const GradCheckOptions& options = {});

}  // namespace hfgcn
