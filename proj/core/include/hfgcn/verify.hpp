#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hfgcn/gradcheck.hpp"
#include "hfgcn/model_config.hpp"

namespace hfgcn {

/// Modules exercised by module_gradchecks, in report order.
inline const std::vector<std::string> kGradcheckModules = {"ham", "hgcm", "mstc", "model"};

struct GradcheckSettings {
  std::vector<std::string> modules;  // empty: all of kGradcheckModules
  std::size_t batch = 2;
  std::size_t channels = 8;
  std::size_t frames = 8;
  std::size_t num_classes = 4;
  std::uint64_t seed = 1;
  std::size_t samples_per_parameter = 4;
  double tolerance = 1e-4;
  bool corrupt = false;  // scale the conv1x1 weight adjoint (negative control)
};

struct ModuleGradcheck {
  std::string module;
  GradCheckResult result;
  bool passed = false;
};

/// Tiny two-block configuration used for the composed-model check.
ModelConfig gradcheck_model_config(const GradcheckSettings& s);

/// Finite-difference check of each module on the NTU-25 topology. Inputs are
/// treated as parameters too, so input adjoints are covered.
std::vector<ModuleGradcheck> module_gradchecks(const GradcheckSettings& s);

}  // namespace hfgcn
