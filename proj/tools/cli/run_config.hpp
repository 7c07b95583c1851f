#pragma once

#include <filesystem>
#include <string>

#include "hfgcn/keyvalue.hpp"
#include "hfgcn/model_config.hpp"
#include "hfgcn/preprocess.hpp"
#include "hfgcn/training.hpp"

namespace hfgcn::cli {

/// Everything a command reads from the key=value run file: model keys,
/// training keys and the run keys below.
struct RunConfig {
  ModelConfig model = default_model();
  TrainConfig train;
  std::string data;        // container file
  std::string out_dir = "run";
  std::string checkpoint;  // eval input
  Modality modality = Modality::joint;
  std::size_t threads = 1;

  /// Standard 10-block network for NTU-120.
  static ModelConfig default_model();

  void validate() const;
};

/// Returns false when the key belongs to no section.
bool set_run_key(RunConfig& cfg, const std::string& key, const std::string& value);

/// Unknown keys throw ConfigError.
void apply_key_values(RunConfig& cfg, const KeyValues& kv);
RunConfig load_run_config(const std::filesystem::path& path);

/// Fixed key order; loading the text gives back an equal config.
std::string format_run_config(const RunConfig& cfg);

/// Relative paths are taken under $HFGCN_DATA_DIR when it is set and the path
/// does not exist as given.
std::filesystem::path resolve_data_path(const std::filesystem::path& p);

}  // namespace hfgcn::cli
