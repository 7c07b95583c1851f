#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <sstream>

namespace hfgcn::cli {

ModelConfig RunConfig::default_model() {
  ModelConfig m = ModelConfig::standard();
  m.num_classes = 120;
  return m;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  if (threads == 0) throw ConfigError("threads must be positive");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

bool set_run_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (set_model_key(cfg.model, key, value) || set_train_key(cfg.train, key, value)) return true;
    if (key == "data") cfg.data = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "checkpoint") cfg.checkpoint = value;
    else if (key == "modality") cfg.modality = parse_modality(value);
    else if (key == "threads") {
      std::size_t n = 0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), n);
      if (r.ec != std::errc{} || r.ptr != value.data() + value.size()) throw ConfigError("threads: bad value '" + value + "'");
      cfg.threads = n;
    } else {
      return false;
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
  return true;
}

void apply_key_values(RunConfig& cfg, const KeyValues& kv) {
  for (const auto& [k, v] : kv) {
    if (!set_run_key(cfg, k, v)) throw ConfigError("unknown config key '" + k + "'");
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg;
  try {
    apply_key_values(cfg, load_key_values(path));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ConfigError(path.string() + ": " + msg);
  }
  return cfg;
}

std::string format_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  os << "# model\n" << format_model_config(cfg.model) << "# training\n" << format_train_config(cfg.train)
     << "# run\n"
     << "data=" << cfg.data << '\n'
     << "out_dir=" << cfg.out_dir << '\n'
     << "checkpoint=" << cfg.checkpoint << '\n'
     << "modality=" << modality_name(cfg.modality) << '\n'
     << "threads=" << cfg.threads << '\n';
  return os.str();
}

std::filesystem::path resolve_data_path(const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || std::filesystem::exists(p)) return p;
  if (const char* dir = std::getenv("HFGCN_DATA_DIR"); dir && *dir) return std::filesystem::path(dir) / p;
  return p;
}

}  // namespace hfgcn::cli
