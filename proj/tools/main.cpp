#include <CLI11.hpp>

#include <iostream>

#include "cli/commands.hpp"
#include "hfgcn/checkpoint.hpp"
#include "hfgcn/container.hpp"

using namespace hfgcn;
using namespace hfgcn::cli;

namespace {

// Flags shared by the config-driven commands. Flags win over the file.
struct ConfigFlags {
  std::string config;
  std::vector<std::string> set;
  std::optional<std::size_t> threads;
  std::optional<std::uint64_t> seed;
  std::string ham_mode, xi_input, hypergraphs, modality, data, out_dir, checkpoint;
  bool hypergraphs_given = false;

  void attach(CLI::App* app, bool run_paths) {
    app->add_option("--config", config, "key=value run configuration");
    app->add_option("--set", set, "extra key=value override (repeatable)");
    app->add_option("--threads", threads, "worker threads");
    app->add_option("--seed", seed, "model and shuffling seed");
    app->add_option("--ham-mode", ham_mode, "per_branch|summed");
    app->add_option("--xi-input", xi_input, "hx|x");
    app->add_option("--hypergraphs", hypergraphs, "comma list such as h1,h2,h3")->each([this](const std::string&) {
      hypergraphs_given = true;
    });
    app->add_option("--modality", modality, "joint|bone|jmotion|bmotion");
    if (run_paths) {
      app->add_option("--data", data, "container file");
      app->add_option("--out-dir", out_dir, "output directory");
    }
  }

  RunConfig resolve() const {
    RunConfig cfg = config.empty() ? RunConfig{} : load_run_config(resolve_data_path(config));
    auto put = [&](const std::string& k, const std::string& v) {
      if (!set_run_key(cfg, k, v)) throw ConfigError("unknown config key '" + k + "'");
    };
    for (const auto& kv : set) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      put(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (threads) cfg.threads = *threads;
    if (seed) cfg.train.seed = *seed;
    if (!ham_mode.empty()) put("ham_mode", ham_mode);
    if (!xi_input.empty()) put("xi_input", xi_input);
    if (hypergraphs_given) put("hypergraphs", hypergraphs);
    if (!modality.empty()) put("modality", modality);
    if (!data.empty()) cfg.data = data;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (!checkpoint.empty()) cfg.checkpoint = checkpoint;
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hfgcn: hypergraph fusion GCN for skeleton action recognition"};
  app.require_subcommand(1);
  bool force = false;
  app.add_flag("--force", force, "overwrite existing outputs");
  Streams io{std::cout, std::cerr};
  std::function<int()> run;

  auto* convert = app.add_subcommand("convert", "parse .skeleton files into a container");
  ConvertOptions conv;
  std::string layout = "ntu25";
  convert->add_option("--layout", layout, "joint layout")->capture_default_str();
  convert->add_option("--in", conv.in_dir, "directory of .skeleton files")->required();
  convert->add_option("--out", conv.out, "container file")->required();
  convert->add_option("--max-persons", conv.max_persons, "bodies kept per clip")->capture_default_str();
  convert->add_flag("--strict", conv.strict, "stop at the first unreadable file");
  convert->add_flag("--force", force, "overwrite existing outputs");
  convert->callback([&] {
    run = [&] {
      conv.layout = parse_layout(layout);
      conv.force = force;
      return cmd_convert(conv, io);
    };
  });

  auto* synth = app.add_subcommand("synth", "write a seeded synthetic container");
  SynthOptions syn;
  synth->add_option("--out", syn.out, "container file")->required();
  synth->add_option("--classes", syn.synth.classes)->capture_default_str();
  synth->add_option("--per-class", syn.synth.per_class)->capture_default_str();
  synth->add_option("--frames", syn.synth.frames)->capture_default_str();
  synth->add_option("--persons", syn.synth.person_slots)->capture_default_str();
  synth->add_option("--noise", syn.synth.noise)->capture_default_str();
  synth->add_option("--seed", syn.synth.seed)->capture_default_str();
  synth->add_flag("--force", force, "overwrite existing outputs");
  synth->callback([&] {
    run = [&] {
      syn.force = force;
      return cmd_synth(syn, io);
    };
  });

  auto* train = app.add_subcommand("train", "train one modality stream");
  ConfigFlags train_flags;
  bool resume = false;
  train_flags.attach(train, true);
  train->add_flag("--resume", resume, "continue from <out_dir>/last.hfgw");
  train->add_flag("--force", force, "overwrite existing outputs");
  train->callback([&] {
    run = [&] { return cmd_train({train_flags.resolve(), resume, force}, io); };
  });

  auto* eval = app.add_subcommand("eval", "score a container with a checkpoint");
  ConfigFlags eval_flags;
  eval_flags.attach(eval, true);
  eval->add_option("--checkpoint", eval_flags.checkpoint, "model checkpoint (.hfgw)");
  eval->add_flag("--force", force, "overwrite existing outputs");
  eval->callback([&] {
    run = [&] { return cmd_eval({eval_flags.resolve(), force}, io); };
  });

  auto* fuse = app.add_subcommand("fuse", "weighted fusion of score tables");
  FuseOptions fo;
  std::string space = "probability";
  fuse->add_option("scores", fo.scores, "score CSV files")->required();
  fuse->add_option("--weights", fo.weights, "one weight per table")->delimiter(',');
  fuse->add_option("--space", space, "probability|logit")->capture_default_str();
  fuse->add_option("--out", fo.out, "fused CSV")->required();
  fuse->add_flag("--force", force, "overwrite existing outputs");
  fuse->callback([&] {
    run = [&] {
      if (space == "probability") fo.space = FuseSpace::probability;
      else if (space == "logit") fo.space = FuseSpace::logit;
      else throw ConfigError("fuse: unknown space '" + space + "'");
      fo.force = force;
      return cmd_fuse(fo, io);
    };
  });

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every module");
  GradcheckSettings gs;
  gradcheck->add_option("--module", gs.modules, "ham|hgcm|mstc|model (repeatable)");
  gradcheck->add_option("--seed", gs.seed)->capture_default_str();
  gradcheck->add_option("--threads", [](const CLI::results_t&) { return true; }, "accepted; the check is serial");
  gradcheck->add_flag("--corrupt", gs.corrupt, "negative control: perturb one adjoint");
  gradcheck->callback([&] {
    run = [&] {
      for (const auto& m : gs.modules) {
        if (std::find(kGradcheckModules.begin(), kGradcheckModules.end(), m) == kGradcheckModules.end()) {
          throw ConfigError("gradcheck: unknown module '" + m + "'");
        }
      }
      return cmd_gradcheck(gs, io);
    };
  });

  auto* params = app.add_subcommand("params", "parameter count and compute budget");
  ConfigFlags params_flags;
  params_flags.attach(params, false);
  params->callback([&] {
    run = [&] { return cmd_params(params_flags.resolve().model, io); };
  });

  auto* topo = app.add_subcommand("export-topology", "write the adjacency and hypergraphs");
  ConfigFlags topo_flags;
  ExportOptions eo;
  topo_flags.attach(topo, false);
  topo->add_option("--format", eo.format, "csv|dot")->capture_default_str();
  topo->add_option("--out", eo.out_dir, "output directory")->capture_default_str();
  topo->add_flag("--force", force, "overwrite existing outputs");
  topo->callback([&] {
    run = [&] {
      eo.model = topo_flags.resolve().model;
      eo.force = force;
      return cmd_export_topology(eo, io);
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    return run();
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
