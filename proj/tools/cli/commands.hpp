#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hfgcn/fusion.hpp"
#include "hfgcn/skeleton.hpp"
#include "hfgcn/synthetic.hpp"
#include "hfgcn/verify.hpp"
#include "run_config.hpp"

namespace hfgcn::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2, kAcceptance = 3 };

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

struct ConvertOptions {
  std::filesystem::path in_dir;
  std::filesystem::path out;
  SkeletonLayout layout = SkeletonLayout::ntu25;
  std::size_t max_persons = 2;
  bool strict = false;
  bool force = false;
};
/// Every *.skeleton file of in_dir, sorted by name. Failures are listed and
/// give exit 1; without strict the readable files are still written.
int cmd_convert(const ConvertOptions& o, Streams io);

struct SynthOptions {
  SynthConfig synth;
  std::filesystem::path out;
  bool force = false;
};
int cmd_synth(const SynthOptions& o, Streams io);

// Train writes into out_dir: train.cfg (resolved config), metrics.jsonl,
// last.hfgw after every epoch and model.hfgw at the end.
struct TrainOptions {
  RunConfig cfg;
  bool resume = false;
  bool force = false;
};
int cmd_train(const TrainOptions& o, Streams io);

// Eval writes scores_<modality>.csv, eval_<modality>.cfg and
// eval_<modality>.json into out_dir. The model config comes from the
// checkpoint.
struct EvalOptions {
  RunConfig cfg;
  bool force = false;
};
int cmd_eval(const EvalOptions& o, Streams io);

struct FuseOptions {
  std::vector<std::filesystem::path> scores;
  std::vector<double> weights;
  FuseSpace space = FuseSpace::probability;
  std::filesystem::path out;
  bool force = false;
};
/// CSV columns: sample_id,label,prediction,score_0..score_{K-1}.
int cmd_fuse(const FuseOptions& o, Streams io);

/// Exit 3 when any module reaches the tolerance.
int cmd_gradcheck(const GradcheckSettings& s, Streams io);

struct BudgetTarget {
  double params_m;
  double gmacs;
};
/// Published size of the standard configurations; nullopt for others.
std::optional<BudgetTarget> budget_target(const ModelConfig& m);
int cmd_params(const ModelConfig& m, Streams io);

struct ExportOptions {
  ModelConfig model;
  std::string format = "csv";
  std::filesystem::path out_dir = "topology";
  bool force = false;
};
/// csv: adjacency.csv plus <h>_incidence.csv and <h>_propagation.csv per
/// hypergraph. dot: skeleton.dot plus <h>.dot with one cluster per hyperedge.
int cmd_export_topology(const ExportOptions& o, Streams io);

/// Writes through a sibling temporary file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace hfgcn::cli
