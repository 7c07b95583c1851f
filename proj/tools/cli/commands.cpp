#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "hfgcn/budget.hpp"
#include "hfgcn/checkpoint.hpp"
#include "hfgcn/container.hpp"
#include "hfgcn/model.hpp"
#include "hfgcn/ntu_reader.hpp"
#include "hfgcn/topology.hpp"

namespace hfgcn::cli {

namespace fs = std::filesystem;

namespace {

bool skip_existing(const std::vector<fs::path>& outputs, bool force, std::ostream& out) {
  if (force) return false;
  for (const auto& p : outputs) {
    if (!fs::exists(p)) return false;
  }
  out << outputs.front().string() << " already exists; nothing to do (use --force to overwrite)\n";
  return true;
}

std::string read_file(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string g17(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string json_number(double v) { return std::isfinite(v) ? g17(v) : "null"; }

Dataset load_dataset(const RunConfig& cfg) {
  if (cfg.data.empty()) throw ConfigError("no data file (set data= in the config or pass --data)");
  const auto seqs = read_container(resolve_data_path(cfg.data));
  Dataset data = make_dataset(seqs, cfg.modality, cfg.model.frames, cfg.model.persons, layout_info(cfg.model.layout));
  for (const auto& s : data.samples) {
    if (s.label >= cfg.model.num_classes) {
      throw ConfigError("sample " + s.id + " has label " + std::to_string(s.label) + " but num_classes=" +
                        std::to_string(cfg.model.num_classes));
    }
  }
  return data;
}

std::string matrix_csv(const Tensor& m) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < m.extent(0); ++i) {
    for (std::size_t j = 0; j < m.extent(1); ++j) os << (j ? "," : "") << m.at({i, j});
    os << '\n';
  }
  return os.str();
}

void bone_edges(std::ostream& os, const LayoutInfo& layout) {
  for (const auto& b : layout.bones.pairs) {
    if (b.child != b.parent) os << "  j" << b.parent << " -- j" << b.child << ";\n";
  }
}

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double table_top1(const ScoreTable& t) {
  if (t.rows.empty()) return 0.0;
  std::size_t hit = 0;
  for (const auto& r : t.rows) hit += argmax(r.scores) == r.label;
  return static_cast<double>(hit) / static_cast<double>(t.rows.size());
}

}  // namespace

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << text;
    if (!os.flush()) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------

int cmd_convert(const ConvertOptions& o, Streams io) {
  if (!fs::is_directory(o.in_dir)) throw ConfigError("convert: not a directory: " + o.in_dir.string());
  if (o.out.empty()) throw ConfigError("convert: --out is required");
  if (skip_existing({o.out}, o.force, io.out)) return kOk;

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.in_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".skeleton") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  const LayoutInfo& layout = layout_info(o.layout);
  std::vector<SkeletonSequence> samples;
  std::size_t bad = 0;
  for (const auto& f : files) {
    ParseOptions po;
    po.max_persons = o.max_persons;
    po.sample_id = f.stem().string();
    po.label = ntu_label_from_name(po.sample_id).value_or(0);
    try {
      samples.push_back(parse_skeleton_text(read_file(f), layout.layout, po));
    } catch (const std::exception& e) {
      io.err << f.filename().string() << ": " << e.what() << '\n';
      ++bad;
      if (o.strict) break;
    }
  }
  if (bad > 0 && o.strict) {
    io.err << "convert: stopped at the first bad file (--strict); nothing written\n";
    return kValidation;
  }
  ContainerInfo info;
  info.joints = static_cast<std::uint32_t>(layout.joints);
  info.max_persons = static_cast<std::uint32_t>(o.max_persons);
  write_container(o.out, samples, info);
  io.out << "wrote " << samples.size() << " samples to " << o.out.string();
  if (bad > 0) io.out << " (" << bad << " file(s) failed)";
  io.out << '\n';
  return bad > 0 ? kValidation : kOk;
}

int cmd_synth(const SynthOptions& o, Streams io) {
  if (o.out.empty()) throw ConfigError("synth: --out is required");
  if (skip_existing({o.out}, o.force, io.out)) return kOk;
  const auto samples = synth_dataset(o.synth);
  ContainerInfo info;
  info.joints = static_cast<std::uint32_t>(o.synth.joints);
  info.max_persons = static_cast<std::uint32_t>(o.synth.person_slots);
  if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
  write_container(o.out, samples, info);
  io.out << "wrote " << samples.size() << " synthetic samples (" << o.synth.classes << " classes) to "
         << o.out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_train(const TrainOptions& o, Streams io) {
  const RunConfig& cfg = o.cfg;
  cfg.validate();
  const fs::path dir = cfg.out_dir;
  const fs::path final_ckpt = dir / "model.hfgw", last_ckpt = dir / "last.hfgw";
  if (!o.resume && skip_existing({final_ckpt}, o.force, io.out)) return kOk;

  const Dataset data = load_dataset(cfg);
  if (data.size() == 0) throw ConfigError("train: data file holds no samples");
  Model model(cfg.model, cfg.train.seed);
  Trainer trainer(model, cfg.train);
  bool resumed = false;
  if (o.resume && fs::exists(last_ckpt)) {
    const Checkpoint ck = load_checkpoint(last_ckpt);
    if (ck.model_config != format_model_config(cfg.model) || ck.train_config != format_train_config(cfg.train)) {
      throw ConfigError("resume: " + last_ckpt.string() + " was written by a different configuration");
    }
    apply_checkpoint(model, ck);
    restore_trainer(trainer, ck);
    resumed = true;
    io.out << "resuming after epoch " << trainer.epoch() << '\n';
  }

  fs::create_directories(dir);
  write_text_file(dir / "train.cfg", format_run_config(cfg));
  std::ofstream metrics(dir / "metrics.jsonl", resumed ? std::ios::app : std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + (dir / "metrics.jsonl").string());

  io.out << "training " << model.parameter_count() << " parameters on " << data.size() << " samples ("
         << modality_name(cfg.modality) << ")\n";
  const auto history = trainer.fit(data, [&](const EpochRecord& r) {
    save_checkpoint(last_ckpt, capture_checkpoint(model, &trainer));
    metrics << epoch_record_json(r) << '\n' << std::flush;
    io.out << "epoch " << std::setw(4) << r.epoch << "  lr " << std::setw(10) << r.lr << "  loss " << std::setw(10)
           << r.train_loss;
    if (r.train_top1 >= 0.0) io.out << "  train top-1 " << r.train_top1;
    io.out << '\n' << std::flush;
  });
  save_checkpoint(final_ckpt, capture_checkpoint(model, &trainer));
  io.out << "ran " << history.size() << " epoch(s); wrote " << final_ckpt.string() << '\n';
  return kOk;
}

int cmd_eval(const EvalOptions& o, Streams io) {
  RunConfig cfg = o.cfg;
  if (cfg.checkpoint.empty()) throw ConfigError("eval: no checkpoint (set checkpoint= or pass --checkpoint)");
  const Checkpoint ck = load_checkpoint(cfg.checkpoint);
  cfg.model = checkpoint_model_config(ck);
  cfg.validate();

  const fs::path dir = cfg.out_dir;
  const std::string mod = modality_name(cfg.modality);
  const fs::path scores = dir / ("scores_" + mod + ".csv");
  const fs::path echo = dir / ("eval_" + mod + ".cfg");
  const fs::path summary = dir / ("eval_" + mod + ".json");
  if (skip_existing({scores, echo, summary}, o.force, io.out)) return kOk;

  const Dataset data = load_dataset(cfg);
  Model model(cfg.model, cfg.train.seed);
  apply_checkpoint(model, ck);
  const EvalResult r = evaluate(model, data, cfg.train.batch_size, cfg.threads, cfg.train.label_smooth);

  fs::create_directories(dir);
  write_text_file(echo, format_run_config(cfg));
  fs::path tmp = scores;
  tmp += ".tmp";
  write_score_table(tmp, r.scores);
  fs::rename(tmp, scores);
  std::ostringstream js;
  js << "{\"modality\":\"" << mod << "\",\"samples\":" << data.size() << ",\"top1\":" << json_number(r.metrics.top1)
     << ",\"loss\":" << json_number(r.metrics.loss) << ",\"per_class\":[";
  for (std::size_t k = 0; k < r.metrics.per_class.size(); ++k) {
    js << (k ? "," : "") << json_number(r.metrics.per_class[k]);
  }
  js << "]}\n";
  write_text_file(summary, js.str());
  io.out << mod << ": top-1 " << r.metrics.top1 << "  loss " << r.metrics.loss << "  (" << data.size()
         << " samples) -> " << scores.string() << '\n';
  return kOk;
}

int cmd_fuse(const FuseOptions& o, Streams io) {
  if (o.scores.empty()) throw ConfigError("fuse: no score files");
  if (o.out.empty()) throw ConfigError("fuse: --out is required");
  fs::path echo = o.out;
  echo.replace_extension(".cfg");
  if (skip_existing({o.out, echo}, o.force, io.out)) return kOk;

  std::vector<ScoreTable> tables;
  for (const auto& p : o.scores) tables.push_back(read_score_table(p));
  const FusedScores fused = fuse_scores(tables, o.weights, o.space);

  std::ostringstream csv;
  csv.precision(17);
  csv << "sample_id,label,prediction";
  for (std::size_t k = 0; k < fused.num_classes; ++k) csv << ",score_" << k;
  csv << '\n';
  for (std::size_t i = 0; i < fused.rows.size(); ++i) {
    const auto& row = fused.rows[i];
    csv << row.sample_id << ',' << row.label << ',' << fused.predictions[i];
    for (double s : row.scores) csv << ',' << s;
    csv << '\n';
  }
  write_text_file(o.out, csv.str());

  std::ostringstream cfg;
  cfg << "scores=";
  for (std::size_t i = 0; i < o.scores.size(); ++i) cfg << (i ? "," : "") << o.scores[i].string();
  cfg << "\nweights=";
  for (std::size_t i = 0; i < o.weights.size(); ++i) cfg << (i ? "," : "") << g17(o.weights[i]);
  cfg << "\nspace=" << (o.space == FuseSpace::logit ? "logit" : "probability") << '\n';
  write_text_file(echo, cfg.str());

  for (std::size_t i = 0; i < tables.size(); ++i) {
    io.out << "stream " << o.scores[i].filename().string() << ": top-1 " << table_top1(tables[i]) << '\n';
  }
  io.out << "fused (" << fused.rows.size() << " samples): top-1 " << fused.top1 << " -> " << o.out.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------

int cmd_gradcheck(const GradcheckSettings& s, Streams io) {
  const auto results = module_gradchecks(s);
  bool ok = true;
  io.out << std::left << std::setw(8) << "module" << std::setw(16) << "max_rel_error" << std::setw(8) << "coords"
         << "worst parameter\n";
  for (const auto& r : results) {
    io.out << std::setw(8) << r.module << std::setw(16) << r.result.max_rel_error << std::setw(8)
           << r.result.coordinates << r.result.worst_parameter << (r.passed ? "  ok" : "  FAIL") << '\n';
    ok = ok && r.passed;
  }
  io.out << std::right;
  io.out << (ok ? "all modules below " : "gradient mismatch at tolerance ") << s.tolerance
         << (s.corrupt ? " (corrupted adjoint)" : "") << '\n';
  return ok ? kOk : kAcceptance;
}

std::optional<BudgetTarget> budget_target(const ModelConfig& m) {
  if (m.blocks != ModelConfig::standard_blocks()) return std::nullopt;
  if (m.variant == ModelVariant::baseline) return BudgetTarget{1.18, 1.46};
  using H = std::vector<std::string>;
  if (m.hypergraphs == H{"h1"}) return BudgetTarget{1.08, 1.34};
  if (m.hypergraphs == H{"h1", "h2"}) return BudgetTarget{1.44, 1.80};
  if (m.hypergraphs == H{"h1", "h2", "h3"}) return BudgetTarget{1.81, 2.24};
  return std::nullopt;
}

int cmd_params(const ModelConfig& m, Streams io) {
  m.validate();
  const Shape input{3, m.frames, m.joints, m.persons};
  const double params = static_cast<double>(count_params(m)) / 1e6;
  const FlopCount f = count_flops(m, input);
  const double gmacs = static_cast<double>(f.multiply_adds) / 1e9;
  const auto target = budget_target(m);
  auto delta = [](double v, double t) {
    std::ostringstream os;
    os << std::showpos << std::fixed << std::setprecision(1) << 100.0 * (v - t) / t << '%';
    return os.str();
  };
  std::string hs;
  for (const auto& h : m.hypergraphs) hs += (hs.empty() ? "" : ",") + h;
  io.out << "config    " << variant_name(m.variant) << (m.variant == ModelVariant::hfgcn ? " " + hs : "") << ", "
         << m.blocks.size() << " blocks, " << m.num_classes << " classes, input (3," << m.frames << ','
         << m.joints << ',' << m.persons << ")\n";
  io.out << std::fixed << std::setprecision(3);
  io.out << "params    " << count_params(m) << " (" << params << " M)";
  if (target) io.out << "  target " << target->params_m << " M  delta " << delta(params, target->params_m);
  io.out << "\nGMACs     " << gmacs << " G";
  if (target) io.out << "  target " << target->gmacs << " G  delta " << delta(gmacs, target->gmacs);
  io.out << "\nGFLOPs    " << static_cast<double>(f.flops) / 1e9 << " G (2 x multiply-adds)\n";
  io.out.unsetf(std::ios::floatfield);
  io.out << std::setprecision(6);
  if (!target) io.out << "no published budget for this configuration\n";
  return kOk;
}

int cmd_export_topology(const ExportOptions& o, Streams io) {
  if (o.format != "csv" && o.format != "dot") throw ConfigError("export-topology: unknown format '" + o.format + "'");
  const LayoutInfo& layout = layout_info(o.model.layout);
  const HypergraphSet hs = build_hypergraph_set(o.model);

  std::vector<std::pair<fs::path, std::string>> files;
  if (o.format == "csv") {
    files.emplace_back(o.out_dir / "adjacency.csv", matrix_csv(build_adjacency(layout.bones, layout.joints).a));
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const auto& h = hs.member(i);
      files.emplace_back(o.out_dir / (h.name + "_incidence.csv"), matrix_csv(h.h));
      files.emplace_back(o.out_dir / (h.name + "_propagation.csv"), matrix_csv(hs.propagation(i)));
    }
  } else {
    std::ostringstream sk;
    sk << "graph skeleton {\n  node [shape=circle];\n";
    bone_edges(sk, layout);
    sk << "}\n";
    files.emplace_back(o.out_dir / "skeleton.dot", sk.str());
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const auto& h = hs.member(i);
      std::ostringstream os;
      os << "graph " << h.name << " {\n  node [shape=circle];\n";
      for (std::size_t e = 0; e < h.edges(); ++e) {
        os << "  subgraph cluster_e" << e << " {\n    label=\"e" << e << "\";\n   ";
        for (std::size_t v = 0; v < h.joints(); ++v) {
          if (h.h.at({v, e}) != 0.0) os << " j" << v << ';';
        }
        os << "\n  }\n";
      }
      bone_edges(os, layout);
      os << "}\n";
      files.emplace_back(o.out_dir / (h.name + ".dot"), os.str());
    }
  }

  std::vector<fs::path> paths;
  for (const auto& f : files) paths.push_back(f.first);
  if (skip_existing(paths, o.force, io.out)) return kOk;
  for (const auto& [p, text] : files) {
    write_text_file(p, text);
    io.out << "wrote " << p.string() << '\n';
  }
  return kOk;
}

}  // namespace hfgcn::cli
