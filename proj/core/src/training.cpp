#include "hfgcn/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace hfgcn {

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  return parts;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (value.empty() || ec != std::errc() || ptr != end) {
    throw std::invalid_argument(key + ": cannot parse '" + value + "'");
  }
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs == 0) throw std::invalid_argument("train config: epochs must be positive");
  if (batch_size == 0) throw std::invalid_argument("train config: batch_size must be positive");
  if (!(base_lr > 0.0)) throw std::invalid_argument("train config: base_lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train config: momentum must be in [0,1)");
  if (weight_decay < 0.0) throw std::invalid_argument("train config: weight_decay must be >= 0");
  if (!(decay > 0.0)) throw std::invalid_argument("train config: decay must be positive");
  if (label_smooth < 0.0 || label_smooth >= 1.0) throw std::invalid_argument("train config: label_smooth must be in [0,1)");
  if (eval_every == 0) throw std::invalid_argument("train config: eval_every must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (milestones[i] == 0 || milestones[i] >= epochs) {
      throw std::invalid_argument("train config: milestone " + std::to_string(milestones[i]) + " not in (0, epochs)");
    }
    if (i > 0 && milestones[i] <= milestones[i - 1]) {
      throw std::invalid_argument("train config: milestones must be strictly ascending");
    }
  }
}

std::string format_train_config(const TrainConfig& cfg) {
  std::string ms;
  for (auto m : cfg.milestones) ms += (ms.empty() ? "" : ",") + std::to_string(m);
  std::ostringstream os;
  os << "epochs=" << cfg.epochs << '\n'
     << "momentum=" << fmt_double(cfg.momentum) << '\n'
     << "weight_decay=" << fmt_double(cfg.weight_decay) << '\n'
     << "base_lr=" << fmt_double(cfg.base_lr) << '\n'
     << "warmup_epochs=" << cfg.warmup_epochs << '\n'
     << "milestones=" << ms << '\n'
     << "decay=" << fmt_double(cfg.decay) << '\n'
     << "label_smooth=" << fmt_double(cfg.label_smooth) << '\n'
     << "batch_size=" << cfg.batch_size << '\n'
     << "seed=" << cfg.seed << '\n'
     << "stop_at_train_top1=" << fmt_double(cfg.stop_at_train_top1) << '\n'
     << "eval_every=" << cfg.eval_every << '\n';
  return os.str();
}

bool set_train_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "epochs") cfg.epochs = parse_number<std::size_t>(key, value);
  else if (key == "momentum") cfg.momentum = parse_number<double>(key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_number<double>(key, value);
  else if (key == "base_lr") cfg.base_lr = parse_number<double>(key, value);
  else if (key == "warmup_epochs") cfg.warmup_epochs = parse_number<std::size_t>(key, value);
  else if (key == "milestones") {
    cfg.milestones.clear();
    for (const auto& m : split(value, ',')) cfg.milestones.push_back(parse_number<std::size_t>(key, m));
  } else if (key == "decay") cfg.decay = parse_number<double>(key, value);
  else if (key == "label_smooth") cfg.label_smooth = parse_number<double>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "stop_at_train_top1") cfg.stop_at_train_top1 = parse_number<double>(key, value);
  else if (key == "eval_every") cfg.eval_every = parse_number<std::size_t>(key, value);
  else return false;
  return true;
}

// ---------------------------------------------------------------------------

Var label_smoothing_ce(Tape& tape, const Var& logits, const std::vector<std::size_t>& targets, double eps) {
  const Tensor& z = logits.value();
  if (z.dim() != 2) throw ShapeError("label_smoothing_ce: logits must be (B,K), got " + shape_string(z.shape()));
  const std::size_t b = z.extent(0), k = z.extent(1);
  if (k < 2) throw std::invalid_argument("label_smoothing_ce: need K >= 2");
  if (targets.size() != b) throw std::invalid_argument("label_smoothing_ce: target count does not match batch");
  for (auto t : targets) {
    if (t >= k) throw std::out_of_range("label_smoothing_ce: target " + std::to_string(t) + " outside K");
  }
  // probabilities kept for the adjoint
  Tensor p({b, k});
  double loss = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* zi = z.data() + i * k;
    const double mx = *std::max_element(zi, zi + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(zi[j] - mx);
    const double lse = mx + std::log(denom);
    double cross = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double q = (j == targets[i] ? 1.0 - eps : 0.0) + eps / double(k);
      cross += q * zi[j];
      p[i * k + j] = std::exp(zi[j] - lse);
    }
    loss += lse - cross;
  }
  Var res = tape.result(Tensor::scalar(loss / double(b)), {&logits});
  if (res.requires_grad()) {
    tape.record([logits, res, p = std::move(p), targets, eps, b, k] {
      if (res.grad().empty()) return;
      const double g = res.grad()[0] / double(b);
      Tensor& gz = logits.node()->grad_buffer();
      for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const double q = (j == targets[i] ? 1.0 - eps : 0.0) + eps / double(k);
          gz[i * k + j] += g * (p[i * k + j] - q);
        }
    });
  }
  return res;
}

double lr_at(std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch, const TrainConfig& cfg) {
  if (steps_per_epoch == 0) throw std::invalid_argument("lr_at: steps_per_epoch must be positive");
  if (epoch < cfg.warmup_epochs) {
    const double done = double(epoch * steps_per_epoch + step_in_epoch);
    return cfg.base_lr * done / double(cfg.warmup_epochs * steps_per_epoch);
  }
  double lr = cfg.base_lr;
  for (auto m : cfg.milestones)
    if (epoch >= m) lr *= cfg.decay;
  return lr;
}

// ---------------------------------------------------------------------------

Sgd::Sgd(std::vector<Parameter*> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (Parameter* p : params_) {
    if (!velocity_.emplace(p->name(), Tensor(p->value().shape())).second) {
      throw std::invalid_argument("Sgd: duplicate parameter name " + p->name());
    }
  }
}

void Sgd::step(double lr) {
  const bool any = std::any_of(params_.begin(), params_.end(), [](Parameter* p) { return p->has_grad(); });
  if (!any) throw std::logic_error("Sgd::step: no gradients; call backward first");
  for (Parameter* p : params_) {
    Tensor& v = velocity_.at(p->name());
    Tensor& w = p->mutable_value();
    const double wd = p->decays() ? weight_decay_ : 0.0;
    const bool has = p->has_grad();
    const double* g = has ? p->grad().data() : nullptr;
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + (has ? g[i] : 0.0) + wd * w[i];
      w[i] -= lr * v[i];
    }
  }
  zero_grad();
}

void Sgd::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Sgd::set_velocity(std::map<std::string, Tensor> v) {
  for (const auto& [name, t] : velocity_) {
    auto it = v.find(name);
    if (it == v.end()) throw std::invalid_argument("Sgd: missing momentum buffer for " + name);
    if (it->second.shape() != t.shape()) throw ShapeError("Sgd: momentum buffer shape mismatch for " + name);
  }
  if (v.size() != velocity_.size()) throw std::invalid_argument("Sgd: unexpected momentum buffers");
  velocity_ = std::move(v);
}

// ---------------------------------------------------------------------------

Dataset make_dataset(const std::vector<SkeletonSequence>& sequences, Modality modality, std::size_t frames,
                     std::size_t persons, const LayoutInfo& layout) {
  Dataset data;
  data.samples.reserve(sequences.size());
  for (const auto& seq : sequences) {
    const ModalityTensor m = make_modality(seq, modality, frames, layout);
    const std::size_t v = m.data.extent(2), slots = m.data.extent(3);
    Tensor x({3, frames, v, persons});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t j = 0; j < v; ++j)
          for (std::size_t p = 0; p < std::min(persons, slots); ++p) x.at({c, t, j, p}) = m.data.at({c, t, j, p});
    data.samples.push_back({seq.sample_id, seq.label, std::move(x)});
  }
  return data;
}

Tensor batch_inputs(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("batch_inputs: empty batch");
  const Shape& s = data.samples.at(indices.front()).x.shape();
  Shape shape{indices.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  Tensor out(shape);
  const std::size_t n = shape_numel(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Tensor& x = data.samples.at(indices[i]).x;
    if (x.shape() != s) throw ShapeError("batch_inputs: inconsistent sample shapes");
    std::copy(x.data(), x.data() + n, out.data() + i * n);
  }
  return out;
}

// ---------------------------------------------------------------------------

void write_score_table(const std::filesystem::path& path, const ScoreTable& table) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "sample_id,label";
  for (std::size_t k = 0; k < table.num_classes; ++k) os << ",score_" << k;
  os << '\n';
  os.precision(17);
  for (const auto& row : table.rows) {
    if (row.scores.size() != table.num_classes) throw std::invalid_argument("score table: row width mismatch");
    if (row.sample_id.find_first_of(",\n") != std::string::npos) {
      throw std::invalid_argument("score table: sample id contains a separator: " + row.sample_id);
    }
    os << row.sample_id << ',' << row.label;
    for (double s : row.scores) os << ',' << s;
    os << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

ScoreTable read_score_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error(path.string() + ": empty score table");
  const auto header = split(line, ',');
  if (header.size() < 3 || header[0] != "sample_id" || header[1] != "label") {
    throw std::runtime_error(path.string() + ": bad header");
  }
  ScoreTable table;
  table.num_classes = header.size() - 2;
  for (std::size_t k = 0; k < table.num_classes; ++k) {
    if (header[k + 2] != "score_" + std::to_string(k)) throw std::runtime_error(path.string() + ": bad header");
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != header.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " fields");
    }
    ScoreRow row;
    row.sample_id = f[0];
    row.label = parse_number<std::size_t>("label", f[1]);
    for (std::size_t k = 0; k < table.num_classes; ++k) row.scores.push_back(std::stod(f[k + 2]));
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------

EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size, std::size_t threads,
                    double label_smooth) {
  if (data.size() == 0) throw std::invalid_argument("evaluate: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be positive");
  const std::size_t k = model.config().num_classes;
  for (const auto& s : data.samples) {
    if (s.label >= k) throw std::out_of_range("evaluate: label " + std::to_string(s.label) + " outside K");
  }
  const std::size_t batches = (data.size() + batch_size - 1) / batch_size;
  std::vector<Tensor> logits(batches);
  auto run = [&](std::size_t first, std::size_t last) {
    for (std::size_t bi = first; bi < last; ++bi) {
      std::vector<std::size_t> idx;
      for (std::size_t i = bi * batch_size; i < std::min(data.size(), (bi + 1) * batch_size); ++i) idx.push_back(i);
      Tape tape(Tape::Mode::inference);
      logits[bi] = model.forward(tape, tape.constant(batch_inputs(data, idx)), false).value();
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, batches));
  if (threads == 1) {
    run(0, batches);
  } else {
    std::vector<std::thread> pool;
    const std::size_t per = (batches + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t first = t * per, last = std::min(batches, first + per);
      if (first < last) pool.emplace_back(run, first, last);
    }
    for (auto& th : pool) th.join();
  }

  EvalResult out;
  out.scores.num_classes = k;
  std::vector<std::size_t> hits(k, 0), seen(k, 0);
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double* z = logits[i / batch_size].data() + (i % batch_size) * k;
    const double mx = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(z[j] - mx);
    const double lse = mx + std::log(denom);
    ScoreRow row{data.samples[i].id, data.samples[i].label, std::vector<double>(k)};
    double cross = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row.scores[j] = std::exp(z[j] - lse);
      cross += ((j == row.label ? 1.0 - label_smooth : 0.0) + label_smooth / double(k)) * z[j];
    }
    loss += lse - cross;
    const std::size_t pred = std::max_element(z, z + k) - z;
    ++seen[row.label];
    if (pred == row.label) {
      ++correct;
      ++hits[row.label];
    }
    out.scores.rows.push_back(std::move(row));
  }
  out.metrics.top1 = double(correct) / double(data.size());
  out.metrics.loss = loss / double(data.size());
  out.metrics.per_class.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    out.metrics.per_class[j] = seen[j] ? double(hits[j]) / double(seen[j]) : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::string epoch_record_json(const EpochRecord& r) {
  nlohmann::json j{{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss}, {"seconds", r.seconds}};
  if (r.train_top1 >= 0.0) j["train_top1"] = r.train_top1;
  return j.dump();
}

// ---------------------------------------------------------------------------

Trainer::Trainer(Model& model, TrainConfig cfg)
    : model_(model),
      cfg_(std::move(cfg)),
      sgd_(model.parameters(), cfg_.momentum, cfg_.weight_decay),
      rng_(cfg_.seed) {
  cfg_.validate();
}

EpochRecord Trainer::run_epoch(const Dataset& data) {
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  const std::size_t k = model_.config().num_classes;
  for (const auto& s : data.samples) {
    if (s.label >= k) throw std::out_of_range("train: label " + std::to_string(s.label) + " outside K");
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  const std::size_t steps = (data.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  EpochRecord rec;
  rec.epoch = epoch_;
  rec.lr = lr_at(epoch_, 0, steps, cfg_);
  double loss_sum = 0.0;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<std::size_t> idx(order.begin() + step * cfg_.batch_size,
                                 order.begin() + std::min(data.size(), (step + 1) * cfg_.batch_size));
    std::vector<std::size_t> targets;
    for (auto i : idx) targets.push_back(data.samples[i].label);
    Tape tape;
    const Var logits = model_.forward(tape, tape.constant(batch_inputs(data, idx)), true);
    const Var loss = label_smoothing_ce(tape, logits, targets, cfg_.label_smooth);
    tape.backward(loss);
    sgd_.step(lr_at(epoch_, step, steps, cfg_));
    loss_sum += loss.value()[0] * double(idx.size());
  }
  rec.train_loss = loss_sum / double(data.size());
  ++epoch_;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

std::vector<EpochRecord> Trainer::fit(const Dataset& data, const std::function<void(const EpochRecord&)>& on_epoch) {
  std::vector<EpochRecord> history;
  while (epoch_ < cfg_.epochs) {
    EpochRecord rec = run_epoch(data);
    const bool stop_enabled = cfg_.stop_at_train_top1 > 0.0;
    if (stop_enabled && epoch_ % cfg_.eval_every == 0) {
      rec.train_top1 = evaluate(model_, data, cfg_.batch_size).metrics.top1;
    }
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stop_enabled && rec.train_top1 >= cfg_.stop_at_train_top1) break;
  }
  return history;
}

std::string Trainer::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

void Trainer::restore(std::size_t epoch, std::map<std::string, Tensor> velocity, const std::string& rng_state) {
  sgd_.set_velocity(std::move(velocity));
  std::istringstream is(rng_state);
  is >> rng_;
  if (!is) throw std::invalid_argument("Trainer: corrupt RNG state");
  epoch_ = epoch;
}

}  // namespace hfgcn
