#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hfgcn/model.hpp"
#include "hfgcn/preprocess.hpp"

namespace hfgcn {

struct TrainConfig {
  std::size_t epochs = 120;
  double momentum = 0.9;
  double weight_decay = 0.0004;
  double base_lr = 0.1;
  std::size_t warmup_epochs = 5;
  std::vector<std::size_t> milestones = {60, 90};
  double decay = 0.1;
  double label_smooth = 0.1;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  /// Stop once train top-1 (eval mode) reaches this value; 0 disables.
  double stop_at_train_top1 = 0.0;
  /// Evaluate train accuracy every this many epochs (needed by stop_at_train_top1).
  std::size_t eval_every = 1;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

std::string format_train_config(const TrainConfig& cfg);
bool set_train_key(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Mean over the batch of -sum_k q_k log softmax(logits)_k with
/// q = (1 - eps) onehot(target) + eps / K. logits is (B, K).
Var label_smoothing_ce(Tape& tape, const Var& logits, const std::vector<std::size_t>& targets, double eps);

/// Linear per-step warmup from 0, then base_lr scaled by decay at each
/// milestone reached.
double lr_at(std::size_t epoch, std::size_t step_in_epoch, std::size_t steps_per_epoch, const TrainConfig& cfg);

/// SGD with momentum and coupled L2 decay:
///   v <- momentum v + grad + wd value;  value <- value - lr v.
/// Decay is applied only to parameters flagged with decays().
class Sgd {
 public:
  Sgd(std::vector<Parameter*> params, double momentum, double weight_decay);

  /// Throws std::logic_error when no parameter holds a gradient. Clears the
  /// gradients afterwards.
  void step(double lr);
  void zero_grad();

  const std::map<std::string, Tensor>& velocity() const { return velocity_; }
  void set_velocity(std::map<std::string, Tensor> v);

 private:
  std::vector<Parameter*> params_;
  double momentum_;
  double weight_decay_;
  std::map<std::string, Tensor> velocity_;
};

struct Sample {
  std::string id;
  std::size_t label = 0;
  Tensor x;  // (3, T, V, M)
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t size() const { return samples.size(); }
};

/// Preprocesses sequences into one modality stream of `frames` frames.
Dataset make_dataset(const std::vector<SkeletonSequence>& sequences, Modality modality, std::size_t frames,
                     std::size_t persons, const LayoutInfo& layout);

/// Stacks samples[indices] into (B, 3, T, V, M).
Tensor batch_inputs(const Dataset& data, const std::vector<std::size_t>& indices);

struct ScoreRow {
  std::string sample_id;
  std::size_t label = 0;
  std::vector<double> scores;
};

struct ScoreTable {
  std::size_t num_classes = 0;
  std::vector<ScoreRow> rows;
};

void write_score_table(const std::filesystem::path& path, const ScoreTable& table);
ScoreTable read_score_table(const std::filesystem::path& path);

struct Metrics {
  double top1 = 0.0;
  double loss = 0.0;
  std::vector<double> per_class;  // NaN for classes without samples
};

struct EvalResult {
  Metrics metrics;
  ScoreTable scores;  // softmax probabilities
};

/// Eval-mode forward over the dataset. With threads > 1 the batches are
/// split across threads; the result does not depend on the thread count.
EvalResult evaluate(Model& model, const Dataset& data, std::size_t batch_size = 16, std::size_t threads = 1,
                    double label_smooth = 0.0);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_top1 = -1.0;  // eval-mode accuracy; -1 when not measured
  double seconds = 0.0;
};

/// One JSON object per line.
std::string epoch_record_json(const EpochRecord& r);

/// Owns the optimiser state and the shuffling RNG of a training run.
class Trainer {
 public:
  Trainer(Model& model, TrainConfig cfg);

  /// One pass over `data` in shuffled mini-batches.
  EpochRecord run_epoch(const Dataset& data);
  /// Runs until cfg.epochs or the stop criterion; calls on_epoch after each.
  std::vector<EpochRecord> fit(const Dataset& data, const std::function<void(const EpochRecord&)>& on_epoch = {});

  std::size_t epoch() const { return epoch_; }
  const TrainConfig& config() const { return cfg_; }
  Sgd& optimizer() { return sgd_; }
  const Sgd& optimizer() const { return sgd_; }
  std::string rng_state() const;

  /// Restores epoch counter, momentum buffers and RNG.
  void restore(std::size_t epoch, std::map<std::string, Tensor> velocity, const std::string& rng_state);

 private:
  Model& model_;
  TrainConfig cfg_;
  Sgd sgd_;
  std::mt19937_64 rng_;
  std::size_t epoch_ = 0;
};

}  // namespace hfgcn
