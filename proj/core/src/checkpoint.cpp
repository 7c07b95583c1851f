#include "hfgcn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "hfgcn/container.hpp"
#include "hfgcn/keyvalue.hpp"

namespace hfgcn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[5] = {'H', 'F', 'G', 'W', '1'};

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void tensor(const Tensor& t) {
    pod(static_cast<std::uint32_t>(t.dim()));
    for (auto e : t.shape()) pod(static_cast<std::uint64_t>(e));
    buf_.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view bytes) : buf_(bytes) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(buf_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  Tensor tensor() {
    const auto rank = pod<std::uint32_t>();
    if (rank > 8) throw CheckpointError("checkpoint: implausible tensor rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto e = pod<std::uint64_t>();
      if (e != 0 && count > (buf_.size() / sizeof(double)) / e) throw CheckpointError("checkpoint: truncated tensor");
      count *= e;
      shape.push_back(e);
    }
    need(count * sizeof(double));
    std::vector<double> values(count);
    std::memcpy(values.data(), buf_.data() + pos_, count * sizeof(double));
    pos_ += count * sizeof(double);
    return Tensor(std::move(shape), std::move(values));
  }
  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated file");
  }
  std::string_view buf_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(std::string_view bytes) {
  return crc32_bytes({reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size()});
}

}  // namespace

Checkpoint capture_checkpoint(Model& model, const Trainer* trainer) {
  Checkpoint c;
  c.model_config = format_model_config(model.config());
  for (Parameter* p : model.parameters()) {
    if (!c.params.emplace(p->name(), p->value()).second) {
      throw CheckpointError("checkpoint: duplicate parameter name " + p->name());
    }
  }
  for (const auto& [name, state] : model.batch_norms()) {
    c.batch_norms[name] = {state->running_mean, state->running_var, state->initialized};
  }
  if (trainer) {
    c.train_config = format_train_config(trainer->config());
    c.epoch = trainer->epoch();
    c.rng_state = trainer->rng_state();
    c.momentum = trainer->optimizer().velocity();
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer w;
  w.pod(kCheckpointVersion);
  w.str(ckpt.model_config);
  w.str(ckpt.train_config);
  w.pod(ckpt.epoch);
  w.str(ckpt.rng_state);
  w.pod(static_cast<std::uint32_t>(ckpt.params.size()));
  for (const auto& [name, t] : ckpt.params) {
    w.str(name);
    w.tensor(t);
  }
  w.pod(static_cast<std::uint32_t>(ckpt.batch_norms.size()));
  for (const auto& [name, bn] : ckpt.batch_norms) {
    w.str(name);
    w.pod(static_cast<std::uint8_t>(bn.initialized));
    w.tensor(bn.running_mean);
    w.tensor(bn.running_var);
  }
  w.pod(static_cast<std::uint32_t>(ckpt.momentum.size()));
  for (const auto& [name, t] : ckpt.momentum) {
    w.str(name);
    w.tensor(t);
  }
  const std::uint32_t crc = crc_of(w.bytes());

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp.string());
    os.write(kMagic, sizeof kMagic);
    os.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    os.write(reinterpret_cast<const char*>(&crc), sizeof crc);
    if (!os) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string all = ss.str();
  if (all.size() < sizeof kMagic + 8 || std::memcmp(all.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + ": not an HFGW1 checkpoint");
  }
  const std::string_view body(all.data() + sizeof kMagic, all.size() - sizeof kMagic - 4);
  std::uint32_t stored = 0;
  std::memcpy(&stored, all.data() + all.size() - 4, 4);
  if (crc_of(body) != stored) throw CheckpointError(path.string() + ": checksum mismatch");

  Reader r(body);
  Checkpoint c;
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  c.model_config = r.str();
  c.train_config = r.str();
  c.epoch = r.pod<std::uint64_t>();
  c.rng_state = r.str();
  for (auto n = r.pod<std::uint32_t>(); n > 0; --n) {
    std::string name = r.str();
    c.params[name] = r.tensor();
  }
  for (auto n = r.pod<std::uint32_t>(); n > 0; --n) {
    std::string name = r.str();
    BnSnapshot bn;
    bn.initialized = r.pod<std::uint8_t>() != 0;
    bn.running_mean = r.tensor();
    bn.running_var = r.tensor();
    c.batch_norms[name] = std::move(bn);
  }
  for (auto n = r.pod<std::uint32_t>(); n > 0; --n) {
    std::string name = r.str();
    c.momentum[name] = r.tensor();
  }
  if (!r.done()) throw CheckpointError(path.string() + ": trailing bytes");
  return c;
}

ModelConfig checkpoint_model_config(const Checkpoint& ckpt) {
  ModelConfig cfg;
  for (const auto& [key, value] : parse_key_values(ckpt.model_config)) {
    if (!set_model_key(cfg, key, value)) throw CheckpointError("checkpoint: unknown model key " + key);
  }
  cfg.validate();
  return cfg;
}

void apply_checkpoint(Model& model, const Checkpoint& ckpt) {
  const auto params = model.parameters();
  if (params.size() != ckpt.params.size()) {
    throw CheckpointError("checkpoint: holds " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                          std::to_string(params.size()));
  }
  for (Parameter* p : params) {
    const auto it = ckpt.params.find(p->name());
    if (it == ckpt.params.end()) throw CheckpointError("checkpoint: missing parameter " + p->name());
    if (it->second.shape() != p->value().shape()) {
      throw CheckpointError("checkpoint: shape mismatch for " + p->name() + ": " + shape_string(it->second.shape()) +
                            " vs " + shape_string(p->value().shape()));
    }
  }
  const auto bns = model.batch_norms();
  if (bns.size() != ckpt.batch_norms.size()) throw CheckpointError("checkpoint: batch-norm count mismatch");
  for (const auto& [name, state] : bns) {
    const auto it = ckpt.batch_norms.find(name);
    if (it == ckpt.batch_norms.end()) throw CheckpointError("checkpoint: missing batch-norm statistics " + name);
    if (it->second.running_mean.shape() != state->running_mean.shape() ||
        it->second.running_var.shape() != state->running_var.shape()) {
      throw CheckpointError("checkpoint: batch-norm shape mismatch for " + name);
    }
  }
  // validated; now copy
  for (Parameter* p : params) {
    p->mutable_value() = ckpt.params.at(p->name());
    p->zero_grad();
  }
  for (const auto& [name, state] : bns) {
    const BnSnapshot& s = ckpt.batch_norms.at(name);
    state->running_mean = s.running_mean;
    state->running_var = s.running_var;
    state->initialized = s.initialized;
  }
}

void restore_trainer(Trainer& trainer, const Checkpoint& ckpt) {
  if (ckpt.rng_state.empty()) throw CheckpointError("checkpoint: no training state to resume from");
  trainer.restore(ckpt.epoch, ckpt.momentum, ckpt.rng_state);
}

}  // namespace hfgcn
