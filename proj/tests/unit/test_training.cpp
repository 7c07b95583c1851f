#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "hfgcn/checkpoint.hpp"
#include "hfgcn/fusion.hpp"
#include "hfgcn/gradcheck.hpp"
#include "hfgcn/synthetic.hpp"
#include "hfgcn/training.hpp"
#include "json.hpp"
#include "oracles.hpp"

using namespace hfgcn;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) : path(std::filesystem::temp_directory_path() / name) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

double ce_value(const Tensor& logits, const std::vector<std::size_t>& targets, double eps) {
  Tape tape(Tape::Mode::inference);
  return label_smoothing_ce(tape, tape.constant(logits), targets, eps).value()[0];
}

ModelConfig small_config(std::size_t classes = 3, std::size_t frames = 8) {
  ModelConfig cfg;
  cfg.frames = frames;
  cfg.persons = 1;
  cfg.num_classes = classes;
  cfg.reduction = 3;
  cfg.blocks = ModelConfig::reduced_blocks(2, 6);
  return cfg;
}

Dataset small_dataset(std::size_t classes = 3, std::size_t per_class = 2, double noise = 0.2, std::uint64_t seed = 3) {
  SynthConfig sc;
  sc.classes = classes;
  sc.per_class = per_class;
  sc.frames = 8;
  sc.noise = noise;
  sc.seed = seed;
  return make_dataset(synth_dataset(sc), Modality::joint, 8, 1, layout_info(SkeletonLayout::ntu25));
}

TrainConfig small_train(std::size_t epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.warmup_epochs = 1;
  tc.milestones = {};
  tc.batch_size = 2;
  tc.base_lr = 0.05;
  tc.seed = 9;
  return tc;
}

ScoreTable table(std::size_t k, const std::vector<std::pair<std::string, std::size_t>>& ids, std::mt19937_64& rng) {
  ScoreTable t;
  t.num_classes = k;
  for (const auto& [id, label] : ids) {
    ScoreRow r{id, label, {}};
    const Tensor p = oracle::softmax_lastdim(oracle::random_tensor({k}, rng, -3, 3));
    r.scores.assign(p.data(), p.data() + k);
    t.rows.push_back(r);
  }
  return t;
}

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

TEST_CASE("label smoothing CE: examples") {
  for (double eps : {0.0, 0.1, 0.5})
    for (std::size_t K : {2, 5, 60}) CHECK(std::abs(ce_value(Tensor({3, K}, 0.7), {0, 1, 1}, eps) - std::log(double(K))) < 1e-12);

  Tensor peaked({1, 4}, 0.0);
  peaked[2] = 60.0;
  CHECK(ce_value(peaked, {2}, 0.0) < 1e-20);

  const double e = std::exp(1.0);
  const double p0 = e / (e + 2.0), p1 = 1.0 / (e + 2.0);
  const double want = -((0.9 + 0.1 / 3.0) * std::log(p0) + 2.0 * (0.1 / 3.0) * std::log(p1));
  CHECK(ce_value(Tensor({1, 3}, std::vector<double>{1, 0, 0}), {0}, 0.1) == doctest::Approx(want).epsilon(1e-14));

  CHECK_THROWS(ce_value(Tensor({1, 3}), {3}, 0.1));
  CHECK_THROWS(ce_value(Tensor({2, 3}), {0}, 0.1));
  CHECK_THROWS(ce_value(Tensor({1, 1}), {0}, 0.1));
}

TEST_CASE("label smoothing CE: oracle, non-negativity, shift invariance and gradient") {
  std::mt19937_64 rng(51);
  for (int n = 0; n < 50; ++n) {
    const std::size_t B = oracle::pick(rng, 1, 6), K = oracle::pick(rng, 2, 10);
    const Tensor logits = oracle::random_tensor({B, K}, rng, -4, 4);
    std::vector<std::size_t> targets(B);
    for (auto& t : targets) t = oracle::pick(rng, 0, K - 1);
    const double eps = oracle::random_tensor({1}, rng, 0, 0.5)[0];
    const double v = ce_value(logits, targets, eps);
    REQUIRE(std::abs(v - oracle::label_smoothing_ce(logits, targets, eps)) < 1e-12);
    REQUIRE(v >= 0.0);
    Tensor shifted = logits;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 11.5;
    REQUIRE(std::abs(ce_value(shifted, targets, eps) - v) < 1e-12);
  }
  Parameter z("z", oracle::random_tensor({3, 4}, rng));
  auto loss = [&](Tape& t) { return label_smoothing_ce(t, z.var(), {0, 3, 1}, 0.1); };
  CHECK(finite_diff_check(loss, {&z}, {1e-5, 12, 1}).max_rel_error < 1e-8);
}

TEST_CASE("SGD: plain descent, pure decay, unrolled recursion") {
  Parameter w("w", Tensor({2}, std::vector<double>{1.0, -2.0}));
  Parameter b("b", Tensor({1}, 3.0), false);

  SUBCASE("momentum 0 and wd 0 is a gradient step") {
    Sgd sgd({&w}, 0.0, 0.0);
    w.mutable_grad() = Tensor({2}, std::vector<double>{0.5, 1.0});
    sgd.step(0.1);
    CHECK(w.value()[0] == doctest::Approx(0.95));
    CHECK(w.value()[1] == doctest::Approx(-2.1));
    CHECK_FALSE(w.has_grad());
  }
  SUBCASE("zero gradient with decay shrinks decaying parameters only") {
    Sgd sgd({&w, &b}, 0.9, 0.1);
    w.mutable_grad();
    b.mutable_grad();
    sgd.step(0.5);
    CHECK(w.value()[0] == doctest::Approx(1.0 - 0.5 * 0.1 * 1.0));
    CHECK(w.value()[1] == doctest::Approx(-2.0 - 0.5 * 0.1 * -2.0));
    CHECK(b.value()[0] == 3.0);
  }
  SUBCASE("two steps on a quadratic follow the hand recursion") {
    // loss = 0.5 * a * w^2 with a = 3
    Parameter q("q", Tensor({1}, 2.0));
    const double mu = 0.9, wd = 0.01, lr = 0.05, a = 3.0;
    Sgd sgd({&q}, mu, wd);
    double wv = 2.0, v = 0.0;
    for (int step = 0; step < 2; ++step) {
      Tape tape;
      const Var sq = ops::contract(tape, "i,i->i", q.var(), q.var());
      tape.backward(ops::scale(tape, ops::sum_all(tape, sq), 0.5 * a));
      sgd.step(lr);
      v = mu * v + a * wv + wd * wv;
      wv -= lr * v;
      CHECK(q.value()[0] == doctest::Approx(wv).epsilon(1e-15));
      CHECK(sgd.velocity().at("q")[0] == doctest::Approx(v).epsilon(1e-15));
    }
  }
  SUBCASE("lr 0 leaves values bitwise unchanged; stepping without gradients throws") {
    Sgd sgd({&w, &b}, 0.9, 0.1);
    const Tensor before = w.value();
    w.mutable_grad() = Tensor({2}, 7.0);
    sgd.step(0.0);
    CHECK(max_abs_diff(w.value(), before) == 0.0);
    CHECK_THROWS_AS(sgd.step(0.1), std::logic_error);
  }
}

TEST_CASE("lr schedule") {
  TrainConfig cfg;
  CHECK(lr_at(59, 0, 10, cfg) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lr_at(60, 0, 10, cfg) == doctest::Approx(0.01).epsilon(1e-15));
  CHECK(lr_at(90, 0, 10, cfg) == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(lr_at(0, 0, 10, cfg) == 0.0);
  CHECK(lr_at(2, 5, 10, cfg) == doctest::Approx(0.1 * 25.0 / 50.0));
  CHECK(lr_at(5, 0, 10, cfg) == 0.1);
  double prev = lr_at(5, 0, 10, cfg);
  for (std::size_t e = 5; e < 120; ++e)
    for (std::size_t s = 0; s < 10; ++s) {
      const double lr = lr_at(e, s, 10, cfg);
      REQUIRE(lr <= prev);
      prev = lr;
    }
  // the ramp is strictly increasing
  prev = -1.0;
  for (std::size_t e = 0; e < 5; ++e)
    for (std::size_t s = 0; s < 10; ++s) {
      REQUIRE(lr_at(e, s, 10, cfg) > prev);
      prev = lr_at(e, s, 10, cfg);
    }
}

TEST_CASE("train config: validation and key=value round trip") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  TrainConfig back;
  back.epochs = 3;
  back.milestones = {1};
  std::istringstream in(format_train_config(cfg));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    CHECK(set_train_key(back, line.substr(0, eq), line.substr(eq + 1)));
  }
  CHECK(back == cfg);
  CHECK_FALSE(set_train_key(back, "blocks", "standard"));
  CHECK_THROWS(set_train_key(back, "epochs", "many"));

  TrainConfig bad;
  bad.milestones = {90, 60};
  CHECK_THROWS(bad.validate());
  bad = TrainConfig{};
  bad.milestones = {60, 120};
  CHECK_THROWS(bad.validate());
  bad = TrainConfig{};
  bad.momentum = -0.1;
  CHECK_THROWS(bad.validate());
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS(bad.validate());
}

TEST_CASE("fusion: examples and the weighted-sum oracle") {
  std::mt19937_64 rng(52);
  const std::vector<std::pair<std::string, std::size_t>> ids{{"a", 0}, {"b", 1}, {"c", 2}, {"d", 1}, {"e", 3}};
  const ScoreTable t1 = table(4, ids, rng), t2 = table(4, ids, rng), t3 = table(4, ids, rng);

  const FusedScores single = fuse_scores({t1});
  for (std::size_t i = 0; i < ids.size(); ++i) CHECK(single.predictions[i] == argmax(t1.rows[i].scores));
  CHECK(fuse_scores({t1, t1}).predictions == single.predictions);

  // a disagreement the weights must settle
  ScoreTable x = t1, y = t1;
  x.rows[0].scores = {0.6, 0.4, 0.0, 0.0};
  y.rows[0].scores = {0.1, 0.9, 0.0, 0.0};
  CHECK(fuse_scores({x, y}).predictions[0] == 1);
  CHECK(fuse_scores({x, y}, {5.0, 1.0}).predictions[0] == 0);

  const std::vector<double> w{0.5, 2.0, 1.25};
  ScoreTable shuffled = t2;
  std::swap(shuffled.rows[0], shuffled.rows[3]);
  const FusedScores f = fuse_scores({t1, shuffled, t3}, w);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<double> sum(4);
    for (std::size_t k = 0; k < 4; ++k)
      sum[k] = w[0] * t1.rows[i].scores[k] + w[1] * t2.rows[i].scores[k] + w[2] * t3.rows[i].scores[k];
    CHECK(f.rows[i].sample_id == ids[i].first);
    for (std::size_t k = 0; k < 4; ++k) CHECK(f.rows[i].scores[k] == doctest::Approx(sum[k]).epsilon(1e-14));
    CHECK(f.predictions[i] == argmax(sum));
    correct += argmax(sum) == ids[i].second;
  }
  CHECK(f.top1 == doctest::Approx(double(correct) / 5.0));
  CHECK(fuse_scores({t1, t2, t3}, {5.0, 20.0, 12.5}).predictions == f.predictions);

  // logit space sums weighted log-probabilities
  const FusedScores fl = fuse_scores({t1, t2}, {1.0, 2.0}, FuseSpace::logit);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::vector<double> sum(4);
    for (std::size_t k = 0; k < 4; ++k) sum[k] = std::log(t1.rows[i].scores[k]) + 2.0 * std::log(t2.rows[i].scores[k]);
    CHECK(fl.predictions[i] == argmax(sum));
  }

  ScoreTable renamed = t2;
  renamed.rows[4].sample_id = "z";
  CHECK_THROWS(fuse_scores({t1, renamed}));
  ScoreTable relabelled = t2;
  relabelled.rows[4].label = 0;
  CHECK_THROWS(fuse_scores({t1, relabelled}));
  ScoreTable shorter = t2;
  shorter.rows.pop_back();
  CHECK_THROWS(fuse_scores({t1, shorter}));
  CHECK_THROWS(fuse_scores({t1, t2}, {1.0}));
  CHECK_THROWS(fuse_scores({t1, t2}, {1.0, -1.0}));
  CHECK_THROWS(fuse_scores({}));
}

TEST_CASE("score tables round trip through CSV") {
  std::mt19937_64 rng(53);
  const ScoreTable t = table(5, {{"s1", 0}, {"s2", 4}, {"s3", 2}}, rng);
  TempDir dir("hfgcn_scores_test");
  write_score_table(dir.path / "s.csv", t);
  std::ifstream in(dir.path / "s.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "sample_id,label,score_0,score_1,score_2,score_3,score_4");
  const ScoreTable back = read_score_table(dir.path / "s.csv");
  REQUIRE(back.rows.size() == 3);
  CHECK(back.num_classes == 5);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.rows[i].sample_id == t.rows[i].sample_id);
    CHECK(back.rows[i].label == t.rows[i].label);
    CHECK(back.rows[i].scores == t.rows[i].scores);
  }
  { std::ofstream(dir.path / "bad.csv") << "sample_id,label,score_0\nx,0\n"; }
  CHECK_THROWS(read_score_table(dir.path / "bad.csv"));
  CHECK_THROWS(read_score_table(dir.path / "missing.csv"));
}

TEST_CASE("synthetic data: determinism, seeds, ids and separability") {
  SynthConfig sc;
  const auto a = synth_dataset(sc), b = synth_dataset(sc);
  CHECK(a == b);
  REQUIRE(a.size() == 64);
  CHECK(a[9].sample_id == "synth_c001_n001");
  CHECK(a[9].label == 1);
  CHECK(a[9].frames == 32);
  // noise 0: every sample of a class is the class template
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t n = 1; n < 8; ++n) CHECK(a[c * 8 + n].coords == a[c * 8].coords);

  SynthConfig other = sc;
  other.seed = 8;
  CHECK(synth_dataset(other)[0].coords != a[0].coords);
  SynthConfig noisy = sc;
  noisy.noise = 0.5;
  const auto n1 = synth_dataset(noisy), n2 = synth_dataset(noisy);
  CHECK(n1 == n2);
  CHECK(n1[0].coords != n1[1].coords);
  for (const auto& s : n1) CHECK_NOTHROW(s.validate());

  // nearest centroid on the joint stream, centroids from the odd samples
  const Dataset d = make_dataset(a, Modality::joint, 32, 1, layout_info(SkeletonLayout::ntu25));
  std::vector<Tensor> centroid(8, Tensor(d.samples[0].x.shape()));
  for (const auto& s : d.samples)
    if (s.id.back() % 2 == 1) {
      for (std::size_t i = 0; i < s.x.size(); ++i) centroid[s.label][i] += s.x[i] / 4.0;
    }
  std::size_t correct = 0;
  for (const auto& s : d.samples) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < 8; ++c) {
      double dist = 0.0;
      for (std::size_t i = 0; i < s.x.size(); ++i) dist += (s.x[i] - centroid[c][i]) * (s.x[i] - centroid[c][i]);
      if (dist < best_d) best_d = dist, best = c;
    }
    correct += best == s.label;
  }
  CHECK(correct == d.size());

  SynthConfig bad = sc;
  bad.classes = 1;
  CHECK_THROWS(synth_dataset(bad));
  bad = sc;
  bad.noise = -1.0;
  CHECK_THROWS(synth_dataset(bad));
}

TEST_CASE("evaluate: tiny datasets, thread invariance and errors") {
  Model model(small_config(), 2);
  Dataset one = small_dataset();
  one.samples.resize(1);
  const EvalResult r = evaluate(model, one);
  CHECK((r.metrics.top1 == 0.0 || r.metrics.top1 == 1.0));
  REQUIRE(r.scores.rows.size() == 1);
  double s = 0.0;
  for (double p : r.scores.rows[0].scores) s += p;
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  const Dataset d = small_dataset(3, 3);
  const EvalResult r1 = evaluate(model, d, 2, 1), r3 = evaluate(model, d, 2, 3);
  CHECK(r1.metrics.top1 == r3.metrics.top1);
  CHECK(r1.metrics.loss == r3.metrics.loss);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(r1.scores.rows[i].scores == r3.scores.rows[i].scores);
  CHECK(r1.metrics.per_class.size() == 3);
  CHECK(evaluate(model, d).scores.rows[0].scores == r1.scores.rows[0].scores);

  CHECK_THROWS(evaluate(model, Dataset{}));
  Dataset wrong = one;
  wrong.samples[0].label = 3;
  CHECK_THROWS(evaluate(model, wrong));
}

TEST_CASE("training is bit-reproducible and a resumed run continues the same trajectory") {
  const Dataset d = small_dataset();
  const TrainConfig tc = small_train(3);

  std::vector<double> losses_a;
  Model a(small_config(), 4);
  Trainer ta(a, tc);
  for (const auto& rec : ta.fit(d)) losses_a.push_back(rec.train_loss);
  CHECK(losses_a.size() == 3);

  Model b(small_config(), 4);
  Trainer tb(b, tc);
  std::vector<double> losses_b;
  for (const auto& rec : tb.fit(d)) losses_b.push_back(rec.train_loss);
  CHECK(losses_a == losses_b);

  // stop after one epoch, save, reload into fresh objects, continue
  TempDir dir("hfgcn_resume_test");
  Model c(small_config(), 4);
  Trainer tc1(c, tc);
  const EpochRecord first = tc1.run_epoch(d);
  CHECK(first.train_loss == losses_a[0]);
  save_checkpoint(dir.path / "ckpt.hfgw", capture_checkpoint(c, &tc1));

  const Checkpoint ck = load_checkpoint(dir.path / "ckpt.hfgw");
  CHECK(ck.epoch == 1);
  Model resumed(checkpoint_model_config(ck), 99);
  apply_checkpoint(resumed, ck);
  Trainer tr(resumed, tc);
  restore_trainer(tr, ck);
  CHECK(tr.epoch() == 1);
  std::vector<double> rest;
  for (const auto& rec : tr.fit(d)) rest.push_back(rec.train_loss);
  REQUIRE(rest.size() == 2);
  CHECK(rest[0] == losses_a[1]);
  CHECK(rest[1] == losses_a[2]);

  Tape t1(Tape::Mode::inference), t2(Tape::Mode::inference);
  const Tensor x = batch_inputs(d, {0, 1, 2});
  CHECK(max_abs_diff(a.forward(t1, t1.constant(x), false).value(), resumed.forward(t2, t2.constant(x), false).value()) ==
        0.0);
}

TEST_CASE("trainer: stop criterion, lr in records and json lines") {
  const Dataset d = small_dataset(2, 2, 0.0);
  TrainConfig tc = small_train(40);
  tc.stop_at_train_top1 = 0.99;
  Model m(small_config(2), 6);
  Trainer t(m, tc);
  const auto recs = t.fit(d);
  REQUIRE_FALSE(recs.empty());
  CHECK(recs.size() < 40);
  CHECK(recs.back().train_top1 >= 0.99);
  CHECK(recs[0].lr == 0.0);  // warmup starts at zero
  CHECK(recs[1].lr == tc.base_lr);

  const auto j = nlohmann::json::parse(epoch_record_json(recs.back()));
  CHECK(j.at("epoch").get<std::size_t>() == recs.back().epoch);
  CHECK(j.at("train_loss").get<double>() == recs.back().train_loss);
  CHECK(epoch_record_json(recs.back()).find('\n') == std::string::npos);
}

TEST_CASE("checkpoint: round trip, corruption and mismatches") {
  TempDir dir("hfgcn_ckpt_test");
  Model m(small_config(), 7);
  const Checkpoint ck = capture_checkpoint(m);
  save_checkpoint(dir.path / "m.hfgw", ck);
  CHECK_FALSE(std::filesystem::exists(dir.path / "m.hfgw.tmp"));
  const Checkpoint back = load_checkpoint(dir.path / "m.hfgw");
  CHECK(back.model_config == ck.model_config);
  CHECK(back.params.size() == ck.params.size());
  for (const auto& [name, t] : ck.params) CHECK(max_abs_diff(back.params.at(name), t) == 0.0);
  CHECK(checkpoint_model_config(back) == m.config());

  std::string bytes;
  {
    std::ifstream in(dir.path / "m.hfgw", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  CHECK(bytes.substr(0, 5) == "HFGW1");
  std::string flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x01;
  { std::ofstream(dir.path / "bad.hfgw", std::ios::binary) << flipped; }
  CHECK_THROWS_AS(load_checkpoint(dir.path / "bad.hfgw"), CheckpointError);
  { std::ofstream(dir.path / "short.hfgw", std::ios::binary) << bytes.substr(0, 40); }
  CHECK_THROWS_AS(load_checkpoint(dir.path / "short.hfgw"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir.path / "none.hfgw"), CheckpointError);

  ModelConfig other = small_config(4);
  Model wrong(other, 1);
  CHECK_THROWS(apply_checkpoint(wrong, back));
}
