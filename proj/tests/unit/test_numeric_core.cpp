#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "doctest.h"
#include "hfgcn/gradcheck.hpp"
#include "hfgcn/ops.hpp"
#include "oracles.hpp"

using namespace hfgcn;

namespace {

constexpr double kOracleTol = 1e-9;
constexpr int kRandomShapes = 100;

Shape random_bctv(std::mt19937_64& rng) {
  return {oracle::pick(rng, 1, 2), oracle::pick(rng, 1, 8), oracle::pick(rng, 1, 8), oracle::pick(rng, 1, 25)};
}

Var value_of(Tape& tape, const Tensor& t) { return tape.constant(t); }

}  // namespace

TEST_CASE("tape: linear loss gradient equals the fixed input") {
  std::mt19937_64 rng(1);
  Parameter w("w", oracle::random_tensor({3, 4}, rng));
  const Tensor x = oracle::random_tensor({2, 4, 1, 1}, rng);
  Tape tape;
  const Var y = ops::sum_all(tape, ops::conv1x1(tape, tape.constant(x), w.var()));
  tape.backward(y);
  for (std::size_t o = 0; o < 3; ++o)
    for (std::size_t c = 0; c < 4; ++c) CHECK(w.grad().at({o, c}) == doctest::Approx(x.at({0, c, 0, 0}) + x.at({1, c, 0, 0})));
}

TEST_CASE("tape: tanh'(0) = 1") {
  Parameter w("w", Tensor({1}, 0.0));
  Tape tape;
  tape.backward(ops::sum_all(tape, ops::tanh(tape, w.var())));
  CHECK(w.grad()[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("tape: adjoints replay in reverse order and a second backward throws") {
  Parameter w("w", Tensor({1}, 2.0));
  Tape tape;
  std::vector<int> order;
  const Var a = ops::scale(tape, w.var(), 3.0);
  tape.record([&] { order.push_back(1); });
  const Var b = ops::scale(tape, a, 2.0);
  tape.record([&] { order.push_back(2); });
  const Var loss = ops::sum_all(tape, b);
  const std::size_t recorded = tape.size();
  CHECK(recorded == 5);
  tape.backward(loss);
  CHECK(order == std::vector<int>{2, 1});
  CHECK(tape.size() == 0);
  CHECK(w.grad()[0] == doctest::Approx(6.0));
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
}

TEST_CASE("tape: inference mode records nothing") {
  Parameter w("w", Tensor({2}, 1.0));
  Tape tape(Tape::Mode::inference);
  const Var y = ops::sum_all(tape, ops::relu(tape, w.var()));
  CHECK(tape.size() == 0);
  CHECK_FALSE(y.requires_grad());
  CHECK_THROWS_AS(tape.backward(y), std::logic_error);
}

TEST_CASE("conv1x1: identity, bias-only and oracle agreement") {
  std::mt19937_64 rng(11);
  const Tensor x = oracle::random_tensor({2, 3, 4, 5}, rng);
  Tensor eye({3, 3});
  for (std::size_t i = 0; i < 3; ++i) eye.at({i, i}) = 1.0;
  Tape tape(Tape::Mode::inference);
  CHECK(max_abs_diff(ops::conv1x1(tape, value_of(tape, x), value_of(tape, eye)).value(), x) == 0.0);

  const Tensor bias = oracle::random_tensor({4}, rng);
  const Tensor w = oracle::random_tensor({4, 3}, rng);
  const Tensor y = ops::conv1x1(tape, value_of(tape, Tensor({2, 3, 4, 5})), value_of(tape, w), value_of(tape, bias)).value();
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == bias[(i / 20) % 4]);

  for (int n = 0; n < kRandomShapes; ++n) {
    const Shape s = random_bctv(rng);
    const std::size_t o = oracle::pick(rng, 1, 8);
    const Tensor xi = oracle::random_tensor(s, rng), wi = oracle::random_tensor({o, s[1]}, rng),
                 bi = oracle::random_tensor({o}, rng);
    const Tensor got = ops::conv1x1(tape, value_of(tape, xi), value_of(tape, wi), value_of(tape, bi)).value();
    REQUIRE(max_abs_diff(got, oracle::conv1x1(xi, wi, &bi)) < kOracleTol);
  }
}

TEST_CASE("temporal_conv: identity, constant input, shape law and oracle agreement") {
  std::mt19937_64 rng(12);
  Tape tape(Tape::Mode::inference);
  const Tensor x = oracle::random_tensor({2, 3, 7, 4}, rng);
  Tensor eye({3, 3, 1});
  for (std::size_t i = 0; i < 3; ++i) eye.at({i, i, 0}) = 1.0;
  CHECK(max_abs_diff(ops::temporal_conv(tape, value_of(tape, x), value_of(tape, eye), {}, {1, 1}).value(), x) == 0.0);

  // constant in time, weights summing to one over k: output equals the
  // channel mix away from the zero-padded borders
  Tensor xc({1, 2, 9, 3});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t t = 0; t < 9; ++t)
      for (std::size_t v = 0; v < 3; ++v) xc.at({0, c, t, v}) = double(c + 1) * double(v + 1);
  Tensor w({2, 2, 5}, 0.1);
  const Tensor yc = ops::temporal_conv(tape, value_of(tape, xc), value_of(tape, w), {}, {1, 1}).value();
  for (std::size_t t = 2; t < 7; ++t)
    for (std::size_t v = 0; v < 3; ++v) CHECK(yc.at({0, 0, t, v}) == doctest::Approx(0.5 * 3.0 * double(v + 1)));

  for (std::size_t T : {1, 2, 7, 8, 64})
    for (std::size_t s : {1, 2}) {
      const Tensor xt({1, 1, T, 1}, 1.0);
      CHECK(ops::temporal_conv(tape, value_of(tape, xt), value_of(tape, Tensor({1, 1, 5}, 1.0)), {}, {s, 2}).value().extent(2) ==
            (T + s - 1) / s);
    }

  CHECK_THROWS(ops::temporal_conv(tape, value_of(tape, x), value_of(tape, eye), {}, {0, 1}));
  CHECK_THROWS(ops::temporal_conv(tape, value_of(tape, x), value_of(tape, eye), {}, {1, 0}));

  for (int n = 0; n < kRandomShapes; ++n) {
    const Shape s = random_bctv(rng);
    const std::size_t o = oracle::pick(rng, 1, 8), k = 2 * oracle::pick(rng, 0, 2) + 1;
    const std::size_t stride = oracle::pick(rng, 1, 2), dil = oracle::pick(rng, 1, 2);
    const Tensor xi = oracle::random_tensor(s, rng), wi = oracle::random_tensor({o, s[1], k}, rng),
                 bi = oracle::random_tensor({o}, rng);
    const Tensor got =
        ops::temporal_conv(tape, value_of(tape, xi), value_of(tape, wi), value_of(tape, bi), {stride, dil}).value();
    REQUIRE(max_abs_diff(got, oracle::temporal_conv(xi, wi, &bi, stride, dil)) < kOracleTol);
  }
}

TEST_CASE("max_pool_temporal matches its oracle") {
  std::mt19937_64 rng(13);
  Tape tape(Tape::Mode::inference);
  for (int n = 0; n < kRandomShapes; ++n) {
    const Shape s = random_bctv(rng);
    const std::size_t stride = oracle::pick(rng, 1, 2);
    const Tensor xi = oracle::random_tensor(s, rng);
    REQUIRE(max_abs_diff(ops::max_pool_temporal(tape, value_of(tape, xi), 3, stride).value(),
                         oracle::max_pool(xi, 3, stride)) < kOracleTol);
  }
}

TEST_CASE("batch_norm: normalised input, constant channel, running stats and oracle") {
  std::mt19937_64 rng(14);
  Tape tape(Tape::Mode::inference);
  const Tensor gamma({2}, 1.0), beta({2}, 0.0);

  Tensor z({2, 2, 2, 1});
  const double vals[8] = {1, -1, 1, -1, -1, 1, -1, 1};  // each channel: mean 0, biased var 1
  for (std::size_t i = 0; i < 8; ++i) z[i] = vals[i];
  ops::BatchNormState st(2);
  const Tensor zn = ops::batch_norm(tape, value_of(tape, z), value_of(tape, gamma), value_of(tape, beta), st, true).value();
  CHECK(max_abs_diff(zn, z) < 1e-5);

  Tensor c({3, 2, 4, 5}, 7.0);
  const Tensor b2 = oracle::random_tensor({2}, rng);
  ops::BatchNormState st2(2);
  const Tensor cn = ops::batch_norm(tape, value_of(tape, c), value_of(tape, gamma), value_of(tape, b2), st2, true).value();
  for (std::size_t i = 0; i < cn.size(); ++i) CHECK(cn[i] == doctest::Approx(b2[(i / 20) % 2]));
  CHECK(st2.running_mean[0] == doctest::Approx(0.7));
  CHECK(st2.running_var[0] == doctest::Approx(0.9));

  ops::BatchNormState fresh(2);
  CHECK_THROWS_AS(ops::batch_norm(tape, value_of(tape, c), value_of(tape, gamma), value_of(tape, beta), fresh, false),
                  std::logic_error);

  for (int n = 0; n < kRandomShapes; ++n) {
    Shape s = random_bctv(rng);
    if (s[0] * s[2] * s[3] < 2) s[2] = 2;
    const Tensor xi = oracle::random_tensor(s, rng), g = oracle::random_tensor({s[1]}, rng),
                 b = oracle::random_tensor({s[1]}, rng);
    ops::BatchNormState sti(s[1]);
    REQUIRE(max_abs_diff(ops::batch_norm(tape, value_of(tape, xi), value_of(tape, g), value_of(tape, b), sti, true).value(),
                         oracle::batch_norm(xi, g, b)) < kOracleTol);
  }
}

TEST_CASE("softmax, tanh, relu") {
  std::mt19937_64 rng(15);
  Tape tape(Tape::Mode::inference);
  const Tensor p = ops::softmax_lastdim(tape, tape.constant(Tensor({2}, std::vector<double>{0.0, std::log(3.0)}))).value();
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));
  const Tensor u = ops::softmax_lastdim(tape, tape.constant(Tensor({4}, 2.5))).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(0.25));
  CHECK(ops::tanh(tape, tape.constant(Tensor({1}, 0.0))).value()[0] == 0.0);
  CHECK(ops::relu(tape, tape.constant(Tensor({1}, -3.0))).value()[0] == 0.0);

  for (int n = 0; n < kRandomShapes; ++n) {
    const Shape s = random_bctv(rng);
    const Tensor xi = oracle::random_tensor(s, rng, -5.0, 5.0);
    const Tensor sm = ops::softmax_lastdim(tape, tape.constant(xi)).value();
    REQUIRE(max_abs_diff(sm, oracle::softmax_lastdim(xi)) < kOracleTol);
    REQUIRE(max_abs_diff(ops::tanh(tape, tape.constant(xi)).value(), oracle::tanh(xi)) < kOracleTol);
    REQUIRE(max_abs_diff(ops::relu(tape, tape.constant(xi)).value(), oracle::relu(xi)) < kOracleTol);
    // rows sum to one and a constant shift changes nothing
    const std::size_t v = s.back();
    for (std::size_t r = 0; r < sm.size() / v; ++r) {
      double sum = 0.0;
      for (std::size_t j = 0; j < v; ++j) sum += sm[r * v + j];
      REQUIRE(std::abs(sum - 1.0) < 1e-9);
    }
    Tensor shifted = xi;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += 3.7;
    REQUIRE(max_abs_diff(ops::softmax_lastdim(tape, tape.constant(shifted)).value(), sm) < 1e-12);
  }
}

TEST_CASE("contract: identity, hand case and oracle agreement on the model patterns") {
  std::mt19937_64 rng(16);
  Tape tape(Tape::Mode::inference);
  const Tensor x = oracle::random_tensor({2, 3, 4, 5}, rng);
  Tensor eye({5, 5});
  for (std::size_t i = 0; i < 5; ++i) eye.at({i, i}) = 1.0;
  CHECK(max_abs_diff(ops::contract(tape, "ij,bctj->bcti", tape.constant(eye), tape.constant(x)).value(), x) == 0.0);

  const Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor b({2, 2}, std::vector<double>{5, 6, 7, 8});
  const Tensor ab = ops::contract(tape, "ik,kj->ij", tape.constant(a), tape.constant(b)).value();
  CHECK(ab.values()[0] == 19.0);
  CHECK(ab.values()[1] == 22.0);
  CHECK(ab.values()[2] == 43.0);
  CHECK(ab.values()[3] == 50.0);

  CHECK_THROWS_AS(ops::contract(tape, "ij,jk->ik", tape.constant(a), tape.constant(Tensor({3, 2}))), ShapeError);
  CHECK_THROWS(ops::contract(tape, "ij,jk", tape.constant(a), tape.constant(b)));
  CHECK_THROWS(ops::contract(tape, "ii,jk->ik", tape.constant(a), tape.constant(b)));

  struct Pattern {
    const char* spec;
    int a_kind, b_kind;  // 0: (B,C,T,V) 1: (B,T,V,V) 2: (V,V) 3: (B,C,V,V) 4: (S,V,V)
  };
  const Pattern patterns[] = {
      {"bcti,bctj->btij", 0, 0}, {"btij,bctj->bcti", 1, 0}, {"boij,botj->boti", 3, 0},
      {"ij,botj->boti", 2, 0},   {"sij,bctj->sbcti", 4, 0}, {"bcti,btij->bctj", 0, 1},
  };
  for (int n = 0; n < kRandomShapes; ++n) {
    const Pattern& p = patterns[n % 6];
    const std::size_t B = oracle::pick(rng, 1, 2), C = oracle::pick(rng, 1, 8), T = oracle::pick(rng, 1, 8),
                      V = oracle::pick(rng, 1, 25), S = oracle::pick(rng, 1, 3);
    auto make = [&](int kind) -> Tensor {
      switch (kind) {
        case 0: return oracle::random_tensor({B, C, T, V}, rng);
        case 1: return oracle::random_tensor({B, T, V, V}, rng);
        case 2: return oracle::random_tensor({V, V}, rng);
        case 3: return oracle::random_tensor({B, C, V, V}, rng);
        default: return oracle::random_tensor({S, V, V}, rng);
      }
    };
    const Tensor ta = make(p.a_kind), tb = make(p.b_kind);
    REQUIRE(max_abs_diff(ops::contract(tape, p.spec, tape.constant(ta), tape.constant(tb)).value(),
                         oracle::contract(p.spec, ta, tb)) < kOracleTol);
  }
}

TEST_CASE("structural ops agree with their oracles") {
  std::mt19937_64 rng(17);
  Tape tape(Tape::Mode::inference);
  for (int n = 0; n < kRandomShapes; ++n) {
    const Shape s = random_bctv(rng);
    const Tensor x = oracle::random_tensor(s, rng), y = oracle::random_tensor(s, rng);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    std::shuffle(perm.begin(), perm.end(), rng);
    REQUIRE(max_abs_diff(ops::permute(tape, tape.constant(x), perm).value(), oracle::permute(x, perm)) < kOracleTol);
    std::vector<std::size_t> axes;
    for (std::size_t d = 0; d < 4; ++d)
      if (oracle::pick(rng, 0, 1)) axes.push_back(d);
    if (axes.empty() || axes.size() == 4) axes = {2};
    REQUIRE(max_abs_diff(ops::mean_axes(tape, tape.constant(x), axes).value(), oracle::mean_axes(x, axes)) < kOracleTol);
    const Tensor tail = oracle::random_tensor({s[2], s[3]}, rng);
    REQUIRE(max_abs_diff(ops::add(tape, tape.constant(x), tape.constant(tail)).value(), oracle::add(x, tail)) < kOracleTol);
    const Tensor cat = ops::concat(tape, {tape.constant(x), tape.constant(y)}, 1).value();
    REQUIRE(max_abs_diff(cat, oracle::concat_channels({x, y})) < kOracleTol);
    const Tensor st = ops::stack(tape, {tape.constant(x), tape.constant(y)}).value();
    REQUIRE(max_abs_diff(ops::select(tape, tape.constant(st), 1).value(), y) == 0.0);
    const Tensor a3 = oracle::random_tensor({s[0], s[1], s[3]}, rng), b3 = oracle::random_tensor({s[0], s[1], s[3]}, rng);
    REQUIRE(max_abs_diff(ops::pairwise_diff(tape, tape.constant(a3), tape.constant(b3)).value(),
                         oracle::pairwise_diff(a3, b3)) < kOracleTol);
  }
}

// ---------------------------------------------------------------------------

namespace {

struct OpCase {
  const char* name;
  std::function<Var(Tape&, const Var&, const Var&)> fn;
  Shape x_shape, w_shape;
};

}  // namespace

TEST_CASE("every differentiable op passes the finite-difference check") {
  std::mt19937_64 rng(21);
  const Shape s{2, 3, 5, 4};
  std::vector<OpCase> cases = {
      {"add", [](Tape& t, const Var& x, const Var& w) { return ops::add(t, x, w); }, s, {5, 4}},
      {"sub", [](Tape& t, const Var& x, const Var& w) { return ops::sub(t, x, w); }, s, s},
      {"scale_by", [](Tape& t, const Var& x, const Var& w) { return ops::scale_by(t, x, w); }, s, {1}},
      {"relu", [](Tape& t, const Var& x, const Var& w) { return ops::relu(t, ops::add(t, x, w)); }, s, s},
      {"tanh", [](Tape& t, const Var& x, const Var& w) { return ops::tanh(t, ops::add(t, x, w)); }, s, s},
      {"softmax", [](Tape& t, const Var& x, const Var& w) { return ops::softmax_lastdim(t, ops::add(t, x, w)); }, s, s},
      {"conv1x1", [](Tape& t, const Var& x, const Var& w) { return ops::conv1x1(t, x, w); }, s, {4, 3}},
      {"temporal_conv",
       [](Tape& t, const Var& x, const Var& w) { return ops::temporal_conv(t, x, w, {}, {2, 2}); }, s, {2, 3, 5}},
      {"max_pool", [](Tape& t, const Var& x, const Var& w) { return ops::max_pool_temporal(t, ops::add(t, x, w), 3, 2); },
       s, s},
      {"contract", [](Tape& t, const Var& x, const Var& w) { return ops::contract(t, "bcti,bctj->btij", x, w); }, s, s},
      {"pairwise_diff",
       [](Tape& t, const Var& x, const Var& w) {
         const Var m = ops::mean_axes(t, x, {2});
         return ops::pairwise_diff(t, m, w);
       },
       s, {2, 3, 4}},
      {"permute_reshape",
       [](Tape& t, const Var& x, const Var& w) {
         return ops::reshape(t, ops::permute(t, ops::add(t, x, w), {0, 3, 1, 2}), {2, 60});
       },
       s, s},
      {"concat_select",
       [](Tape& t, const Var& x, const Var& w) {
         return ops::select(t, ops::stack(t, {ops::concat(t, {x, w}, 1), ops::concat(t, {w, x}, 1)}), 1);
       },
       s, s},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    Parameter x("x", oracle::random_tensor(c.x_shape, rng));
    Parameter w("w", oracle::random_tensor(c.w_shape, rng));
    std::mt19937_64 prng(5);
    Tensor weights;
    auto loss = [&](Tape& t) {
      const Var out = c.fn(t, x.var(), w.var());
      if (weights.empty()) weights = oracle::random_tensor(out.shape(), prng);
      // weighted sum so that every output element matters differently
      Var flat = ops::reshape(t, out, {out.value().size()});
      return ops::sum_all(t, ops::contract(t, "i,i->i", flat, t.constant(weights.reshaped({out.value().size()}))));
    };
    const auto r = finite_diff_check(loss, {&x, &w}, {1e-5, 12, 3});
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("batch_norm gradients pass the finite-difference check") {
  std::mt19937_64 rng(22);
  Parameter x("x", oracle::random_tensor({2, 3, 4, 5}, rng));
  Parameter g("g", oracle::random_tensor({3}, rng, 0.5, 1.5));
  Parameter b("b", oracle::random_tensor({3}, rng));
  const Tensor weights = oracle::random_tensor({120}, rng);
  ops::BatchNormState st(3);
  auto loss = [&](Tape& t) {
    const Var y = ops::batch_norm(t, x.var(), g.var(), b.var(), st, true);
    return ops::sum_all(t, ops::contract(t, "i,i->i", ops::reshape(t, y, {120}), t.constant(weights)));
  };
  CHECK(finite_diff_check(loss, {&x, &g, &b}, {1e-5, 20, 4}).max_rel_error < 1e-6);
}

TEST_CASE("gradcheck: quadratic is exact and a corrupted adjoint is caught") {
  Parameter w("w", Tensor({3}, std::vector<double>{0.5, -1.0, 2.0}));
  auto quad = [&](Tape& t) {
    const Var sq = ops::contract(t, "i,i->i", w.var(), w.var());
    return ops::sum_all(t, sq);
  };
  CHECK(finite_diff_check(quad, {&w}).max_rel_error < 1e-10);

  std::mt19937_64 rng(23);
  Parameter cw("cw", oracle::random_tensor({3, 2}, rng));
  const Tensor x = oracle::random_tensor({2, 2, 3, 4}, rng);
  auto lin = [&](Tape& t) { return ops::sum_all(t, ops::tanh(t, ops::conv1x1(t, t.constant(x), cw.var()))); };
  CHECK(finite_diff_check(lin, {&cw}).max_rel_error < 1e-8);
  ops::set_adjoint_corruption(true);
  const double corrupted = finite_diff_check(lin, {&cw}).max_rel_error;
  ops::set_adjoint_corruption(false);
  CHECK(corrupted > 1e-2);

  Parameter z("z", Tensor({1}, 0.0));
  auto bad = [&](Tape& t) { return ops::sum_all(t, ops::scale(t, z.var(), std::numeric_limits<double>::infinity())); };
  CHECK_THROWS_AS(finite_diff_check(bad, {&z}), std::domain_error);
}
