// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "phredgan/gradcheck.hpp"
#include "phredgan/layers.hpp"

using namespace phredgan;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

void zero_all(GruStack& s) {
  for (auto& l : s.layers)
    for (Tensor* t : {&l.wr, &l.ur, &l.br, &l.wz, &l.uz, &l.bz, &l.wh, &l.uh, &l.bh})
      for (double& v : t->mutable_values()) v = 0.0;
}

std::vector<Tensor> collect_params(const GruStack& s) {
  std::vector<Tensor> out;
  for (const auto& l : s.layers)
    for (const Tensor* t : {&l.wr, &l.ur, &l.br, &l.wz, &l.uz, &l.bz, &l.wh, &l.uh, &l.bh})
      out.push_back(*t);
  return out;
}

GruStack with_params(const GruStack& proto, const std::vector<Tensor>& p) {
  GruStack s = proto;
  std::size_t i = 0;
  for (auto& l : s.layers)
    for (Tensor* t : {&l.wr, &l.ur, &l.br, &l.wz, &l.uz, &l.bz, &l.wh, &l.uh, &l.bh})
      *t = p[i++];
  return s;
}

}  // namespace

TEST_CASE("gru_step fixed points under zero parameters") {
  Rng rng(1);
  GruStack stack(3, 4, 2, rng);
  zero_all(stack);
  Tape tape;

  SUBCASE("zero state and zero input stay zero") {
    Tensor next = stack.step(tape, stack.zero_state(), Tensor::zeros({3}));
    CHECK(next.shape() == std::vector<int>{2, 4});
    for (int i = 0; i < next.size(); ++i) CHECK(next.at(i) == 0.0);
  }
  SUBCASE("state halves in every layer: z=0.5, candidate=0") {
    Tensor state = Tensor::from({2, 4}, {1, 2, 3, 4, -4, -3, -2, -1});
    Tensor next = stack.step(tape, state, Tensor::zeros({3}));
    for (int i = 0; i < 8; ++i) CHECK(next.at(i) == doctest::Approx(state.at(i) / 2.0).epsilon(1e-15));
  }
}

TEST_CASE("gru_step shape errors") {
  Rng rng(2);
  GruStack stack(3, 4, 2, rng);
  Tape tape;
  CHECK_THROWS_AS(stack.step(tape, stack.zero_state(), Tensor::zeros({5})), std::invalid_argument);
  CHECK_THROWS_AS(stack.step(tape, Tensor::zeros({1, 4}), Tensor::zeros({3})), std::invalid_argument);
}

TEST_CASE("gru_step gradient vs finite differences") {
  Rng rng(3);
  GruStack proto(3, 4, 2, rng);
  std::vector<Tensor> params = collect_params(proto);
  Tensor state = random_tensor({2, 4}, rng);
  std::vector<Tensor> inputs = {random_tensor({3}, rng), random_tensor({3}, rng)};
  auto fn = [&](Tape& t, const std::vector<Tensor>& p) {
    GruStack s = with_params(proto, p);
    Tensor st = state;
    for (const Tensor& x : inputs) st = s.step(t, st, x);
    return sum(t, st);
  };
  auto rep = finite_difference_check(fn, params);
  CHECK_MESSAGE(rep.max_rel_err < 1e-4, "rel err " << rep.max_rel_err);
}

TEST_CASE("bidirectional_encode") {
  Rng rng(4);
  SUBCASE("length-1 sequence gives one output of width 2h") {
    GruStack f(3, 4, 2, rng), b(3, 4, 2, rng);
    Tape tape;
    auto res = bidirectional_encode(tape, f, b, {random_tensor({3}, rng)});
    REQUIRE(res.outputs.size() == 1);
    CHECK(res.outputs[0].shape() == std::vector<int>{8});
    CHECK(res.summary.shape() == std::vector<int>{8});
  }
  SUBCASE("empty sequence is an error") {
    GruStack f(3, 4, 2, rng), b(3, 4, 2, rng);
    Tape tape;
    CHECK_THROWS_AS(bidirectional_encode(tape, f, b, {}), std::invalid_argument);
  }
  SUBCASE("palindrome with tied directions: reversal with swapped halves") {
    GruStack f(3, 4, 2, rng);
    GruStack b = f;  // shared parameters
    Tensor x1 = random_tensor({3}, rng);
    Tensor x2 = random_tensor({3}, rng);
    Tape tape;
    auto res = bidirectional_encode(tape, f, b, {x1, x2, x1});
    const int h = 4;
    for (std::size_t t = 0; t < 3; ++t) {
      const Tensor& o = res.outputs[t];
      const Tensor& rev = res.outputs[2 - t];
      for (int i = 0; i < h; ++i) {
        CHECK(o.at(i) == rev.at(h + i));
        CHECK(o.at(h + i) == rev.at(i));
      }
    }
  }
  SUBCASE("gradient through both directions") {
    GruStack fproto(2, 3, 2, rng), bproto(2, 3, 2, rng);
    std::vector<Tensor> params = collect_params(fproto);
    for (const Tensor& t : collect_params(bproto)) params.push_back(t);
    std::vector<Tensor> inputs = {random_tensor({2}, rng), random_tensor({2}, rng),
                                  random_tensor({2}, rng)};
    std::size_t nf = collect_params(fproto).size();
    auto fn = [&](Tape& t, const std::vector<Tensor>& p) {
      GruStack f = with_params(fproto, {p.begin(), p.begin() + nf});
      GruStack b = with_params(bproto, {p.begin() + nf, p.end()});
      auto res = bidirectional_encode(t, f, b, inputs);
      Tensor acc = res.summary;
      for (const Tensor& o : res.outputs) acc = add(t, acc, o);
      return sum(t, tanh_op(t, acc));
    };
    auto rep = finite_difference_check(fn, params);
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, "rel err " << rep.max_rel_err);
  }
}

TEST_CASE("additive attention") {
  Rng rng(5);
  AdditiveAttention att(4, 6, 5, rng);
  SUBCASE("single key takes all the weight") {
    Tape tape;
    Tensor key = random_tensor({1, 6}, rng);
    auto res = att(tape, random_tensor({4}, rng), key);
    CHECK(res.weights.at(0) == doctest::Approx(1.0).epsilon(1e-15));
    for (int i = 0; i < 6; ++i) CHECK(res.context.at(i) == doctest::Approx(key.at(i)).epsilon(1e-12));
  }
  SUBCASE("identical keys get uniform weights") {
    Tape tape;
    Tensor one = random_tensor({6}, rng);
    std::vector<double> rowdata;
    for (int t = 0; t < 5; ++t)
      rowdata.insert(rowdata.end(), one.values().begin(), one.values().end());
    auto res = att(tape, random_tensor({4}, rng), Tensor::from({5, 6}, rowdata));
    for (int t = 0; t < 5; ++t) CHECK(res.weights.at(t) == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("weights are a softmax: nonnegative, sum 1") {
    Tape tape;
    auto res = att(tape, random_tensor({4}, rng), random_tensor({7, 6}, rng));
    double s = 0.0;
    for (int t = 0; t < 7; ++t) {
      CHECK(res.weights.at(t) >= 0.0);
      s += res.weights.at(t);
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
  SUBCASE("empty keys rejected") {
    Tape tape;
    CHECK_THROWS_AS(att(tape, random_tensor({4}, rng), random_tensor({6}, rng)),
                    std::invalid_argument);
  }
  SUBCASE("gradient through scores and context") {
    Tensor query = random_tensor({4}, rng);
    Tensor keys = random_tensor({3, 6}, rng);
    std::vector<Tensor> params = {att.wq, att.wk, att.b, att.v, query, keys};
    auto fn = [&](Tape& t, const std::vector<Tensor>& p) {
      AdditiveAttention a;
      a.wq = p[0];
      a.wk = p[1];
      a.b = p[2];
      a.v = p[3];
      auto res = a(t, p[4], p[5]);
      return add(t, sum(t, tanh_op(t, res.context)), sum(t, mul(t, res.weights, res.weights)));
    };
    auto rep = finite_difference_check(fn, params);
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, "rel err " << rep.max_rel_err);
  }
}

TEST_CASE("mle_token_loss") {
  Rng rng(6);
  SUBCASE("uniform logits over V=4 cost ln 4") {
    Tape tape;
    Tensor loss = mle_token_loss(tape, Tensor::zeros({4}), 2, SoftmaxMode::kFull, 0, rng);
    CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("saturated target logit costs ~0") {
    Tape tape;
    Tensor logits = Tensor::zeros({5});
    logits.mutable_values()[3] = 1e6;
    Tensor loss = mle_token_loss(tape, logits, 3, SoftmaxMode::kFull, 0, rng);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("exhaustive sampling equals the full loss") {
    const int vocab = 9;
    Tensor logits = random_tensor({vocab}, rng, -2, 2);
    for (int target : {0, 4, 8}) {
      Tape tape;
      Tensor full = mle_token_loss(tape, logits, target, SoftmaxMode::kFull, 0, rng);
      Tensor sampled = mle_token_loss(tape, logits, target, SoftmaxMode::kSampled, vocab - 1, rng);
      CHECK(std::abs(full.item() - sampled.item()) < 1e-10);
    }
  }
  SUBCASE("sampled estimate is unbiased-ish near the full loss on average") {
    const int vocab = 40;
    Tensor logits = random_tensor({vocab}, rng, -1, 1);
    Tape tape;
    double full = mle_token_loss(tape, logits, 7, SoftmaxMode::kFull, 0, rng).item();
    double acc = 0.0;
    const int trials = 300;
    for (int i = 0; i < trials; ++i) {
      Tape t2;
      acc += mle_token_loss(t2, logits, 7, SoftmaxMode::kSampled, 20, rng).item();
    }
    // the subset estimate is biased low; it must sit below the full loss
    // but within a nat at this size
    double avg = acc / trials;
    CHECK(avg <= full + 1e-9);
    CHECK(avg > full - 1.0);
  }
  SUBCASE("target out of range") {
    Tape tape;
    CHECK_THROWS_AS(mle_token_loss(tape, Tensor::zeros({4}), 4, SoftmaxMode::kFull, 0, rng),
                    std::invalid_argument);
  }
  SUBCASE("gradient of the full head") {
    Tensor logits = random_tensor({6}, rng, -2, 2);
    auto fn = [](Tape& t, const std::vector<Tensor>& p) {
      Rng r(0);
      return mle_token_loss(t, p[0], 2, SoftmaxMode::kFull, 0, r);
    };
    auto rep = finite_difference_check(fn, {logits});
    CHECK_MESSAGE(rep.max_rel_err < 1e-4, "rel err " << rep.max_rel_err);
  }
}

TEST_CASE("xavier uniform bounds and variance") {
  Rng rng(7);
  const int fan_in = 40, fan_out = 60;
  Tensor t = Tensor::zeros({100, 100});  // 10^4 samples
  xavier_fill(t, fan_in, fan_out, rng);
  double bound = std::sqrt(6.0 / (fan_in + fan_out));
  double mn = 1e9, mx = -1e9, s = 0.0, s2 = 0.0;
  for (double v : t.values()) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    s += v;
    s2 += v * v;
  }
  const double n = 1e4;
  double var = s2 / n - (s / n) * (s / n);
  double expected = 2.0 / (fan_in + fan_out);
  CHECK(mn >= -bound);
  CHECK(mx <= bound);
  CHECK(var == doctest::Approx(expected).epsilon(0.10));
}
