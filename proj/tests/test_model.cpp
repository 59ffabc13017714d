// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "phredgan/gradcheck.hpp"
#include "phredgan/model.hpp"

using namespace phredgan;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 8;
  c.attr_count = 3;
  c.embed_size = 4;
  c.attr_embed_size = 3;
  c.hidden_size = 4;
  c.num_layers = 2;
  c.attn_size = 3;
  c.noise_dim = 4;
  c.max_response_len = 6;
  return c;
}

std::vector<double> run_generator(const PhredModel& model, const std::vector<Tensor>& noise,
                                  int responder) {
  Tape tape;
  auto enc = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 4, 2}, 0);
  Rng rng(0);
  auto gen = model.generator_forward(tape, enc, responder, std::vector<int>{5, 6, 2}, noise, rng,
                                     SoftmaxMode::kFull);
  std::vector<double> flat;
  for (const auto& p : gen.step_probs)
    flat.insert(flat.end(), p.values().begin(), p.values().end());
  return flat;
}

}  // namespace

TEST_CASE("sample_noise") {
  SUBCASE("alpha must be positive") {
    NoiseSpec bad{NoiseMode::kWord, 0.0, 4};
    Rng rng(1);
    CHECK_THROWS_AS(sample_noise(bad, 3, rng), std::invalid_argument);
  }
  SUBCASE("utterance mode replicates a single draw") {
    NoiseSpec spec{NoiseMode::kUtterance, 2.0, 5};
    Rng rng(2);
    auto draws = sample_noise(spec, 7, rng);
    REQUIRE(draws.size() == 7);
    for (int i = 1; i < 7; ++i)
      for (int j = 0; j < 5; ++j) CHECK(draws[i].at(j) == draws[0].at(j));
  }
  SUBCASE("word mode draws fresh noise per step") {
    NoiseSpec spec{NoiseMode::kWord, 2.0, 5};
    Rng rng(3);
    auto draws = sample_noise(spec, 3, rng);
    bool any_diff = false;
    for (int j = 0; j < 5; ++j) any_diff |= draws[0].at(j) != draws[2].at(j);
    CHECK(any_diff);
  }
  SUBCASE("empirical variance at alpha=5 lands in [4.8, 5.2]") {
    NoiseSpec spec{NoiseMode::kWord, 5.0, 10};
    Rng rng(4);
    auto draws = sample_noise(spec, 10000, rng);  // 1e5 coordinates
    double s = 0, s2 = 0;
    long long n = 0;
    for (const auto& d : draws)
      for (double v : d.values()) {
        s += v;
        s2 += v * v;
        ++n;
      }
    double var = s2 / n - (s / n) * (s / n);
    CHECK(var >= 4.8);
    CHECK(var <= 5.2);
  }
}

TEST_CASE("encode_turn") {
  PhredModel model(tiny_config(), 11);
  SUBCASE("state shapes follow the wiring") {
    Tape tape;
    auto enc = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 4, 5, 2}, 1);
    CHECK(enc.context_state.shape() == std::vector<int>{2, 4});
    CHECK(enc.context_output.shape() == std::vector<int>{4});
    CHECK(enc.attention_keys.shape() == std::vector<int>{4, 8});  // T x 2h
    CHECK(enc.final_state.shape() == std::vector<int>{12});       // 3h
  }
  SUBCASE("bad ids are rejected") {
    Tape tape;
    CHECK_THROWS_AS(model.encode_turn(tape, model.zero_context(), std::vector<int>{99}, 0),
                    std::invalid_argument);
    CHECK_THROWS_AS(model.encode_turn(tape, model.zero_context(), std::vector<int>{3}, 7),
                    std::invalid_argument);
    CHECK_THROWS_AS(model.encode_turn(tape, model.zero_context(), std::vector<int>{}, 0),
                    std::invalid_argument);
  }
  SUBCASE("different attributes move the context state") {
    Tape tape;
    auto a = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 4, 2}, 0);
    auto b = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 4, 2}, 1);
    bool differ = false;
    for (int i = 0; i < a.context_output.size(); ++i)
      differ |= a.context_output.at(i) != b.context_output.at(i);
    CHECK(differ);
  }
  SUBCASE("context carries across turns") {
    Tape tape;
    auto first = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 2}, 0);
    auto second = model.encode_turn(tape, first.context_state, std::vector<int>{4, 2}, 1);
    auto second_cold = model.encode_turn(tape, model.zero_context(), std::vector<int>{4, 2}, 1);
    bool differ = false;
    for (int i = 0; i < second.context_output.size(); ++i)
      differ |= second.context_output.at(i) != second_cold.context_output.at(i);
    CHECK(differ);
  }
}

TEST_CASE("generator_forward") {
  PhredModel model(tiny_config(), 12);
  NoiseSpec word_noise{NoiseMode::kWord, 1.0, 4};

  SUBCASE("fixed seed is bit-identical") {
    Rng r1(77), r2(77);
    auto n1 = sample_noise(word_noise, 3, r1);
    auto n2 = sample_noise(word_noise, 3, r2);
    CHECK(run_generator(model, n1, 1) == run_generator(model, n2, 1));
  }
  SUBCASE("vanishing noise matches the noise-ablated forward pass") {
    NoiseSpec faint{NoiseMode::kWord, 1e-18, 4};
    Rng rng(5);
    auto tiny = sample_noise(faint, 3, rng);
    std::vector<Tensor> zero(3, Tensor::zeros({4}));
    auto with_tiny = run_generator(model, tiny, 1);
    auto ablated = run_generator(model, zero, 1);
    REQUIRE(with_tiny.size() == ablated.size());
    for (std::size_t i = 0; i < ablated.size(); ++i)
      CHECK(std::abs(with_tiny[i] - ablated[i]) < 1e-9);
  }
  SUBCASE("per-step distributions sum to one") {
    Rng rng(6);
    auto noise = sample_noise(word_noise, 3, rng);
    Tape tape;
    auto enc = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 2}, 0);
    auto gen = model.generator_forward(tape, enc, 1, std::vector<int>{5, 6, 2}, noise, rng,
                                       SoftmaxMode::kFull);
    REQUIRE(gen.step_probs.size() == 3);
    for (const auto& p : gen.step_probs) {
      double s = 0;
      for (double v : p.values()) s += v;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
    REQUIRE(gen.step_losses.size() == 3);
    for (const auto& l : gen.step_losses) CHECK(l.item() > 0.0);
  }
  SUBCASE("unknown responder is rejected") {
    Rng rng(7);
    auto noise = sample_noise(word_noise, 2, rng);
    Tape tape;
    auto enc = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 2}, 0);
    CHECK_THROWS_AS(
        model.generator_forward(tape, enc, 9, std::vector<int>{5, 2}, noise, rng, SoftmaxMode::kFull),
        std::invalid_argument);
  }
  SUBCASE("the sampled head engages only for large vocabularies") {
    ModelConfig big = tiny_config();
    CHECK(PhredModel(big, 19).train_loss_mode() == SoftmaxMode::kFull);
    big.sampled_softmax_at = 4;  // force the sampled path at desk scale
    big.softmax_samples = 5;
    PhredModel m(big, 19);
    CHECK(m.train_loss_mode() == SoftmaxMode::kSampled);
    Rng rng(8);
    auto noise = sample_noise(word_noise, 2, rng);
    Tape tape;
    auto enc = m.encode_turn(tape, m.zero_context(), std::vector<int>{3, 2}, 0);
    auto gen = m.generator_forward(tape, enc, 1, std::vector<int>{5, 2}, noise, rng,
                                   m.train_loss_mode());
    for (const auto& l : gen.step_losses) CHECK(l.item() > 0.0);
  }
  SUBCASE("equal attribute rows make conditioning indistinguishable") {
    ModelConfig cfg = tiny_config();
    PhredModel m(cfg, 13);
    // copy attribute row 0 into row 1
    auto table = m.mutable_attribute_embedding().table.mutable_values();
    int ec = cfg.attr_embed_size;
    for (int j = 0; j < ec; ++j) table[1 * ec + j] = table[0 * ec + j];
    NoiseSpec spec{NoiseMode::kUtterance, 1.0, 4};
    Rng ra(9), rb(9);
    auto na = sample_noise(spec, 3, ra);
    auto nb = sample_noise(spec, 3, rb);
    CHECK(run_generator(m, na, 0) == run_generator(m, nb, 1));
  }
}

TEST_CASE("discriminator_score") {
  PhredModel model(tiny_config(), 14);
  Tape tape;
  auto enc = model.encode_turn(tape, model.zero_context(), std::vector<int>{3, 4, 2}, 0);

  SUBCASE("probabilities live in [0,1] and match response length") {
    Tensor probs = model.discriminator_score(tape, enc, 1, std::vector<int>{5, 6, 7, 2});
    REQUIRE(probs.shape() == std::vector<int>{4});
    for (int i = 0; i < 4; ++i) {
      CHECK(probs.at(i) >= 0.0);
      CHECK(probs.at(i) <= 1.0);
    }
  }
  SUBCASE("empty response rejected") {
    CHECK_THROWS_AS(model.discriminator_score(tape, enc, 1, std::vector<int>{}),
                    std::invalid_argument);
  }
  SUBCASE("responder attribute moves the scores") {
    Tensor a = model.discriminator_score(tape, enc, 0, std::vector<int>{5, 6, 2});
    Tensor b = model.discriminator_score(tape, enc, 1, std::vector<int>{5, 6, 2});
    bool differ = false;
    for (int i = 0; i < 3; ++i) differ |= a.at(i) != b.at(i);
    CHECK(differ);
  }
  SUBCASE("untrained scores hover in the middle") {
    Rng rng(15);
    double total = 0;
    long long words = 0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<int> response;
      int len = 2 + rng.uniform_int(5);
      for (int i = 0; i < len; ++i) response.push_back(3 + rng.uniform_int(5));
      response.push_back(Vocab::kEos);
      Tape t2;
      auto e2 = model.encode_turn(t2, model.zero_context(), std::vector<int>{3, 4, 2}, 0);
      Tensor probs = model.discriminator_score(t2, e2, 1, response);
      for (double v : probs.values()) {
        total += v;
        ++words;
      }
    }
    double mean = total / words;
    CHECK(mean > 0.2);
    CHECK(mean < 0.8);
  }
}

TEST_CASE("parameter registry holds exactly one copy of everything") {
  PhredModel model(tiny_config(), 16);
  auto entries = model.params();
  std::set<std::string> names;
  std::set<const double*> buffers;
  for (const auto& e : entries) {
    CHECK(names.insert(e.name).second);
    CHECK(buffers.insert(e.tensor.values().data()).second);
  }
  int shared = 0, gen = 0, disc = 0;
  for (const auto& e : entries) {
    if (e.group == ParamGroup::kShared) ++shared;
    if (e.group == ParamGroup::kGenerator) ++gen;
    if (e.group == ParamGroup::kDiscriminator) ++disc;
  }
  CHECK(shared > 0);
  CHECK(gen > 0);
  CHECK(disc > 0);
  CHECK(model.side_params(ParamGroup::kGenerator).size() == static_cast<std::size_t>(shared + gen));

  // the shared word table is the very tensor both sides read
  bool found = false;
  for (const auto& e : entries)
    if (e.name == "embed.word") {
      found = true;
      CHECK(e.tensor.values().data() == model.word_embedding().table.values().data());
    }
  CHECK(found);
}

TEST_CASE("end-to-end MLE gradient through encoder and generator") {
  ModelConfig cfg = tiny_config();
  PhredModel proto(cfg, 17);
  auto proto_entries = proto.side_params(ParamGroup::kGenerator);
  std::vector<Tensor> params;
  for (const auto& e : proto_entries) params.push_back(e.tensor);

  NoiseSpec spec{NoiseMode::kUtterance, 1.0, 4};
  Rng nrng(21);
  auto noise = sample_noise(spec, 3, nrng);
  // 2-turn dialogue, 3-token utterances, vocabulary of 8
  std::vector<int> turn0 = {3, 4, 2};
  std::vector<int> target = {5, 6, 2};

  auto fn = [&](Tape& tape, const std::vector<Tensor>& p) {
    PhredModel m(cfg, 0);
    // generator-side leaves plus the frozen discriminator tensors
    std::vector<Tensor> all;
    std::size_t gi = 0;
    for (const auto& e : m.params()) {
      if (e.group == ParamGroup::kDiscriminator)
        all.push_back(e.tensor);
      else
        all.push_back(p[gi++]);
    }
    m.adopt_params(all);
    auto enc = m.encode_turn(tape, m.zero_context(), turn0, 0);
    Rng rng(0);
    auto gen = m.generator_forward(tape, enc, 1, target, noise, rng, SoftmaxMode::kFull);
    Tensor acc = gen.step_losses[0];
    for (std::size_t j = 1; j < gen.step_losses.size(); ++j) acc = add(tape, acc, gen.step_losses[j]);
    return affine(tape, acc, 1.0 / static_cast<double>(gen.step_losses.size()), 0.0);
  };
  auto rep = finite_difference_check(fn, params);
  CHECK_MESSAGE(rep.max_rel_err < 1e-4, "rel err " << rep.max_rel_err);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  fs::path dir = fs::temp_directory_path() / "phredgan_test_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);

  ModelConfig cfg = tiny_config();
  cfg.noise_mode = NoiseMode::kWord;
  PhredModel model(cfg, 18);
  CheckpointMeta meta;
  meta.vocab_hash = 0x1234567890abcdefULL;
  meta.attr_hash = 42;
  meta.epoch = 7;
  meta.global_step = 1234;
  meta.train_alpha = 2.5;

  std::string p1 = (dir / "a.pgck").string();
  save_checkpoint(model, meta, p1);
  auto loaded = load_checkpoint(p1);
  CHECK(loaded.meta.vocab_hash == meta.vocab_hash);
  CHECK(loaded.meta.attr_hash == meta.attr_hash);
  CHECK(loaded.meta.epoch == 7);
  CHECK(loaded.meta.global_step == 1234);
  CHECK(loaded.meta.train_alpha == 2.5);
  CHECK(loaded.model.config().noise_mode == NoiseMode::kWord);

  auto orig = model.params();
  auto back = loaded.model.params();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    auto a = orig[i].tensor.values();
    auto b = back[i].tensor.values();
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
  }

  // a second save of the loaded model is byte-identical
  std::string p2 = (dir / "b.pgck").string();
  save_checkpoint(loaded.model, meta, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());

  SUBCASE("corrupt magic is rejected") {
    std::string p3 = (dir / "c.pgck").string();
    std::ofstream f(p3, std::ios::binary);
    f << "NOPE and then some";
    f.close();
    CHECK_THROWS_AS(load_checkpoint(p3), std::runtime_error);
  }
}
