#include <cmath>
#include <string>
#include <vector>

#include "doctest.h"
#include "ewmlab/backbone.hpp"
#include "ewmlab/errors.hpp"
#include "ewmlab/ops.hpp"
#include "helpers.hpp"

using namespace ewmlab;

namespace {

TokenSequence toy_sequence() {
  TemplateInputs in;
  in.video = {4, 5, 6};
  in.audio = {40, 41};
  in.subtitle = {70};
  in.question = {Vocabulary::kQuestion};
  in.answer = {84};
  return assemble_template(in, 96);
}

}  // namespace

TEST_CASE("template order and regions") {
  const auto seq = toy_sequence();
  CHECK(seq.size() == 10);
  CHECK(seq.ids[0] == Vocabulary::kBos);
  CHECK(seq.roles[1] == Role::System);
  CHECK(seq.region(Role::Video) == std::pair<std::size_t, std::size_t>{2, 5});
  CHECK(seq.region(Role::Audio) == std::pair<std::size_t, std::size_t>{5, 7});
  CHECK(seq.region(Role::Answer) == std::pair<std::size_t, std::size_t>{9, 10});
  CHECK_FALSE(seq.region(Role::Belief).has_value());
  CHECK_THROWS_AS(assemble_template({{1, 2, 3}}, 4), ContractError);
}

TEST_CASE("next-token targets shift left") {
  const std::vector<int> labels{kIgnoreIndex, 5, 6, kIgnoreIndex};
  CHECK(next_token_targets(labels) == std::vector<int>{5, 6, kIgnoreIndex, kIgnoreIndex});
}

TEST_CASE("zero-initialized adapters leave the backbone unchanged") {
  ThinkerConfig with;
  ThinkerConfig without = with;
  without.use_lora = false;
  ParameterStore a(9), b(9);
  const Thinker ta(a, with), tb(b, without);
  CHECK(ta.adapters().size() == 4 * with.layers);
  for (const auto& ad : ta.adapters()) CHECK(ad.b.shape() == Shape{with.d_model, with.lora_rank});
  const auto seq = toy_sequence();
  CHECK(test::bitwise_equal(ta.forward(seq).h, tb.forward(seq).h));

  // A non-zero B must move the output.
  ParameterStore c(9);
  const Thinker tc(c, with);
  c.entry(tc.prefix() + ".layer0.lora_q.B").tensor.mutable_data()[0] = 0.5;
  CHECK_FALSE(test::bitwise_equal(tc.forward(seq).h, tb.forward(seq).h));
}

TEST_CASE("the thinker is causal") {
  ParameterStore store(2);
  const Thinker t(store, ThinkerConfig{});
  auto seq = toy_sequence();
  const auto h1 = t.forward(seq).h;
  seq.ids[6] = 45;
  const auto h2 = t.forward(seq).h;
  for (std::size_t i = 0; i < 6 * 32; ++i) CHECK(h1[i] == h2[i]);
  bool changed = false;
  for (std::size_t i = 6 * 32; i < h1.size(); ++i) changed |= h1[i] != h2[i];
  CHECK(changed);
}

TEST_CASE("encode splits into layer ranges") {
  ParameterStore store(2);
  const Thinker t(store, ThinkerConfig{});
  const auto seq = toy_sequence();
  const auto x = t.add_positions(t.embed_tokens(seq.ids));
  const auto whole = t.encode(x);
  const auto staged = t.final_norm(t.encode_layers(t.encode_layers(x, {}, 0, 1), {}, 1, 2));
  CHECK(test::bitwise_equal(whole, staged));
  CHECK_THROWS(t.encode_layers(x, {}, 1, 3));
}

TEST_CASE("rank-one adapter by hand") {
  // x = [1,2], A = [[1,0]], B = [[0],[1]], alpha/r = 2: delta = [0, 2].
  LoraAdapter ad;
  ad.rank = 1;
  ad.alpha = 2.0;
  ad.a = Tensor({1, 2}, {1.0, 0.0});
  ad.b = Tensor({2, 1}, {0.0, 1.0});
  const Tensor x({1, 2}, {1.0, 2.0});
  const Tensor base({1, 2}, {0.5, -0.5});
  const auto out = apply_lora(base, x, ad);
  CHECK(out.at(0, 0) == 0.5);
  CHECK(out.at(0, 1) == 1.5);

  LoraAdapter wide;
  wide.rank = 16;
  wide.alpha = 32.0;
  CHECK(wide.scaling() == 2.0);
}

TEST_CASE("language-model loss reference values") {
  const std::vector<int> targets{1, 2, 3}, partial{1, kIgnoreIndex, 3};
  const Tensor uniform({3, 4}, std::vector<double>(12, 0.0));
  CHECK(cross_entropy(uniform, targets).loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-14));

  std::vector<double> sharp(12, -20.0);
  sharp[0 * 4 + 1] = sharp[1 * 4 + 2] = sharp[2 * 4 + 3] = 20.0;
  CHECK(cross_entropy(Tensor({3, 4}, sharp), targets).loss.item() < 1e-3);

  auto logits = test::randn(3, 4, 5, true);
  cross_entropy(logits, partial).loss.backward();
  for (std::size_t c = 0; c < 4; ++c) CHECK(logits.grad()[4 + c] == 0.0);
}

TEST_CASE("frozen base weights receive no gradient") {
  ParameterStore store(3);
  ThinkerConfig cfg;
  const Thinker t(store, cfg);
  for (auto& v : store.entry(t.prefix() + ".layer0.lora_v.B").tensor.mutable_data()) v = 0.1;
  const auto seq = toy_sequence();
  store.zero_grad();
  sum(t.forward(seq).h).backward();
  double adapter = 0;
  for (const auto& p : store.entries()) {
    if (p.name.find(".lora_") != std::string::npos) {
      for (double g : p.tensor.grad()) adapter += std::abs(g);
    } else if (p.tensor.requires_grad()) {
      FAIL("trainable base parameter " << p.name);
    }
  }
  CHECK(adapter > 0);
}
