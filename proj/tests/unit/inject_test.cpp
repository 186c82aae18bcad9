#include <cmath>
#include <vector>

#include "doctest.h"
#include "ewmlab/errors.hpp"
#include "ewmlab/inject.hpp"
#include "helpers.hpp"

using namespace ewmlab;
using test::randn;

namespace {

std::vector<Role> example_roles() {
  std::vector<Role> r;
  r.insert(r.end(), 2, Role::System);
  r.insert(r.end(), 3, Role::Video);
  r.insert(r.end(), 2, Role::Audio);
  r.insert(r.end(), 4, Role::Subtitle);
  r.insert(r.end(), 2, Role::Answer);
  return r;
}

}  // namespace

TEST_CASE("boundary positions") {
  const auto roles = example_roles();
  const auto b = locate_boundaries(roles);
  CHECK(b.p_av == 7);
  CHECK(b.p_ans == 11);

  const std::vector<Role> text_only{Role::System, Role::System, Role::Subtitle, Role::Answer};
  CHECK(locate_boundaries(text_only).p_av == 2);
  const std::vector<Role> no_answer{Role::System, Role::Video};
  CHECK_THROWS_AS(locate_boundaries(no_answer), ContractError);
}

TEST_CASE("keep mask per audiovisual region") {
  CHECK(keep_count(8, 0.1) == 1);
  CHECK(keep_count(8, 0.5) == 4);
  CHECK(keep_count(8, 1.0) == 8);
  CHECK(keep_count(3, 0.7) == 2);

  const auto roles = example_roles();
  const auto m = apply_keep_mask(roles, 0.5);
  CHECK(m.kept == std::vector<std::size_t>{0, 1, 2, 5, 7, 8, 9, 10, 11, 12});
  CHECK(m.index_map[3] == -1);
  CHECK(m.index_map[5] == 3);
  CHECK(m.relocate(7) == 4);
  CHECK(m.relocate(11) == 8);

  const auto id = apply_keep_mask(roles, 1.0);
  CHECK(id.kept.size() == roles.size());
  CHECK_THROWS_AS(apply_keep_mask(roles, 0.0), ContractError);
}

TEST_CASE("interleaved injection layout") {
  const auto roles = example_roles();
  const std::size_t L = roles.size();
  const auto emb = randn(L, 4, 1);
  std::vector<int> labels(L, kIgnoreIndex);
  labels[11] = 50;
  labels[12] = 51;
  const auto beliefs = randn(8, 4, 2);
  const auto s = interleave_inject(emb, roles, labels, beliefs, locate_boundaries(roles));
  CHECK(s.size() == L + 8);
  CHECK(s.n_beliefs == 8);
  for (std::size_t i = 7; i < 11; ++i) CHECK(s.roles[i] == Role::Belief);
  CHECK(s.roles[11] == Role::Subtitle);
  for (std::size_t i = 15; i < 19; ++i) CHECK(s.roles[i] == Role::Belief);
  CHECK(s.boundaries.p_ans == 19);
  CHECK(s.roles[19] == Role::Answer);
  CHECK(s.labels[19] == 50);
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.roles[i] == Role::Belief) CHECK(s.labels[i] == kIgnoreIndex);
    CHECK(s.mask[i] == 1);
  }
  CHECK(s.embeddings.at(7, 2) == beliefs.at(0, 2));
  CHECK(s.embeddings.at(15, 1) == beliefs.at(4, 1));
  CHECK(s.embeddings.at(19, 3) == emb.at(11, 3));

  // Odd counts put the extra row at the audiovisual boundary.
  const auto odd = interleave_inject(emb, roles, labels, randn(3, 4, 3), locate_boundaries(roles));
  CHECK(odd.roles[8] == Role::Belief);
  CHECK(odd.roles[9] == Role::Subtitle);
  CHECK(odd.roles[13] == Role::Belief);

  const auto single = interleave_inject(emb, roles, labels, beliefs, locate_boundaries(roles), Placement::SingleAv);
  for (std::size_t i = 7; i < 15; ++i) CHECK(single.roles[i] == Role::Belief);

  const auto plain = interleave_inject(emb, roles, labels, Tensor{}, locate_boundaries(roles));
  CHECK(plain.size() == L);
  CHECK(test::bitwise_equal(plain.embeddings, emb));
}

TEST_CASE("right padding") {
  const auto roles = example_roles();
  std::vector<int> labels(roles.size(), kIgnoreIndex);
  std::vector<AugmentedSample> batch;
  batch.push_back(interleave_inject(randn(roles.size(), 4, 1), roles, labels, randn(2, 4, 2), locate_boundaries(roles)));
  batch.push_back(interleave_inject(randn(roles.size(), 4, 1), roles, labels, Tensor{}, locate_boundaries(roles)));
  pad_batch(batch);
  CHECK(batch[1].size() == batch[0].size());
  CHECK(batch[1].n_real == roles.size());
  CHECK(batch[1].mask.back() == 0);
  CHECK(batch[1].labels.back() == kIgnoreIndex);
  CHECK(batch[1].roles.back() == Role::Pad);
  CHECK(dump_layout(batch[1]).find("pad") != std::string::npos);
}

TEST_CASE("up projection edge cases") {
  ParameterStore store(1);
  const Injector inj(store, 6, 4);
  const auto b = randn(5, 4, 3);
  const auto out = inj.up_project(b);
  REQUIRE(out.shape() == Shape{5, 6});
  for (std::size_t i = 0; i < 5; ++i) {
    double m = 0;
    for (std::size_t c = 0; c < 6; ++c) m += out.at(i, c) / 6.0;
    CHECK(std::abs(m) < 1e-12);
  }
  for (auto* n : {"inject.w_ep", "inject.b_ep", "inject.ln.beta"})
    for (auto& v : store.entry(n).tensor.mutable_data()) v = 0.0;
  const auto zero = inj.up_project(b);
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);
  CHECK_THROWS_AS(inj.up_project(randn(2, 5, 1)), DimensionError);
}

TEST_CASE("kept lengths and audio-free layouts") {
  CHECK(keep_count(10, 0.73) == 7);
  std::vector<Role> roles(2, Role::System);
  roles.insert(roles.end(), 10, Role::Video);
  roles.insert(roles.end(), 6, Role::Subtitle);
  roles.insert(roles.end(), 2, Role::Answer);
  const auto b = locate_boundaries(roles);
  CHECK(b.p_av == 12);
  const auto m = apply_keep_mask(roles, 0.73);
  CHECK(m.kept.size() == 20 - 3);
  CHECK(m.relocate(b.p_av) == 9);

  std::vector<int> labels(roles.size(), kIgnoreIndex);
  labels[18] = 7;
  const auto emb = randn(roles.size(), 4, 1);
  const auto s = interleave_inject(emb, roles, labels, randn(8, 4, 2), b);
  CHECK(s.size() == 28);
  CHECK(s.roles[12] == Role::Belief);
  CHECK(s.roles[11] == Role::Video);
  CHECK(s.labels[s.boundaries.p_ans] == 7);
  const auto plain = interleave_inject(emb, roles, labels, Tensor{}, b);
  CHECK(plain.labels == labels);
}
