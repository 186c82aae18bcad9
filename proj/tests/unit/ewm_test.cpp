#include <cmath>

#include "doctest.h"
#include "ewmlab/errors.hpp"
#include "ewmlab/ewm.hpp"
#include "ewmlab/gradcheck.hpp"
#include "ewmlab/ops.hpp"
#include "helpers.hpp"

using namespace ewmlab;
using test::randn;

namespace {

EwmConfig small_config() {
  EwmConfig c;
  c.d = 8;
  c.d_w = 8;
  c.heads = 2;
  c.n_future = 2;
  return c;
}

}  // namespace

TEST_CASE("split point examples") {
  CHECK(split_point(8, 0.7) == 5);
  CHECK(split_point(8, 1.0) == 7);
  CHECK(split_point(8, 0.01) == 1);
  CHECK(split_point(2, 0.5) == 1);
  CHECK_THROWS_AS(split_point(1, 0.5), ContractError);

  const auto z = randn(8, 4, 1);
  const auto tr = temporal_split(z, 0.7, RunMode::Train);
  CHECK(tr.t_p == 5);
  CHECK(tr.fut.rows() == 3);
  CHECK(tr.boundary.at(0, 2) == z.at(4, 2));
  const auto inf = temporal_split(z, 0.3, RunMode::Infer);
  CHECK(inf.t_p == 8);
  CHECK_FALSE(inf.has_future());
  CHECK(inf.boundary.at(0, 1) == z.at(7, 1));
}

TEST_CASE("keep ratio sampling bounds") {
  EwmConfig c;
  Rng rng(4);
  for (int i = 0; i < 1000; ++i) {
    const double k = sample_keep_ratio(c, rng, RunMode::Train);
    CHECK(k >= c.kappa_min);
    CHECK(k < c.kappa_max);
  }
  CHECK(sample_keep_ratio(c, rng, RunMode::Infer) == 1.0);
}

TEST_CASE("modality dropout frequency") {
  Rng rng(8);
  int dropped = 0, video = 0;
  const int n = 40000;
  for (int i = 0; i < n; ++i) {
    const auto p = apply_modality_dropout({true, true}, 0.15, rng, RunMode::Train);
    REQUIRE((p[0] || p[1]));
    if (!(p[0] && p[1])) ++dropped;
    if (!p[0]) ++video;
  }
  CHECK(std::abs(dropped / double(n) - 0.15) < 0.01);
  CHECK(std::abs(video / double(dropped) - 0.5) < 0.03);
  for (int i = 0; i < 100; ++i) {
    const auto p = apply_modality_dropout({false, true}, 1.0, rng, RunMode::Train);
    CHECK(p[1]);
  }
  const auto q = apply_modality_dropout({true, true}, 1.0, rng, RunMode::Infer);
  CHECK((q[0] && q[1]));
}

TEST_CASE("rollout context composition by mode") {
  ParameterStore store(1);
  const Ewm ewm(store, small_config());
  const auto sv = temporal_split(randn(6, 8, 2), 0.5, RunMode::Train);
  const auto sa = temporal_split(randn(4, 8, 3), 0.5, RunMode::Train);
  const std::array<const SplitResult*, 2> both{&sv, &sa};
  CHECK(ewm.build_rollout_context(Modality::Video, both, ImaginationMode::Cross).rows() == 5);
  CHECK(ewm.build_rollout_context(Modality::Video, both, ImaginationMode::SelfOnly).rows() == 3);
  CHECK(ewm.build_rollout_context(Modality::Video, both, ImaginationMode::CrossOnly).rows() == 2);
  const std::array<const SplitResult*, 2> alone{&sv, nullptr};
  CHECK(ewm.build_rollout_context(Modality::Video, alone, ImaginationMode::CrossOnly).rows() == 3);
  const auto ctx = ewm.build_rollout_context(Modality::Audio, both, ImaginationMode::Cross);
  CHECK(ctx.at(0, 1) == doctest::Approx(sa.past.at(0, 1) + ewm.e_self()[1]));
  CHECK(ctx.at(2, 1) == doctest::Approx(sv.past.at(0, 1) + ewm.e_cross()[1]));
}

TEST_CASE("self_only imagination ignores the other modality") {
  ParameterStore store(1);
  const Ewm ewm(store, small_config());
  const auto sv = temporal_split(randn(6, 8, 2), 0.5, RunMode::Train);
  const auto sa = temporal_split(randn(6, 8, 3), 0.5, RunMode::Train);
  const auto sa2 = temporal_split(randn(6, 8, 4), 0.5, RunMode::Train);
  const auto r1 = ewm.imagine(Modality::Video, ewm.build_rollout_context(Modality::Video, {&sv, &sa}, ImaginationMode::SelfOnly));
  const auto r2 = ewm.imagine(Modality::Video, ewm.build_rollout_context(Modality::Video, {&sv, &sa2}, ImaginationMode::SelfOnly));
  CHECK(test::bitwise_equal(r1.stacked(), r2.stacked()));
  const auto r3 = ewm.imagine(Modality::Video, ewm.build_rollout_context(Modality::Video, {&sv, &sa2}, ImaginationMode::Cross));
  CHECK_FALSE(test::bitwise_equal(r1.stacked(), r3.stacked()));
}

TEST_CASE("rollout context growth and step isolation") {
  auto cfg = small_config();
  ParameterStore store(1);
  const Ewm ewm(store, cfg);
  const auto ctx = randn(5, 8, 9);
  const auto r = ewm.imagine(Modality::Audio, ctx);
  REQUIRE(r.steps.size() == 3);
  CHECK(r.context_rows == std::vector<std::size_t>{5, 7, 9});
  for (const auto& y : r.steps) CHECK(y.shape() == Shape{2, 8});

  // Editing the step-2 embedding cannot reach step 1.
  store.entry("ewm.audio.step_emb").tensor.mutable_data()[8 + 3] += 1.0;
  const auto r2 = ewm.imagine(Modality::Audio, ctx);
  CHECK(test::bitwise_equal(r.steps[0], r2.steps[0]));
  CHECK_FALSE(test::bitwise_equal(r.steps[1], r2.steps[1]));

  cfg.rollout_context = RolloutContext::LatestOnly;
  ParameterStore other(1);
  const Ewm latest(other, cfg);
  CHECK(latest.imagine(Modality::Audio, ctx).context_rows == std::vector<std::size_t>{5, 7, 7});
  CHECK_THROWS_AS(ewm.imagine(Modality::Audio, Tensor{}), ContractError);
}

TEST_CASE("imagination loss against a direct computation") {
  ParameterStore store(1);
  const Ewm ewm(store, small_config());
  const auto sv = temporal_split(randn(9, 8, 2), 0.4, RunMode::Train);
  const auto rv = ewm.imagine(Modality::Video, sv.past);
  const auto loss = ewm.imagination_loss({&rv, nullptr}, {&sv, nullptr});
  CHECK(loss.supervised_modalities == 1);
  const auto target = adaptive_avg_pool_1d(sv.fut, 2);
  double want = 0;
  for (const auto& y : rv.steps) {
    double mse = 0, cos_loss = 0;
    for (std::size_t i = 0; i < 2; ++i) {
      double dot = 0, ny = 0, nt = 0;
      for (std::size_t c = 0; c < 8; ++c) {
        const double a = y.at(i, c), b = target.at(i, c);
        mse += (a - b) * (a - b) / 16.0;
        dot += a * b;
        ny += a * a;
        nt += b * b;
      }
      cos_loss += 0.5 * (1.0 - dot / std::sqrt(ny * nt)) / 2.0;
    }
    want += (mse + cos_loss) / 3.0;
  }
  CHECK(loss.loss.item() == doctest::Approx(want).epsilon(1e-12));
  CHECK(loss.fidelity[0]->cosine.size() == 3);
  CHECK_FALSE(loss.fidelity[1].has_value());
}

TEST_CASE("no gradient reaches the detached future") {
  ParameterStore store(1);
  const Ewm ewm(store, small_config());
  auto z = randn(8, 8, 5, true);
  const auto s = temporal_split(z, 0.5, RunMode::Train);
  const auto r = ewm.imagine(Modality::Video, s.past);
  ewm.imagination_loss({&r, nullptr}, {&s, nullptr}).loss.backward();
  double past = 0;
  for (std::size_t i = 0; i < 4 * 8; ++i) past += std::abs(z.grad()[i]);
  CHECK(past > 0);
  for (std::size_t i = 4 * 8; i < 8 * 8; ++i) CHECK(z.grad()[i] == 0.0);
}

TEST_CASE("imagination loss gradient check") {
  auto cfg = small_config();
  cfg.steps = 2;
  ParameterStore store(1);
  const Ewm ewm(store, cfg);
  auto z = randn(6, 8, 5, true);
  // The target is detached, so z itself is not a valid coordinate here.
  std::vector<Tensor> params{store.get("ewm.video.w_out"), store.get("ewm.video.step_emb"),
                             store.get("ewm.video.rollout.layer0.attn.wq")};
  const auto f = [&] {
    const auto s = temporal_split(z, 0.5, RunMode::Train);
    const auto r = ewm.imagine(Modality::Video, s.past);
    return ewm.imagination_loss({&r, nullptr}, {&s, nullptr}).loss;
  };
  CHECK(finite_difference_check(f, params).max_relative_error < 1e-4);
}

TEST_CASE("split point grid") {
  CHECK(split_point(10, 0.73) == 7);
  CHECK(split_point(3, 0.99) == 2);
  CHECK(split_point(2, 0.7) == 1);
  for (std::size_t len = 2; len <= 40; ++len)
    for (int k = 1; k <= 100; ++k) {
      const auto t = split_point(len, k / 100.0);
      CHECK(t >= 1);
      CHECK(t <= len - 1);
    }
  EwmConfig c;
  Rng rng(12);
  for (int i = 0; i < 10000; ++i) {
    const double k = sample_keep_ratio(c, rng, RunMode::Train);
    REQUIRE(k >= 0.7);
    REQUIRE(k < 1.0);
  }
  for (int i = 0; i < 200; ++i) {
    const auto p = apply_modality_dropout({true, true}, 0.0, rng, RunMode::Train);
    CHECK((p[0] && p[1]));
  }
}

TEST_CASE("zeroed tags, projections and outputs") {
  ParameterStore store(1);
  const Ewm ewm(store, small_config());
  for (auto* n : {"ewm.e_self", "ewm.e_cross"})
    for (auto& v : store.entry(n).tensor.mutable_data()) v = 0.0;
  const auto sv = temporal_split(randn(10, 8, 2), 0.7, RunMode::Train);
  const auto sa = temporal_split(randn(10, 8, 3), 0.5, RunMode::Train);
  CHECK(sv.t_p + sa.t_p == 12);
  const auto ctx = ewm.build_rollout_context(Modality::Video, {&sv, &sa}, ImaginationMode::Cross);
  REQUIRE(ctx.rows() == 12);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(ctx.at(0, c) == sv.past.at(0, c));
    CHECK(ctx.at(7, c) == sa.past.at(0, c));
  }

  for (auto& v : store.entry("ewm.video.w_out").tensor.mutable_data()) v = 0.0;
  for (const auto& y : ewm.imagine(Modality::Video, ctx).steps)
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.0);

  for (auto& v : store.entry("ewm.audio.down").tensor.mutable_data()) v = 0.0;
  const auto z = ewm.bottleneck_project(randn(5, 8, 4), Modality::Audio);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
}

TEST_CASE("a rollout equal to the pooled future has zero loss") {
  ParameterStore store(1);
  const Ewm ewm(store, small_config());
  const auto s = temporal_split(randn(8, 8, 6), 0.5, RunMode::Train);
  REQUIRE(s.fut.rows() == 4);
  const auto target = adaptive_avg_pool_1d(s.fut, 2);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(target.at(0, c) == doctest::Approx(0.5 * (s.fut.at(0, c) + s.fut.at(1, c))));
    CHECK(target.at(1, c) == doctest::Approx(0.5 * (s.fut.at(2, c) + s.fut.at(3, c))));
  }
  Rollout r;
  r.steps.assign(3, target);
  CHECK(std::abs(ewm.imagination_loss({&r, nullptr}, {&s, nullptr}).loss.item()) < 1e-12);
}

TEST_CASE("shared cross-attention reaches every step") {
  ParameterStore store(1);
  const Ewm ewm(store, small_config());
  const auto ctx = randn(5, 8, 9);
  const auto before = ewm.imagine(Modality::Video, ctx);
  store.entry("ewm.video.rollout.layer0.attn.wv").tensor.mutable_data()[3] += 0.5;
  const auto after = ewm.imagine(Modality::Video, ctx);
  for (std::size_t s = 0; s < 3; ++s) CHECK_FALSE(test::bitwise_equal(before.steps[s], after.steps[s]));
}
