#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ckd/backbone.hpp"
#include "ckd/checkpoint.hpp"
#include "ckd/errors.hpp"
#include "ckd/math.hpp"
#include "test_support.hpp"

using namespace ckd;
using ckd::testing::finite_difference;
using ckd::testing::max_relative_error;
using ckd::testing::random_batch;
using ckd::testing::random_instance;

namespace {

// Score as a single dot product of concatenated user and item vectors:
// [x_u, p_u^1, ..., p_u^M] . [x_i, W_1 e_i^1, ..., W_M e_i^M], all by hand.
double concatenation_oracle(const ModelParams& p, const std::vector<ModalityFeatures>& f, Index u,
                            Index i) {
  std::vector<double> user, item;
  for (std::size_t k = 0; k < p.dim; ++k) {
    user.push_back(p.user_id(u, k));
    item.push_back(p.item_id(i, k));
  }
  for (std::size_t m = 0; m < f.size(); ++m)
    for (std::size_t r = 0; r < p.dim; ++r) {
      user.push_back(p.user_pref[m](u, r));
      double proj = 0.0;
      for (std::size_t c = 0; c < f[m].dim(); ++c) proj += p.projection[m](r, c) * f[m].matrix(i, c);
      item.push_back(proj);
    }
  double s = 0.0;
  for (std::size_t k = 0; k < user.size(); ++k) s += user[k] * item[k];
  return s;
}

}  // namespace

TEST(Xavier, BoundsAndDeterminism) {
  ModelShape shape{4, 6, 4, {4}};
  const auto a = init_xavier(shape, 3);
  const double bound = std::sqrt(6.0 / 8.0);
  for (double v : a.projection[0].data) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(a, init_xavier(shape, 3));
  EXPECT_NE(a, init_xavier(shape, 4));
  EXPECT_THROW(init_xavier(ModelShape{4, 6, 0, {4}}, 0), ConfigError);
  EXPECT_THROW(init_xavier(ModelShape{4, 6, 4, {0}}, 0), ConfigError);
}

TEST(Xavier, SampleMeanWithinThreeSigma) {
  ModelShape shape{10000, 2, 1, {}};
  const auto p = init_xavier(shape, 5);
  const double bound = std::sqrt(6.0 / 10001.0);
  double sum = 0.0;
  for (double v : p.user_id.data) sum += v;
  const double sigma_mean = bound / std::sqrt(3.0) / std::sqrt(10000.0);
  EXPECT_LE(std::abs(sum / 10000.0), 3.0 * sigma_mean);
}

TEST(Score, ScalarArithmetic) {
  InteractionData d;
  d.n_users = 1;
  d.n_items = 1;
  Matrix e(1, 1);
  e.data = {0.5};
  std::vector<ModalityFeatures> f{make_modality("v", e)};
  auto p = ModelParams::zeros(ModelShape{1, 1, 1, {1}});
  p.user_id.data = {2};
  p.item_id.data = {3};
  p.user_pref[0].data = {1};
  p.projection[0].data = {1};
  EXPECT_EQ(score_full(p, f, 0, 0), 6.5);
}

TEST(Score, ZeroPreferencesLeaveIdTerm) {
  auto inst = random_instance(1);
  for (auto& pref : inst.params.user_pref) pref.fill(0.0);
  for (Index u = 0; u < 8; ++u)
    for (Index i = 0; i < 12; ++i) {
      double id = 0.0;
      for (std::size_t k = 0; k < 4; ++k) id += inst.params.user_id(u, k) * inst.params.item_id(i, k);
      EXPECT_NEAR(score_full(inst.params, inst.features, u, i), id, 1e-12);
    }
}

TEST(Score, MatchesConcatenationOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = random_instance(seed, 5, 7, 3, {2, 5, 4});
    for (Index u = 0; u < 5; ++u)
      for (Index i = 0; i < 7; ++i)
        EXPECT_NEAR(score_full(inst.params, inst.features, u, i),
                    concatenation_oracle(inst.params, inst.features, u, i), 1e-12);
  }
}

TEST(Score, OutOfRange) {
  const auto inst = random_instance(2);
  EXPECT_THROW(score_full(inst.params, inst.features, 8, 0), std::out_of_range);
  EXPECT_THROW(score_full(inst.params, inst.features, 0, 12), std::out_of_range);
}

TEST(MaskedScore, FullMaskIsIdentity) {
  const auto inst = random_instance(3);
  const Scorer scorer(inst.params, inst.features);
  for (Index u = 0; u < 8; ++u)
    for (Index i = 0; i < 12; ++i) {
      const double full = score_full(inst.params, inst.features, u, i);
      EXPECT_EQ(score_masked(inst.params, inst.features, u, i, ModalityMask::all(2)), full);
      EXPECT_EQ(scorer.score(u, i, ModalityMask::all(2)),
                score_masked(inst.params, inst.features, u, i, ModalityMask::all(2)));
    }
}

TEST(MaskedScore, EmptyMaskIsConstantOffset) {
  const auto inst = random_instance(4);
  double offset = std::nan("");
  for (Index u = 0; u < 8; ++u)
    for (Index i = 0; i < 12; ++i) {
      double id = 0.0;
      for (std::size_t k = 0; k < 4; ++k) id += inst.params.user_id(u, k) * inst.params.item_id(i, k);
      const double rest = score_masked(inst.params, inst.features, u, i, ModalityMask::none()) - id;
      if (std::isnan(offset)) offset = rest;
      EXPECT_NEAR(rest, offset, 1e-12);
    }
}

TEST(MaskedScore, ScorerMatchesForEveryMask) {
  const auto inst = random_instance(5, 8, 12, 4, {3, 6, 2});
  const Scorer scorer(inst.params, inst.features);
  std::vector<double> row(12);
  std::vector<ModalityMask> masks{ModalityMask::none(), ModalityMask::all(3)};
  for (std::size_t m = 0; m < 3; ++m) {
    masks.push_back(ModalityMask::only(m));
    masks.push_back(ModalityMask::all_except(3, m));
  }
  for (const auto built : masks) {
    for (Index u = 0; u < 8; ++u) {
      scorer.score_items(u, built, row);
      for (Index i = 0; i < 12; ++i) {
        const double ref = score_masked(inst.params, inst.features, u, i, built);
        EXPECT_EQ(row[i], ref);
        EXPECT_EQ(scorer.score(u, i, built), ref);
      }
    }
  }
}

TEST(MaskedScore, SingleUserPreferenceMeanIsThatUser) {
  const auto inst = random_instance(6, 1, 5, 3, {4});
  const auto means = compute_ablation_means(inst.params, inst.features);
  for (std::size_t k = 0; k < 3; ++k)
    EXPECT_NEAR(means.pref_mean[0][k], inst.params.user_pref[0](0, k), 1e-15);
}

TEST(Forward, AntisymmetryAndDecomposition) {
  const auto inst = random_instance(7);
  TripleBatch batch = random_batch(7, 200, 8, 12);
  batch.triples.push_back({3, 5, 5});
  const auto fwd = forward_batch(inst.params, inst.features, batch, ModalityMask::all(2));
  EXPECT_EQ(fwd.delta.back(), 0.0);
  TripleBatch swapped = batch;
  for (auto& t : swapped.triples) std::swap(t.a, t.b);
  const auto rev = forward_batch(inst.params, inst.features, swapped, ModalityMask::all(2));
  for (std::size_t t = 0; t < batch.size(); ++t) {
    EXPECT_NEAR(fwd.delta[t], -rev.delta[t], 1e-12);
    const auto& tr = batch.triples[t];
    const double direct = score_full(inst.params, inst.features, tr.u, tr.a) -
                          score_full(inst.params, inst.features, tr.u, tr.b);
    EXPECT_NEAR(fwd.delta[t], direct, 1e-10);
    const double parts = fwd.id_margin[t] + fwd.modality_diff(t, 0) + fwd.modality_diff(t, 1);
    EXPECT_NEAR(fwd.delta[t] - parts, 0.0, 1e-12);
  }
}

TEST(Forward, MaskedMarginsMatchMaskedScores) {
  const auto inst = random_instance(8);
  const TripleBatch batch = random_batch(8, 50, 8, 12);
  for (const auto keep : {ModalityMask::none(), ModalityMask::only(0), ModalityMask::only(1)}) {
    const auto fwd = forward_batch(inst.params, inst.features, batch, keep);
    for (std::size_t t = 0; t < batch.size(); ++t) {
      const auto& tr = batch.triples[t];
      const double direct = score_masked(inst.params, inst.features, tr.u, tr.a, keep) -
                            score_masked(inst.params, inst.features, tr.u, tr.b, keep);
      EXPECT_NEAR(fwd.delta[t], direct, 1e-10);
    }
  }
}

TEST(Backward, ZeroLossGradientGivesZeroGradients) {
  const auto inst = random_instance(9);
  const TripleBatch batch = random_batch(9, 20, 8, 12);
  auto grads = ModelParams::zeros(inst.params.shape());
  const std::vector<double> zero(batch.size(), 0.0);
  backward(inst.params, inst.features, batch, ModalityMask::all(2), zero, grads);
  EXPECT_EQ(grads, ModelParams::zeros(inst.params.shape()));
}

TEST(Backward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = random_instance(seed + 20);
    const TripleBatch batch = random_batch(seed, 6, 8, 12);
    for (const auto keep : {ModalityMask::all(2), ModalityMask::only(1), ModalityMask::none()}) {
      // L = sum_t -ln sigma(delta_t)
      auto loss = [&](const ModelParams& p) {
        double s = 0.0;
        for (double d : forward_batch(p, inst.features, batch, keep).delta) s += neg_log_sigmoid(d);
        return s;
      };
      const auto fwd = forward_batch(inst.params, inst.features, batch, keep);
      std::vector<double> dl(batch.size());
      for (std::size_t t = 0; t < batch.size(); ++t) dl[t] = -sigmoid(-fwd.delta[t]);
      auto grads = ModelParams::zeros(inst.params.shape());
      backward(inst.params, inst.features, batch, keep, dl, grads);
      EXPECT_LT(max_relative_error(grads, finite_difference(inst.params, loss)), 1e-4);
    }
  }
}

TEST(Backward, DuplicateTripleDoublesGradient) {
  const auto inst = random_instance(10);
  TripleBatch one;
  one.triples = {{2, 3, 7}};
  TripleBatch two;
  two.triples = {{2, 3, 7}, {2, 3, 7}};
  auto g1 = ModelParams::zeros(inst.params.shape());
  auto g2 = ModelParams::zeros(inst.params.shape());
  backward(inst.params, inst.features, one, ModalityMask::all(2), std::vector<double>{-0.3}, g1);
  backward(inst.params, inst.features, two, ModalityMask::all(2), std::vector<double>{-0.3, -0.3},
           g2);
  auto t1 = g1.tensors();
  auto t2 = g2.tensors();
  for (std::size_t n = 0; n < t1.size(); ++n)
    for (std::size_t k = 0; k < t1[n].second->size(); ++k)
      EXPECT_EQ(t2[n].second->data[k], 2.0 * t1[n].second->data[k]);
}

TEST(Backward, ShapeMismatch) {
  const auto inst = random_instance(11);
  const TripleBatch batch = random_batch(11, 3, 8, 12);
  auto wrong = ModelParams::zeros(ModelShape{8, 12, 5, {6, 6}});
  EXPECT_THROW(backward(inst.params, inst.features, batch, ModalityMask::all(2),
                        std::vector<double>(3, 1.0), wrong),
               ConfigError);
}

TEST(Adam, ZeroGradientLeavesParams) {
  auto inst = random_instance(12);
  const auto before = inst.params;
  auto state = AdamState::for_params(inst.params);
  adam_step(inst.params, ModelParams::zeros(inst.params.shape()), state, 0.01);
  EXPECT_EQ(inst.params, before);
}

TEST(Adam, FirstStepIsSignTimesLr) {
  auto inst = random_instance(13);
  const auto before = inst.params;
  auto grads = ModelParams::zeros(inst.params.shape());
  std::mt19937_64 gen(1);
  std::normal_distribution<double> nd;
  for (auto& [name, t] : grads.tensors())
    for (double& v : t->data) v = nd(gen);
  auto state = AdamState::for_params(inst.params);
  adam_step(inst.params, grads, state, 0.01);
  const auto g = grads.tensors();
  const auto a = inst.params.tensors();
  const auto b = before.tensors();
  for (std::size_t n = 0; n < g.size(); ++n)
    for (std::size_t k = 0; k < g[n].second->size(); ++k) {
      const double step = a[n].second->data[k] - b[n].second->data[k];
      const double sign = g[n].second->data[k] > 0 ? 1.0 : -1.0;
      EXPECT_NEAR(step, -0.01 * sign, 1e-7);
    }
}

TEST(Adam, ConstantGradientStepApproachesLr) {
  auto p = ModelParams::zeros(ModelShape{1, 1, 1, {}});
  auto g = ModelParams::zeros(p.shape());
  g.user_id.data = {0.37};
  auto state = AdamState::for_params(p);
  double prev = 0.0, step = 0.0;
  for (int s = 0; s < 2000; ++s) {
    adam_step(p, g, state, 1e-3);
    step = prev - p.user_id.data[0];
    prev = p.user_id.data[0];
  }
  // With a constant gradient both bias-corrected moments equal g exactly in the
  // limit, so the step is lr * |g| / (|g| + eps).
  EXPECT_NEAR(step, 1e-3 * 0.37 / (0.37 + 1e-8), 1e-9);
}

TEST(Adam, NonFiniteGradientNamesTensor) {
  auto inst = random_instance(14);
  auto grads = ModelParams::zeros(inst.params.shape());
  grads.projection[1].data[2] = std::nan("");
  auto state = AdamState::for_params(inst.params);
  try {
    adam_step(inst.params, grads, state, 0.01);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("proj/1"), std::string::npos) << e.what();
  }
}

TEST(Bridge, HalfAtZeroMargin) {
  const std::vector<double> s{0.4, -0.4};
  const auto r = gradient_bridge(0.0, s);
  EXPECT_EQ(r.bridge, 0.5);
  EXPECT_EQ(r.closed_form[0], -0.5);
  EXPECT_EQ(r.closed_form[0], r.closed_form[1]);
}

TEST(Bridge, VanishesAsMarginGrows) {
  double prev = 1.0;
  for (double m : {0.0, 1.0, 5.0, 20.0, 50.0, 800.0}) {
    const std::vector<double> s{m / 2, m / 2};
    const double b = gradient_bridge(0.0, s).bridge;
    EXPECT_LT(b, prev);
    prev = b;
  }
  EXPECT_LT(prev, 1e-300);
}

TEST(Bridge, RandomInstancesAgreeWithFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = random_instance(seed);
    const auto r = gradient_bridge(inst.params, inst.features, Triple{1, 2, 3});
    EXPECT_EQ(r.closed_form[0], r.closed_form[1]);
    for (std::size_t m = 0; m < 2; ++m) EXPECT_NEAR(r.closed_form[m], r.finite_difference[m], 1e-6);
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto inst = random_instance(15);
  CheckpointMeta meta{{"m0", "m1"}, 42, {{"dim", 4}, {"lr", 0.001}}};
  const std::string bytes = encode_checkpoint(inst.params, meta);
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.params, inst.params);
  EXPECT_EQ(back.meta.modality_ids, meta.modality_ids);
  EXPECT_EQ(back.meta.seed, 42u);
  EXPECT_EQ(encode_checkpoint(back.params, back.meta), bytes);

  const auto path = std::filesystem::temp_directory_path() / "ckd_roundtrip.ckpt";
  save_checkpoint(path, inst.params, meta);
  EXPECT_EQ(load_checkpoint(path).params, inst.params);
  std::filesystem::remove(path);
}

TEST(Checkpoint, CorruptInputsRejected) {
  const auto inst = random_instance(16);
  const std::string bytes = encode_checkpoint(inst.params, {{"m0", "m1"}, 0, {}});
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), DataError);
  EXPECT_THROW(decode_checkpoint(bytes + "x"), DataError);
  EXPECT_THROW(decode_checkpoint("not json\n"), DataError);
  EXPECT_THROW(decode_checkpoint("no newline"), DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckd.ckpt"), IoError);
}
