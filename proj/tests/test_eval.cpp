#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "ckd/errors.hpp"
#include "ckd/eval.hpp"
#include "test_support.hpp"

using namespace ckd;

namespace {

struct BruteMetrics {
  double recall, precision, ndcg;
};

// Full sort of the candidates, then metrics straight from their definitions.
BruteMetrics brute_force(const std::vector<double>& scores, const std::set<Index>& excluded,
                         const std::set<Index>& test, std::size_t k) {
  std::vector<Index> order;
  for (Index i = 0; i < scores.size(); ++i)
    if (!excluded.count(i)) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return scores[a] > scores[b]; });
  order.resize(std::min(order.size(), k));
  double hits = 0, dcg = 0, idcg = 0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (test.count(order[r])) {
      hits += 1;
      dcg += 1.0 / std::log2(static_cast<double>(r + 2));
    }
  for (std::size_t r = 0; r < std::min(k, test.size()); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r + 2));
  return {hits / static_cast<double>(test.size()), hits / static_cast<double>(k), dcg / idcg};
}

}  // namespace

TEST(TopK, OrderAndTies) {
  const std::vector<double> s{0.1, 0.9, 0.5};
  EXPECT_EQ(top_k(s, {}, 2).items, (std::vector<Index>{1, 2}));
  const std::vector<double> tied{0.3, 0.7, 0.3, 0.7};
  EXPECT_EQ(top_k(tied, {}, 4).items, (std::vector<Index>{1, 3, 0, 2}));
  const std::vector<Index> excluded{1};
  EXPECT_EQ(top_k(tied, excluded, 2).items, (std::vector<Index>{3, 0}));
  const auto short_list = top_k(s, excluded, 5);
  EXPECT_TRUE(short_list.truncated);
  EXPECT_EQ(short_list.items, (std::vector<Index>{2, 0}));
}

TEST(Metrics, Examples) {
  const std::vector<Index> test{3, 8};
  EXPECT_EQ(recall_at_k(std::vector<Index>{3, 5}, test), 0.5);
  EXPECT_EQ(recall_at_k(std::vector<Index>{8, 1, 3}, test), 1.0);
  EXPECT_EQ(recall_at_k(std::vector<Index>{0, 1}, test), 0.0);
  EXPECT_EQ(precision_at_k(std::vector<Index>{3, 5}, test, 2), 0.5);
  EXPECT_EQ(precision_at_k(std::vector<Index>{3}, test, 4), 0.25);
  EXPECT_NEAR(ndcg_at_k(std::vector<Index>{3, 8}, test, 2), 1.0, 1e-15);
  EXPECT_NEAR(ndcg_at_k(std::vector<Index>{3, 1}, std::vector<Index>{3}, 2), 1.0, 1e-15);
  // single hit at the second position, one relevant item
  EXPECT_NEAR(ndcg_at_k(std::vector<Index>{1, 3}, std::vector<Index>{3}, 2), 1.0 / std::log2(3.0),
              1e-12);
  EXPECT_THROW(recall_at_k(std::vector<Index>{1}, std::vector<Index>{}), DataError);
}

TEST(Metrics, MatchBruteForceOnFuzzedRankings) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 5 + gen() % 60;
    std::vector<double> scores(n);
    for (double& v : scores) v = static_cast<double>(gen() % 7);  // many ties
    std::set<Index> excluded, test;
    for (Index i = 0; i < n; ++i) {
      const auto r = gen() % 10;
      if (r < 2) excluded.insert(i);
      else if (r < 4) test.insert(i);
    }
    if (test.empty()) test.insert(static_cast<Index>(n - 1)), excluded.erase(static_cast<Index>(n - 1));
    const std::size_t k = 1 + gen() % 25;
    const std::vector<Index> ex(excluded.begin(), excluded.end());
    const std::vector<Index> te(test.begin(), test.end());
    const auto top = top_k(scores, ex, k);
    const auto oracle = brute_force(scores, excluded, test, k);
    EXPECT_EQ(recall_at_k(top.items, te), oracle.recall);
    EXPECT_EQ(precision_at_k(top.items, te, k), oracle.precision);
    EXPECT_EQ(ndcg_at_k(top.items, te, k), oracle.ndcg);
  }
}

TEST(Metrics, MonotoneInK) {
  std::mt19937_64 gen(5);
  std::vector<double> scores(40);
  for (double& v : scores) v = static_cast<double>(gen() % 1000);
  const std::vector<Index> test{2, 9, 17, 33};
  double prev = 0.0;
  for (std::size_t k = 1; k <= 40; ++k) {
    const double r = recall_at_k(top_k(scores, {}, k).items, test);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_EQ(prev, 1.0);
}

TEST(Metrics, ShiftInvariance) {
  std::mt19937_64 gen(6);
  std::vector<double> scores(30);
  for (double& v : scores) v = static_cast<double>(gen() % 100) / 8.0;
  auto shifted = scores;
  for (double& v : shifted) v += 1024.0;  // exact in binary for these values
  EXPECT_EQ(top_k(scores, {}, 10).items, top_k(shifted, {}, 10).items);
}

TEST(RankTopK, ZeroPreferencesRankById) {
  auto inst = ckd::testing::random_instance(4);
  for (auto& p : inst.params.user_pref) p.fill(0.0);
  std::vector<double> scores(12);
  for (Index i = 0; i < 12; ++i)
    for (std::size_t k = 0; k < 4; ++k) scores[i] += inst.params.user_id(2, k) * inst.params.item_id(i, k);
  EXPECT_EQ(rank_topk(inst.params, inst.features, 2, 5, {}, ModalityMask::all(2)).items,
            top_k(scores, {}, 5).items);
}

TEST(Evaluate, ExclusionAndPerUserOracle) {
  const auto inst = ckd::testing::random_instance(8, 8, 12);
  const auto channels = default_channels(inst.features);
  ASSERT_EQ(channels.size(), 3u);
  const auto report = evaluate(inst.params, inst.features, inst.data, Split::test, 5, channels);
  EXPECT_EQ(report.n_users_evaluated, 8u);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const Scorer scorer(inst.params, inst.features);
    double recall = 0, ndcg = 0, precision = 0;
    for (Index u = 0; u < 8; ++u) {
      std::vector<double> scores(12);
      for (Index i = 0; i < 12; ++i) scores[i] = scorer.score(u, i, channels[c].keep);
      std::set<Index> excluded(inst.data.train[u].begin(), inst.data.train[u].end());
      excluded.insert(inst.data.val[u].begin(), inst.data.val[u].end());
      const std::set<Index> test(inst.data.test[u].begin(), inst.data.test[u].end());
      const auto o = brute_force(scores, excluded, test, 5);
      recall += o.recall, ndcg += o.ndcg, precision += o.precision;
    }
    EXPECT_NEAR(report.channels[c].recall, recall / 8, 1e-15);
    EXPECT_NEAR(report.channels[c].ndcg, ndcg / 8, 1e-15);
    EXPECT_NEAR(report.channels[c].precision, precision / 8, 1e-15);
  }
}

TEST(Evaluate, ValidationNeverRanksTrainItems) {
  auto inst = ckd::testing::random_instance(9, 8, 12);
  // Push every user's train item to the top; validation must still skip it.
  for (Index u = 0; u < 8; ++u) {
    const Index i = inst.data.train[u][0];
    for (std::size_t k = 0; k < 4; ++k) inst.params.item_id(i, k) = 0.0;
  }
  for (Index u = 0; u < 8; ++u) {
    const auto excluded = inst.data.train[u];
    const auto top = rank_topk(inst.params, inst.features, u, 11, excluded, ModalityMask::all(2));
    EXPECT_EQ(top.items.size(), 11u);
    EXPECT_EQ(std::count(top.items.begin(), top.items.end(), inst.data.train[u][0]), 0);
  }
}

TEST(Evaluate, SkipsUsersWithoutSplitItems) {
  auto inst = ckd::testing::random_instance(10, 8, 12);
  inst.data.test[3].clear();
  inst.data.test[5].clear();
  const auto channels = default_channels(inst.features);
  const auto report = evaluate(inst.params, inst.features, inst.data, Split::test, 3, channels);
  EXPECT_EQ(report.n_users_evaluated, 6u);
  for (auto& t : inst.data.test) t.clear();
  EXPECT_THROW(evaluate(inst.params, inst.features, inst.data, Split::test, 3, channels), DataError);
}

TEST(Evaluate, ChannelParsing) {
  const auto inst = ckd::testing::random_instance(11);
  const std::vector<std::string> labels{"m1", "full"};
  const auto ch = parse_channels(labels, inst.features);
  ASSERT_EQ(ch.size(), 2u);
  EXPECT_EQ(ch[0].keep, ModalityMask::only(1));
  EXPECT_EQ(ch[1].keep, ModalityMask::all(2));
  const std::vector<std::string> bad{"audio"};
  EXPECT_THROW(parse_channels(bad, inst.features), ConfigError);
}

TEST(Evaluate, ReportSerialisation) {
  const auto inst = ckd::testing::random_instance(12);
  const auto channels = default_channels(inst.features);
  const auto report = evaluate(inst.params, inst.features, inst.data, Split::val, 4, channels);
  const auto j = report.to_json();
  EXPECT_EQ(j["k"], 4);
  EXPECT_EQ(j["split"], "val");
  EXPECT_EQ(report.channel("m0").label, "m0");
  const std::string rows = report.csv_rows();
  EXPECT_EQ(std::count(rows.begin(), rows.end(), '\n'), 3);
  for (const auto& c : report.channels) {
    EXPECT_GE(c.recall, 0.0);
    EXPECT_LE(c.recall, 1.0);
    EXPECT_LE(c.ndcg, 1.0);
    EXPECT_LE(c.precision, 1.0);
  }
}
