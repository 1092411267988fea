#include "ckd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ckd/errors.hpp"

namespace ckd {

TopK top_k(std::span<const double> scores, std::span<const Index> excluded, std::size_t k) {
  std::vector<Index> candidates;
  candidates.reserve(scores.size());
  std::size_t e = 0;
  for (Index i = 0; i < scores.size(); ++i) {
    while (e < excluded.size() && excluded[e] < i) ++e;
    if (e < excluded.size() && excluded[e] == i) continue;
    candidates.push_back(i);
  }
  TopK out;
  out.truncated = candidates.size() < k;
  const std::size_t n = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + n, candidates.end(),
                    [&](Index a, Index b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  out.items.assign(candidates.begin(), candidates.begin() + n);
  return out;
}

TopK rank_topk(const ModelParams& params, std::span<const ModalityFeatures> features, Index user,
               std::size_t k, std::span<const Index> excluded, ModalityMask keep) {
  Scorer scorer(params, features);
  std::vector<double> scores(scorer.n_items());
  scorer.score_items(user, keep, scores);
  return top_k(scores, excluded, k);
}

namespace {

std::size_t hits(std::span<const Index> topk, std::span<const Index> test) {
  std::size_t h = 0;
  for (Index i : topk) h += std::binary_search(test.begin(), test.end(), i);
  return h;
}

}  // namespace

double recall_at_k(std::span<const Index> topk, std::span<const Index> test) {
  if (test.empty()) throw DataError("recall: empty test set");
  return static_cast<double>(hits(topk, test)) / static_cast<double>(test.size());
}

double precision_at_k(std::span<const Index> topk, std::span<const Index> test, std::size_t k) {
  if (k == 0) throw ConfigError("k must be positive");
  return static_cast<double>(hits(topk, test)) / static_cast<double>(k);
}

double ndcg_at_k(std::span<const Index> topk, std::span<const Index> test, std::size_t k) {
  if (test.empty()) throw DataError("ndcg: empty test set");
  double dcg = 0.0;
  for (std::size_t r = 0; r < topk.size() && r < k; ++r)
    if (std::binary_search(test.begin(), test.end(), topk[r]))
      dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  double idcg = 0.0;
  for (std::size_t r = 0; r < std::min(k, test.size()); ++r)
    idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  return dcg / idcg;
}

std::vector<Channel> default_channels(std::span<const ModalityFeatures> features) {
  std::vector<Channel> out{{"full", ModalityMask::all(features.size())}};
  for (std::size_t m = 0; m < features.size(); ++m)
    out.push_back({features[m].id, ModalityMask::only(m)});
  return out;
}

std::vector<Channel> parse_channels(std::span<const std::string> labels,
                                    std::span<const ModalityFeatures> features) {
  std::vector<Channel> out;
  for (const auto& label : labels) {
    if (label == "full") {
      out.push_back({label, ModalityMask::all(features.size())});
      continue;
    }
    const auto it = std::find_if(features.begin(), features.end(),
                                 [&](const ModalityFeatures& f) { return f.id == label; });
    if (it == features.end()) throw ConfigError("unknown channel '" + label + "'");
    out.push_back({label, ModalityMask::only(static_cast<std::size_t>(it - features.begin()))});
  }
  if (out.empty()) throw ConfigError("no channels selected");
  return out;
}

const ChannelMetrics& MetricsReport::channel(const std::string& label) const {
  for (const auto& c : channels)
    if (c.label == label) return c;
  throw ConfigError("report has no channel '" + label + "'");
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["split"] = split;
  j["n_users_evaluated"] = n_users_evaluated;
  j["n_users_truncated"] = n_users_truncated;
  if (!channels.empty()) {
    j["recall"] = channels.front().recall;
    j["ndcg"] = channels.front().ndcg;
    j["precision"] = channels.front().precision;
  }
  j["channels"] = nlohmann::json::array();
  for (const auto& c : channels)
    j["channels"].push_back(
        {{"label", c.label}, {"recall", c.recall}, {"ndcg", c.ndcg}, {"precision", c.precision}});
  return j;
}

std::string MetricsReport::csv_header() { return "split,k,channel,recall,ndcg,precision"; }

std::string MetricsReport::csv_rows() const {
  std::ostringstream out;
  out.precision(17);
  for (const auto& c : channels)
    out << split << ',' << k << ',' << c.label << ',' << c.recall << ',' << c.ndcg << ','
        << c.precision << '\n';
  return out.str();
}

MetricsReport evaluate(const ModelParams& params, std::span<const ModalityFeatures> features,
                       const InteractionData& data, Split split, std::size_t k,
                       std::span<const Channel> channels) {
  if (split == Split::train) throw ConfigError("evaluate: split must be val or test");
  if (k == 0) throw ConfigError("k must be positive");
  if (channels.empty()) throw ConfigError("evaluate: no channels");
  const Scorer scorer(params, features);
  MetricsReport report;
  report.k = k;
  report.split = split == Split::val ? "val" : "test";
  for (const auto& c : channels) report.channels.push_back({c.label, 0.0, 0.0, 0.0});

  std::vector<double> scores(data.n_items);
  std::vector<Index> excluded;
  for (Index u = 0; u < data.n_users; ++u) {
    const auto& target = data.items_of(u, split);
    if (target.empty()) continue;
    excluded = data.train[u];
    if (split == Split::test) {
      excluded.insert(excluded.end(), data.val[u].begin(), data.val[u].end());
      std::sort(excluded.begin(), excluded.end());
    }
    ++report.n_users_evaluated;
    bool truncated = false;
    for (std::size_t c = 0; c < channels.size(); ++c) {
      scorer.score_items(u, channels[c].keep, scores);
      const TopK top = top_k(scores, excluded, k);
      truncated = truncated || top.truncated;
      report.channels[c].recall += recall_at_k(top.items, target);
      report.channels[c].ndcg += ndcg_at_k(top.items, target, k);
      report.channels[c].precision += precision_at_k(top.items, target, k);
    }
    report.n_users_truncated += truncated;
  }
  if (report.n_users_evaluated == 0) throw DataError("evaluate: no users with items in split");
  const double n = static_cast<double>(report.n_users_evaluated);
  for (auto& c : report.channels) {
    c.recall /= n;
    c.ndcg /= n;
    c.precision /= n;
  }
  return report;
}

}  // namespace ckd
