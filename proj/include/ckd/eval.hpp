#pragma once
// Full-ranking top-K evaluation (Recall, NDCG, Precision) for the whole model
// and for uni-modal channels obtained by ablating the other modalities.

#include <span>
#include <string>
#include <vector>

#include "ckd/backbone.hpp"
#include "ckd/data.hpp"
#include "json.hpp"

namespace ckd {

struct TopK {
  std::vector<Index> items;
  bool truncated = false;  // fewer than k candidates were available
};

// Highest scores first, ties by ascending item index. `excluded` must be sorted.
TopK top_k(std::span<const double> scores, std::span<const Index> excluded, std::size_t k);

TopK rank_topk(const ModelParams& params, std::span<const ModalityFeatures> features, Index user,
               std::size_t k, std::span<const Index> excluded, ModalityMask keep);

// `test` must be sorted and nonempty.
double recall_at_k(std::span<const Index> topk, std::span<const Index> test);
double precision_at_k(std::span<const Index> topk, std::span<const Index> test, std::size_t k);
double ndcg_at_k(std::span<const Index> topk, std::span<const Index> test, std::size_t k);

struct Channel {
  std::string label;
  ModalityMask keep;
};

// "full" plus one channel per modality.
std::vector<Channel> default_channels(std::span<const ModalityFeatures> features);
// Labels are "full" or modality ids.
std::vector<Channel> parse_channels(std::span<const std::string> labels,
                                    std::span<const ModalityFeatures> features);

struct ChannelMetrics {
  std::string label;
  double recall = 0.0;
  double ndcg = 0.0;
  double precision = 0.0;
};

struct MetricsReport {
  std::size_t k = 20;
  std::string split;
  std::size_t n_users_evaluated = 0;
  std::size_t n_users_truncated = 0;
  std::vector<ChannelMetrics> channels;

  const ChannelMetrics& channel(const std::string& label) const;
  nlohmann::json to_json() const;
  static std::string csv_header();
  // One row per channel.
  std::string csv_rows() const;
};

// Validation excludes train items from the candidates; test excludes train
// and val. Users without items in the split are skipped.
MetricsReport evaluate(const ModelParams& params, std::span<const ModalityFeatures> features,
                       const InteractionData& data, Split split, std::size_t k,
                       std::span<const Channel> channels);

}  // namespace ckd
